//! Localized approximate tangent vectors `Y`, their horizontal projections
//! `X` and the moduli frame `{X_p, i X_p}`.

use crate::error::{Error, Result};
use crate::lattice::{
    cov_dx, cov_dy, dist_to_divisor, torus_dist, ComplexField, Divisor, ScalarField, TangentVector,
    TorusGrid, C64, I,
};
use crate::linops::{HorizontalProjector, HorizontalSolveReport};
use crate::vortex::{fit_decay, DecayFit, VortexField};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, SQRT_2};

pub fn rho_min(divisor: &Divisor, grid: &TorusGrid) -> f64 {
    let mut r = 0.5 * grid.side_length;
    for a in 0..divisor.points.len() {
        for b in a + 1..divisor.points.len() {
            r = r.min(torus_dist(divisor.points[a], divisor.points[b], grid));
        }
    }
    r
}

/// Cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`, quintic smoothstep between (C²).
pub fn chi(s: f64) -> f64 {
    let t = (s - 1.0).clamp(0.0, 1.0);
    1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentSeed {
    pub divisor: Divisor,
    pub theta: Vec<C64>,
}

impl TangentSeed {
    /// `θ_q = δ_{pq}`.
    pub fn unit(divisor: &Divisor, p: usize) -> Self {
        let theta = (0..divisor.d())
            .map(|q| if q == p { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .collect();
        TangentSeed { divisor: divisor.clone(), theta }
    }
}

/// Continuous value of the bump section at an arbitrary point.
pub fn bump_value(seed: &TangentSeed, x: [f64; 2], grid: &TorusGrid) -> C64 {
    let rho = rho_min(&seed.divisor, grid);
    seed.divisor
        .points
        .iter()
        .zip(&seed.theta)
        .map(|(&p, &t)| t * chi(2.0 * torus_dist(x, p, grid) / rho))
        .sum()
}

pub fn bump_section(divisor: &Divisor, seed: &TangentSeed, grid: &TorusGrid) -> Result<ComplexField> {
    if seed.theta.len() != divisor.d() {
        return Err(Error::Config("seed length differs from divisor degree".into()));
    }
    let rho = rho_min(divisor, grid);
    if rho <= 4.0 * grid.spacing {
        return Err(Error::Config(format!("cutoff radius {rho} is not resolved by the grid")));
    }
    let s = TangentSeed { divisor: divisor.clone(), theta: seed.theta.clone() };
    Ok((0..grid.sites()).map(|k| bump_value(&s, grid.coords(k), grid)).collect())
}

/// `(D_x − i D_y) φ`, twice the (1,0) covariant derivative.
fn d_holo(field: &VortexField) -> ComplexField {
    let dx = cov_dx(&field.links, &field.phi, &field.grid);
    let dy = cov_dy(&field.links, &field.phi, &field.grid);
    dx.iter().zip(&dy).map(|(a, b)| a - I * b).collect()
}

/// `h = (½|(D_x − iD_y)φ|² + 2w²) / (2πτ)`.
pub fn density_h(field: &VortexField) -> ScalarField {
    let c = 1.0 / (2.0 * PI * field.tau);
    d_holo(field)
        .iter()
        .zip(&field.w)
        .map(|(g, w)| c * (0.5 * g.norm_sqr() + 2.0 * w * w))
        .collect()
}

pub fn h_mass(field: &VortexField) -> f64 {
    field.grid.spacing.powi(2) * density_h(field).iter().sum::<f64>()
}

/// `Y = (2πτ)^{-1/2} (√2 w σ, σ (D_x − iD_y)φ / √2)`.
pub fn approximate_tangent(field: &VortexField, seed: &TangentSeed) -> Result<TangentVector> {
    let sigma = bump_section(&field.divisor, seed, &field.grid)?;
    let c = 1.0 / (2.0 * PI * field.tau).sqrt();
    let g = d_holo(field);
    Ok(TangentVector {
        alpha: sigma.iter().zip(&field.w).map(|(s, w)| s * (SQRT_2 * w * c)).collect(),
        psi: sigma.iter().zip(&g).map(|(s, g)| s * g * (c / SQRT_2)).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HorizontalRow {
    pub y_norm_sq: f64,
    pub x_norm_sq: f64,
    /// sup |X − Y| over sites with `dist_D ≥ 3/√τ`.
    pub sup_xy_diff: f64,
    /// sup |X − Y| over all sites.
    pub sup_xy_diff_all: f64,
    pub solve: HorizontalSolveReport,
}

pub fn horizontal_tangent(field: &VortexField, seed: &TangentSeed) -> Result<(TangentVector, HorizontalRow)> {
    let proj = HorizontalProjector::new(field)?;
    horizontal_tangent_with(field, &proj, seed).map(|(x, _, r)| (x, r))
}

/// Returns `(X, Y, row)`.
pub fn horizontal_tangent_with(
    field: &VortexField,
    proj: &HorizontalProjector,
    seed: &TangentSeed,
) -> Result<(TangentVector, TangentVector, HorizontalRow)> {
    let y = approximate_tangent(field, seed)?;
    let (_, x, solve) = proj.project(field, &y)?;
    let diff = x.sub(&y).pointwise_norm();
    let dist = dist_to_divisor(&field.divisor, &field.grid);
    let lo = 3.0 / field.tau.sqrt();
    let sup_far = (0..diff.len()).filter(|&k| dist[k] >= lo).map(|k| diff[k]).fold(0.0, f64::max);
    let row = HorizontalRow {
        y_norm_sq: y.norm(&field.grid).powi(2),
        x_norm_sq: x.norm(&field.grid).powi(2),
        sup_xy_diff: sup_far,
        sup_xy_diff_all: diff.iter().cloned().fold(0.0, f64::max),
        solve,
    };
    Ok((x, y, row))
}

/// Sites entering the `|X − Y|` decay fit: `dist_D ≥ ρ_D`, beyond the
/// support of the cutoff.
pub fn xy_decay_fit(field: &VortexField, diff: &[f64]) -> Result<DecayFit> {
    let dist = dist_to_divisor(&field.divisor, &field.grid);
    let rho = rho_min(&field.divisor, &field.grid);
    let samples = (0..diff.len())
        .filter(|&k| dist[k] >= rho)
        .map(|k| (dist[k], diff[k]))
        .collect();
    fit_decay(samples, field.tau, 20)
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameReport {
    /// Gram matrix over `{X_1, iX_1, X_2, iX_2, …}`.
    pub gram: Vec<Vec<f64>>,
    pub gram_deviation: f64,
    pub y_norms: Vec<f64>,
    pub sup_xy_diff: Vec<f64>,
    pub decay: Option<DecayFit>,
    pub rows: Vec<HorizontalRow>,
}

/// Frame vectors and their approximations, one per divisor point.
#[derive(Clone, Debug)]
pub struct Frame {
    pub x: Vec<TangentVector>,
    pub y: Vec<TangentVector>,
    pub report: FrameReport,
}

impl Frame {
    /// `{X_1, iX_1, …}` in Gram order.
    pub fn basis(&self) -> Vec<TangentVector> {
        self.x.iter().flat_map(|x| [x.clone(), x.scale(I)]).collect()
    }
}

pub fn build_frame(field: &VortexField, proj: &HorizontalProjector) -> Result<Frame> {
    let d = field.d();
    if d == 0 {
        return Err(Error::Precondition("frame requires a non-empty divisor".into()));
    }
    let parts: Vec<Result<(TangentVector, TangentVector, HorizontalRow)>> = (0..d)
        .into_par_iter()
        .map(|p| horizontal_tangent_with(field, proj, &TangentSeed::unit(&field.divisor, p)))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = Vec::new();
    for part in parts {
        let (x, y, r) = part?;
        xs.push(x);
        ys.push(y);
        rows.push(r);
    }
    let basis: Vec<TangentVector> = xs.iter().flat_map(|x| [x.clone(), x.scale(I)]).collect();
    let gram: Vec<Vec<f64>> = basis
        .iter()
        .map(|u| basis.iter().map(|v| crate::lattice::l2_inner(u, v, &field.grid)).collect())
        .collect();
    let mut dev = 0.0f64;
    for (i, row) in gram.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            dev = dev.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let mut diff = vec![0.0; field.grid.sites()];
    for (x, y) in xs.iter().zip(&ys) {
        for (o, v) in diff.iter_mut().zip(x.sub(y).pointwise_norm()) {
            *o += v;
        }
    }
    let decay = xy_decay_fit(field, &diff).ok();
    let report = FrameReport {
        gram,
        gram_deviation: dev,
        y_norms: rows.iter().map(|r| r.y_norm_sq).collect(),
        sup_xy_diff: rows.iter().map(|r| r.sup_xy_diff).collect(),
        decay,
        rows,
    };
    Ok(Frame { x: xs, y: ys, report })
}

pub fn tangent_frame(field: &VortexField) -> Result<FrameReport> {
    let proj = HorizontalProjector::new(field)?;
    Ok(build_frame(field, &proj)?.report)
}
