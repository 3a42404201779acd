//! Berry connection and curvature on the vortex moduli bundle, discrete
//! parallel transport along divisor loops, Coulomb gauge fixing and the
//! large-area rescaling.

use crate::error::{Error, Result};
use crate::lattice::{
    chern_degree, torus_dist, ComplexField, GaugeTransform, LinkField, OneForm, ScalarField,
    TangentVector, TorusGrid, C64, I,
};
use crate::linops::{apply_l, green_scalar, green_with_mass};
use crate::loops::{
    crossing_delta, crossing_probe, shadow, winding, CyclePath, LoopPath, Shadow,
};
use crate::tangent::{chi, rho_min, Frame};
use crate::vortex::{
    cell_average, solve_vortex_from, vortex_residual_of, SolveOptions, VortexField,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

/// `A(a, ψ)/i = −½ G(d*b + Im(conj(ψ) φ))` for `a = i b`.
pub fn connection_form(field: &VortexField, t: &TangentVector) -> Result<ComplexField> {
    let b = t.one_form();
    let divb = b.codifferential(&field.grid);
    let rhs: Vec<C64> = (0..field.grid.sites())
        .map(|k| C64::new(divb[k] + (t.psi[k].conj() * field.phi[k]).im, 0.0))
        .collect();
    let u = green_scalar(field, &rhs)?;
    Ok(u.iter().map(|v| I * (-0.5 * v.re)).collect())
}

/// Vertical tangent vector generated by the real function `f`:
/// `a = −i df`, `ψ = i f φ`.
pub fn vertical_vector(field: &VortexField, f: &[f64]) -> TangentVector {
    let df = crate::lattice::exterior_derivative(f, &field.grid);
    let b = OneForm { x: df.x.iter().map(|v| -v).collect(), y: df.y.iter().map(|v| -v).collect() };
    let psi = field.phi.iter().zip(f).map(|(p, &v)| I * v * p).collect();
    TangentVector::from_one_form(&b, psi)
}

/// `Ω(x1, x2) = i G(Im(conj(ψ₁) ψ₂))`; inputs must be horizontal.
pub fn curvature_pair(field: &VortexField, x1: &TangentVector, x2: &TangentVector) -> Result<ComplexField> {
    for x in [x1, x2] {
        let lx = apply_l(field, x)?;
        let ln = lx.norm(&field.grid);
        let xn = x.norm(&field.grid);
        if ln > 1e-6 * xn.max(1e-300) {
            return Err(Error::Precondition(format!(
                "curvature input is not horizontal: |Lx|/|x| = {:.2e}",
                ln / xn
            )));
        }
    }
    curvature_pair_unchecked(field, x1, x2)
}

pub fn curvature_pair_unchecked(field: &VortexField, x1: &TangentVector, x2: &TangentVector) -> Result<ComplexField> {
    let rhs: Vec<C64> = x1
        .psi
        .iter()
        .zip(&x2.psi)
        .map(|(a, b)| C64::new((a.conj() * b).im, 0.0))
        .collect();
    let u = green_scalar(field, &rhs)?;
    Ok(u.iter().map(|v| I * v.re).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    #[serde(skip)]
    pub diag_profile: ScalarField,
    #[serde(skip)]
    pub predicted: ScalarField,
    /// `[A, B, C]`: sup of `Ω(X_p, X_q)/i` and `Ω(X_p, iX_q)/i` over `p ≠ q`,
    /// and sup of the diagonal error.
    pub coeff_bounds: [f64; 3],
    pub disk_integral: f64,
    pub min_diag: f64,
    /// `sup |diag − predicted| / sup(w/(πτ))`.
    pub rel_sup_error: f64,
}

pub fn curvature_report(field: &VortexField, frame: &Frame) -> Result<CurvatureReport> {
    let g = &field.grid;
    let d = field.d();
    let rho = rho_min(&field.divisor, g);
    let scale = 1.0 / (PI * field.tau);
    let mut diag = vec![0.0; g.sites()];
    let mut pred = vec![0.0; g.sites()];
    let mut c_bound = 0.0f64;
    for (p, x) in frame.x.iter().enumerate() {
        let om = curvature_pair_unchecked(field, x, &x.scale(I))?;
        let pp = field.divisor.points[p];
        for k in 0..g.sites() {
            let c = chi(2.0 * torus_dist(g.coords(k), pp, g) / rho);
            let pr = c * field.w[k] * scale;
            c_bound = c_bound.max((om[k].im - pr).abs());
            diag[k] += om[k].im;
            pred[k] += pr;
        }
    }
    let (mut a_bound, mut b_bound) = (0.0f64, 0.0f64);
    for p in 0..d {
        for q in 0..d {
            if p == q {
                continue;
            }
            let oa = curvature_pair_unchecked(field, &frame.x[p], &frame.x[q])?;
            let ob = curvature_pair_unchecked(field, &frame.x[p], &frame.x[q].scale(I))?;
            a_bound = a_bound.max(oa.iter().map(|v| v.im.abs()).fold(0.0, f64::max));
            b_bound = b_bound.max(ob.iter().map(|v| v.im.abs()).fold(0.0, f64::max));
        }
    }
    let wmax = field.w.iter().cloned().fold(0.0, f64::max) * scale;
    let err = diag.iter().zip(&pred).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dist = crate::lattice::dist_to_divisor(&field.divisor, g);
    let disk: f64 = (0..g.sites()).filter(|&k| dist[k] <= 0.5 * rho).map(|k| diag[k]).sum::<f64>() * g.spacing.powi(2);
    Ok(CurvatureReport {
        min_diag: diag.iter().cloned().fold(f64::INFINITY, f64::min),
        diag_profile: diag,
        predicted: pred,
        coeff_bounds: [a_bound, b_bound, c_bound],
        disk_integral: disk,
        rel_sup_error: err / wmax,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    pub solve: SolveOptions,
    /// Distance from the shadow beyond which `g` is compared with 1.
    pub margin: f64,
    pub probe_length: f64,
    /// Repeat at twice the steps and require agreement.
    pub richardson: bool,
    pub richardson_tol: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            solve: SolveOptions::default(),
            margin: 0.1,
            probe_length: 0.3,
            richardson: true,
            richardson_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HolonomyReport {
    #[serde(skip)]
    pub g: GaugeTransform,
    #[serde(skip)]
    pub phase_field: ScalarField,
    pub sup_off_shadow: f64,
    pub crossing_deltas: Vec<f64>,
    pub winding: BTreeMap<String, i64>,
    pub steps: usize,
    pub closure_correction_winding: BTreeMap<String, i64>,
    pub richardson_phase_diff: Option<f64>,
    /// Mean of the phase field inside / outside a contractible shadow, at
    /// sites farther than the margin from it.
    pub inside_mean: Option<f64>,
    pub outside_mean: Option<f64>,
    pub shadow_homology: (i64, i64),
}

/// Vertical generator `f` of the step between two consecutive lifts, with a
/// metric scale `s2` (`s2 = 1` for the ordinary metric): the connection form
/// of the midpoint velocity.
pub fn step_generator(
    grid: &TorusGrid,
    l0: &LinkField,
    p0: &[C64],
    l1: &LinkField,
    p1: &[C64],
    dt: f64,
    s2: f64,
) -> Result<ScalarField> {
    let b = l1.relative_velocity(l0, grid, dt);
    let divb = b.codifferential(grid);
    let n = grid.sites();
    let mut rhs = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    let mut zero = true;
    for k in 0..n {
        let psi = (p1[k] - p0[k]) / dt;
        let pm = (p0[k] + p1[k]) * 0.5;
        let r = divb[k] / s2 + (psi.conj() * pm).im;
        zero &= r == 0.0;
        rhs.push(C64::new(r, 0.0));
        mass.push(pm.norm_sqr());
    }
    if zero {
        return Ok(vec![0.0; n]);
    }
    let u = green_with_mass(grid, &mass, s2, &rhs)?;
    Ok(u.iter().map(|v| -0.5 * v.re).collect())
}

/// Pointwise gauge transformation relating two vortices with the same
/// divisor: the unit ratio `φ₁/φ₀` where both are large, propagated through
/// the links elsewhere.
pub fn closure_gauge(f0: &LinkField, p0: &[C64], f1: &LinkField, p1: &[C64], tau: f64, grid: &TorusGrid) -> Result<GaugeTransform> {
    let n = grid.sites();
    let mut g: Vec<Option<C64>> = vec![None; n];
    let mut queue = VecDeque::new();
    for k in 0..n {
        if p0[k].norm_sqr() >= 0.25 * tau && p1[k].norm_sqr() >= 0.25 * tau {
            let r = p1[k] * p0[k].conj();
            g[k] = Some(r / r.norm());
            queue.push_back(k);
        }
    }
    if queue.is_empty() {
        return Err(Error::LoopClosure("no site with |φ|² ≥ τ/4".into()));
    }
    while let Some(k) = queue.pop_front() {
        let gk = g[k].unwrap();
        let (xp, xm, yp, ym) = (grid.xp(k), grid.xm(k), grid.yp(k), grid.ym(k));
        let nb = [
            (xp, f1.x[k] * gk * f0.x[k].conj()),
            (yp, f1.y[k] * gk * f0.y[k].conj()),
            (xm, f1.x[xm].conj() * gk * f0.x[xm]),
            (ym, f1.y[ym].conj() * gk * f0.y[ym]),
        ];
        for (j, v) in nb {
            if g[j].is_none() {
                g[j] = Some(v / v.norm());
                queue.push_back(j);
            }
        }
    }
    let g: Vec<C64> = g.into_iter().map(|v| v.unwrap()).collect();
    let mismatch = (0..n).map(|k| (p1[k] - g[k] * p0[k]).norm()).fold(0.0, f64::max) / tau.sqrt();
    if mismatch > 1e-6 {
        return Err(Error::LoopClosure(format!(
            "returned lift is not gauge equivalent to the start (mismatch {mismatch:.2e})"
        )));
    }
    Ok(GaugeTransform::from_values(g))
}

/// Accumulated vertical phase `Φ` and the closure gauge along a loop.
/// `gauge`, when present, is applied to every lift (for invariance tests);
/// `s2` rescales the metric as in the large-area picture.
pub fn accumulate_phase(
    path: &LoopPath,
    tau: f64,
    grid: &TorusGrid,
    opts: &SolveOptions,
    gauge: Option<&GaugeTransform>,
    s2: f64,
) -> Result<(ScalarField, GaugeTransform)> {
    let k_steps = path.samples;
    let dt = 1.0 / k_steps as f64;
    let scale = 1.0 / s2.sqrt();
    let lift = |t: f64, warm: Option<&[f64]>| -> Result<VortexField> {
        let (f, _) = solve_vortex_from(&path.divisor_at(t), tau, grid, opts, warm)?;
        let f = match gauge {
            Some(g) => f.gauge_apply(g),
            None => f,
        };
        Ok(f)
    };
    let first = lift(0.0, None)?;
    let mut prev = first.clone();
    let mut prev_div = path.divisor_at(0.0);
    let mut phi = vec![0.0; grid.sites()];
    let sphi = |f: &VortexField| -> Vec<C64> { f.phi.iter().map(|p| p * scale).collect() };
    for k in 0..k_steps {
        let t = (k + 1) as f64 / k_steps as f64;
        let div = path.divisor_at(t);
        let next = if div == prev_div { prev.clone() } else { lift(t, Some(&prev.smooth_part))? };
        let f = step_generator(grid, &prev.links, &sphi(&prev), &next.links, &sphi(&next), dt, s2)?;
        for (a, b) in phi.iter_mut().zip(&f) {
            *a += b * dt;
        }
        prev = next;
        prev_div = div;
    }
    let gc = closure_gauge(&first.links, &first.phi, &prev.links, &prev.phi, tau, grid)?;
    Ok((phi, gc))
}

fn holonomy_from(phi: &[f64], gc: &GaugeTransform) -> GaugeTransform {
    let g = phi.iter().zip(&gc.g).map(|(f, c)| C64::from_polar(1.0, *f) * c.conj()).collect();
    GaugeTransform::from_values(g)
}

/// Winding number of closed polylines about `x` (minimal-image angles).
pub fn shadow_index(sh: &Shadow, x: [f64; 2], grid: &TorusGrid) -> f64 {
    let l = grid.side_length;
    let wrap = |v: f64| (v + 0.5 * l).rem_euclid(l) - 0.5 * l;
    let mut s = 0.0;
    for pl in &sh.polylines {
        for w in pl.windows(2) {
            let a = [wrap(w[0][0] - x[0]), wrap(w[0][1] - x[1])];
            let b = [a[0] + w[1][0] - w[0][0], a[1] + w[1][1] - w[0][1]];
            s += (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
        }
    }
    s / (2.0 * PI)
}

pub fn parallel_transport(
    path: &LoopPath,
    tau: f64,
    grid: &TorusGrid,
    cycles: &[CyclePath],
    probes: &[Vec<[f64; 2]>],
    opts: &TransportOptions,
) -> Result<HolonomyReport> {
    parallel_transport_gauged(path, tau, grid, cycles, probes, opts, None)
}

pub fn parallel_transport_gauged(
    path: &LoopPath,
    tau: f64,
    grid: &TorusGrid,
    cycles: &[CyclePath],
    probes: &[Vec<[f64; 2]>],
    opts: &TransportOptions,
    gauge: Option<&GaugeTransform>,
) -> Result<HolonomyReport> {
    transport_impl(path, tau, grid, cycles, probes, opts, gauge, 1.0)
}

#[allow(clippy::too_many_arguments)]
fn transport_impl(
    path: &LoopPath,
    tau: f64,
    grid: &TorusGrid,
    cycles: &[CyclePath],
    probes: &[Vec<[f64; 2]>],
    opts: &TransportOptions,
    gauge: Option<&GaugeTransform>,
    s2: f64,
) -> Result<HolonomyReport> {
    if path.samples < 64 {
        return Err(Error::Config(format!("transport needs at least 64 steps, got {}", path.samples)));
    }
    path.check_closed(grid)?;
    path.check_regular(grid)?;
    let sh = shadow(path, grid)?;

    let (phi_c, gc_c) = accumulate_phase(path, tau, grid, &opts.solve, gauge, s2)?;
    let g_c = holonomy_from(&phi_c, &gc_c);
    let (phi, gc, g, steps, rich) = if opts.richardson {
        let fine = path.with_samples(2 * path.samples);
        let (phi_f, gc_f) = accumulate_phase(&fine, tau, grid, &opts.solve, gauge, s2)?;
        let g_f = holonomy_from(&phi_f, &gc_f);
        let dist = sh.distance_field(grid);
        let diff = (0..grid.sites())
            .filter(|&k| dist[k] >= opts.margin)
            .map(|k| (g_f.g[k] * g_c.g[k].conj()).arg().abs() / (2.0 * PI))
            .fold(0.0, f64::max);
        for c in cycles {
            if winding(&g_c, c, grid)? != winding(&g_f, c, grid)? {
                return Err(Error::Accuracy(format!("winding along {} changes under step doubling", c.name)));
            }
        }
        if diff > opts.richardson_tol {
            return Err(Error::Accuracy(format!(
                "holonomy phase changes by {diff:.2e} under step doubling"
            )));
        }
        (phi_f, gc_f, g_f, 2 * path.samples, Some(diff))
    } else {
        (phi_c, gc_c, g_c, path.samples, None)
    };

    let dist = sh.distance_field(grid);
    let sup_off = (0..grid.sites())
        .filter(|&k| dist[k] >= opts.margin)
        .map(|k| (g.g[k] - 1.0).norm())
        .fold(0.0, f64::max);
    let mut wind = BTreeMap::new();
    let mut cwind = BTreeMap::new();
    let gci = gc.inverse();
    for c in cycles {
        wind.insert(c.name.clone(), winding(&g, c, grid)?);
        cwind.insert(c.name.clone(), winding(&gci, c, grid)?);
    }
    let mut probe_list: Vec<Vec<[f64; 2]>> = probes.to_vec();
    if probe_list.is_empty() {
        for i in 0..sh.polylines.len() {
            if let Some((p, _)) = crossing_probe(&sh, i, 0.25, opts.probe_length) {
                probe_list.push(p);
            }
        }
    }
    let crossing = probe_list
        .iter()
        .map(|p| crossing_delta(&g, p, grid))
        .collect::<Result<Vec<f64>>>()?;
    let phase_field: ScalarField = phi.iter().map(|v| v / (2.0 * PI)).collect();
    let (mut inside, mut outside) = (None, None);
    if sh.homology_class == (0, 0) && !sh.is_empty() {
        let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
        for k in 0..grid.sites() {
            if dist[k] < opts.margin {
                continue;
            }
            if shadow_index(&sh, grid.coords(k), grid).abs() > 0.5 {
                si += phase_field[k];
                ni += 1;
            } else {
                so += phase_field[k];
                no += 1;
            }
        }
        inside = (ni > 0).then(|| si / ni as f64);
        outside = (no > 0).then(|| so / no as f64);
    }
    Ok(HolonomyReport {
        g,
        phase_field,
        sup_off_shadow: sup_off,
        crossing_deltas: crossing,
        winding: wind,
        steps,
        closure_correction_winding: cwind,
        richardson_phase_diff: rich,
        inside_mean: inside,
        outside_mean: outside,
        shadow_homology: sh.homology_class,
    })
}

/// Gauge transformation into Coulomb gauge relative to `reference`,
/// normalized to 1 at `basepoint`.
pub fn coulomb_fix(field: &VortexField, reference: &VortexField, basepoint: usize) -> Result<(GaugeTransform, VortexField)> {
    let g = &field.grid;
    if g != &reference.grid {
        return Err(Error::Precondition("fields live on different grids".into()));
    }
    if chern_degree(&field.links, g)? != chern_degree(&reference.links, g)? {
        return Err(Error::Precondition("fields have different degrees".into()));
    }
    let c = field.links.relative_velocity(&reference.links, g, 1.0);
    let dc = c.codifferential(g);
    let sym = g.lap5_symbol();
    let mult: Vec<C64> = sym.iter().map(|&s| C64::new(if s > 0.0 { 1.0 / s } else { 0.0 }, 0.0)).collect();
    let mut theta = g.fft().filter_real(&dc, &mult);
    let t0 = theta[basepoint];
    for t in theta.iter_mut() {
        *t -= t0;
    }
    let gt = GaugeTransform::from_phase(theta.iter().map(|t| t / (2.0 * PI)).collect());
    let fixed = field.gauge_apply(&gt);
    Ok((gt, fixed))
}

/// `sup |d*(a − a_ref)|`.
pub fn coulomb_residual(field: &VortexField, reference: &VortexField) -> f64 {
    let c = field.links.relative_velocity(&reference.links, &field.grid, 1.0);
    c.codifferential(&field.grid).iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// A 1-vortex for the area form `t²ω`: `(∇, φ/t)` built from a τ-vortex with
/// `τ = t²`.
#[derive(Clone, Debug)]
pub struct LargeAreaField {
    pub grid: TorusGrid,
    pub t: f64,
    pub phi: ComplexField,
    pub links: LinkField,
}

pub fn rescale_large_area(field: &VortexField, t: f64) -> Result<LargeAreaField> {
    if !(t > 0.0) {
        return Err(Error::Domain("scale must be positive".into()));
    }
    Ok(LargeAreaField {
        grid: field.grid.clone(),
        t,
        phi: field.phi.iter().map(|p| p / t).collect(),
        links: field.links.clone(),
    })
}

impl LargeAreaField {
    /// Sup residuals of `iΛ_t F = ½(1 − |φ|²)` and `∂̄φ = 0`.
    pub fn residuals(&self) -> (f64, f64) {
        let t2 = self.t * self.t;
        let e2 = self.grid.spacing.powi(2);
        let w: Vec<f64> = self.phi.iter().map(|p| 0.5 * (1.0 - p.norm_sqr())).collect();
        let wp = cell_average(&w, &self.grid);
        let th = self.links.plaquette_angles(&self.grid);
        let r1 = th.iter().zip(&wp).map(|(a, b)| (a / (e2 * t2) - b).abs()).fold(0.0, f64::max);
        let (_, r2) = vortex_residual_of(&self.grid, 1.0, &self.links, &self.phi);
        (r1, r2.into_iter().fold(0.0, f64::max))
    }

    /// `Φ_t(∇, φ) = (∇, tφ)`, back to a τ-vortex with `τ = t²`.
    pub fn to_tau_vortex(&self) -> (LinkField, ComplexField) {
        (self.links.clone(), self.phi.iter().map(|p| p * self.t).collect())
    }

    /// Metric of the `t²ω` picture: `ε² Σ (|α|² + t²|ψ|²)`.
    pub fn norm(&self, x: &TangentVector) -> f64 {
        let t2 = self.t * self.t;
        let s: f64 = x.alpha.iter().zip(&x.psi).map(|(a, p)| a.norm_sqr() + t2 * p.norm_sqr()).sum();
        (self.grid.spacing.powi(2) * s).sqrt()
    }

    /// Push-forward `(Φ_t)_*(α, ψ) = (α, tψ)`.
    pub fn push_forward(&self, x: &TangentVector) -> TangentVector {
        TangentVector { alpha: x.alpha.clone(), psi: x.psi.iter().map(|p| p * self.t).collect() }
    }
}

/// Holonomy computed entirely in the rescaled picture (`τ = 1`, area form
/// `t²ω`), with lifts obtained from the τ-vortex solver.
pub fn parallel_transport_large_area(
    path: &LoopPath,
    t: f64,
    grid: &TorusGrid,
    cycles: &[CyclePath],
    probes: &[Vec<[f64; 2]>],
    opts: &TransportOptions,
) -> Result<HolonomyReport> {
    transport_impl(path, t * t, grid, cycles, probes, opts, None, t * t)
}
