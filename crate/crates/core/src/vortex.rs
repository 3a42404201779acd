//! τ-vortex solver on the lattice torus.
//!
//! The modulus is obtained from the scalar equation `Δh + e^h = τ` away from
//! the divisor, written as `h = log|f|² + 2Q + log c + v` with `f` a product of
//! Jacobi theta functions vanishing simply at the divisor and `Q` the quadratic
//! automorphy correction; Newton iterations solve for the smooth periodic `v`.
//! The phase of `φ` is the phase of `f`, and the links integrate the
//! connection `A = ½ ⋆dv + (background)` exactly over each link in Fourier
//! space, so the plaquette angles reproduce `½ Δh` to round-off.

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::krylov::pcg;
use crate::lattice::{
    chern_degree, cov_dx, cov_dy, dist_to_divisor, ComplexField, Divisor, LinkField, ScalarField,
    TorusGrid, C64, I,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::time::Instant;

const THETA_NOME: f64 = 0.043_213_918_263_772_25; // e^{-π}
const THETA_TERMS: usize = 8;

pub fn bradlow_limit(d: i64, area: f64) -> Result<f64> {
    if d <= 0 {
        return Err(Error::Domain(format!("degree must be positive, got {d}")));
    }
    if !(area > 0.0) {
        return Err(Error::Domain(format!("area must be positive, got {area}")));
    }
    Ok(4.0 * PI * d as f64 / area)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Contract for the curvature-equation residual, relative to τ.
    pub tol: f64,
    /// Newton stopping threshold on the scalar equation, relative to τ.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Reject grids with `spacing > 0.2/√τ`.
    pub enforce_resolution: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, newton_tol: 1e-10, max_newton: 50, enforce_resolution: true }
    }
}

impl SolveOptions {
    pub fn relaxed(tol: f64) -> Self {
        SolveOptions { tol, enforce_resolution: false, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
pub struct VortexField {
    pub grid: TorusGrid,
    pub tau: f64,
    pub divisor: Divisor,
    pub phi: ComplexField,
    pub links: LinkField,
    pub w: ScalarField,
    /// `sup |iΛF − w| / τ`.
    pub residual_sup: f64,
    /// `sup |∂̄_∇ φ| / √τ`.
    pub dbar_sup: f64,
    /// Smooth Newton unknown, reusable as a warm start.
    pub smooth_part: ScalarField,
}

#[derive(Clone, Debug, Serialize)]
pub struct TaubesSolveReport {
    pub newton_iterations: usize,
    pub final_residual: f64,
    #[serde(skip)]
    pub h_field: ScalarField,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c_fit: f64,
    pub exponent_fit: f64,
    pub r_squared: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Least-squares fit of `log value = log A − κ·dist`; `c_fit = A/τ`.
pub fn fit_decay(samples: Vec<(f64, f64)>, tau: f64, min_samples: usize) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.1 > 0.0).map(|&(x, v)| (x, v.ln())).collect();
    if pts.len() < min_samples {
        return Err(Error::Diagnostic(format!(
            "only {} decay samples, need {min_samples}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Diagnostic("degenerate decay window".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit { c_fit: icpt.exp() / tau, exponent_fit: -slope, r_squared: r2, samples })
}

fn theta1(u: C64) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for m in 0..THETA_TERMS {
        let mf = m as f64;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        s += (u * (2.0 * mf + 1.0)).sin() * (sign * THETA_NOME.powf((mf + 0.5).powi(2)));
    }
    s * 2.0
}

/// Continuum Laplacian symbol `|k|²` and the exact link-integration
/// multipliers `∫₀^ε e^{ik s} ds` along x and y.
struct Spectral {
    fft: Fft2,
    k2: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    ix: Vec<C64>,
    iy: Vec<C64>,
}

impl Spectral {
    fn new(grid: &TorusGrid) -> Self {
        let (kx, ky) = grid.wavenumbers();
        let e = grid.spacing;
        let int = |k: f64| {
            if k == 0.0 {
                C64::new(e, 0.0)
            } else {
                ((I * k * e).exp() - 1.0) / (I * k)
            }
        };
        Spectral {
            fft: grid.fft(),
            k2: kx.iter().zip(&ky).map(|(a, b)| a * a + b * b).collect(),
            ix: kx.iter().map(|&k| int(k)).collect(),
            iy: ky.iter().map(|&k| int(k)).collect(),
            kx,
            ky,
        }
    }

    fn laplacian(&self, v: &[f64]) -> Vec<f64> {
        let m: Vec<C64> = self.k2.iter().map(|&k| C64::new(k, 0.0)).collect();
        self.fft.filter_real(v, &m)
    }
}

fn trivial_vortex(grid: &TorusGrid, tau: f64) -> (VortexField, TaubesSolveReport) {
    let n = grid.sites();
    let field = VortexField {
        grid: grid.clone(),
        tau,
        divisor: Divisor::empty(),
        phi: vec![C64::new(tau.sqrt(), 0.0); n],
        links: LinkField::trivial(grid),
        w: vec![0.0; n],
        residual_sup: 0.0,
        dbar_sup: 0.0,
        smooth_part: vec![0.0; n],
    };
    let report = TaubesSolveReport {
        newton_iterations: 0,
        final_residual: 0.0,
        h_field: vec![tau.ln(); n],
        wall_time: 0.0,
    };
    (field, report)
}

pub fn solve_vortex(
    divisor: &Divisor,
    tau: f64,
    grid: &TorusGrid,
    opts: &SolveOptions,
) -> Result<(VortexField, TaubesSolveReport)> {
    solve_vortex_from(divisor, tau, grid, opts, None)
}

/// As [`solve_vortex`], optionally warm-starting Newton from a previous
/// smooth part.
pub fn solve_vortex_from(
    divisor: &Divisor,
    tau: f64,
    grid: &TorusGrid,
    opts: &SolveOptions,
    warm: Option<&[f64]>,
) -> Result<(VortexField, TaubesSolveReport)> {
    let start = Instant::now();
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let d = divisor.d();
    if d == 0 {
        return Ok(trivial_vortex(grid, tau));
    }
    let tau0 = bradlow_limit(d as i64, grid.area)?;
    if tau <= tau0 {
        return Err(Error::Domain(format!("below Bradlow limit: tau = {tau}, tau0 = {tau0}")));
    }
    divisor.validate(grid)?;
    if opts.enforce_resolution && grid.spacing > 0.2 / tau.sqrt() {
        return Err(Error::Config(format!(
            "grid does not resolve the core scale: spacing {} > 0.2/sqrt(tau) = {}",
            grid.spacing,
            0.2 / tau.sqrt()
        )));
    }

    let n = grid.n;
    let ns = grid.sites();
    let l = grid.side_length;
    let area = grid.area;
    let e = grid.spacing;
    let df = d as f64;
    let sx: f64 = divisor.points.iter().map(|p| p[0]).sum();
    let sy: f64 = divisor.points.iter().map(|p| p[1]).sum();

    let mut f = vec![C64::new(1.0, 0.0); ns];
    let mut q = vec![0.0; ns];
    for k in 0..ns {
        let [x, y] = grid.coords(k);
        let z = C64::new(x, y);
        for p in &divisor.points {
            f[k] *= theta1((z - C64::new(p[0], p[1])) * (PI / l));
        }
        q[k] = -(PI * df / area) * y * y + (2.0 * PI * sy / area) * y;
    }
    let target = tau - 4.0 * PI * df / area;
    let mut e0: Vec<f64> = f.iter().zip(&q).map(|(f, q)| f.norm_sqr() * (2.0 * q).exp()).collect();
    let norm = target / (e0.iter().sum::<f64>() / ns as f64);
    for v in e0.iter_mut() {
        *v *= norm;
    }

    let sp = Spectral::new(grid);
    let residual = |v: &[f64]| -> Vec<f64> {
        let lv = sp.laplacian(v);
        (0..ns).map(|k| lv[k] + e0[k] * v[k].exp() - target).collect()
    };
    let l2 = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut v = match warm {
        Some(w) if w.len() == ns => w.to_vec(),
        _ => vec![0.0; ns],
    };
    let mut r = residual(&v);
    let mut rsup = r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut iters = 0;
    let thresh = opts.newton_tol.min(opts.tol) * tau;
    while rsup >= thresh {
        if iters >= opts.max_newton {
            return Err(Error::Solver(format!(
                "Newton did not converge in {} iterations (residual {rsup:.3e})",
                opts.max_newton
            )));
        }
        iters += 1;
        let eh: Vec<f64> = (0..ns).map(|k| e0[k] * v[k].exp()).collect();
        let mean = eh.iter().sum::<f64>() / ns as f64;
        let prec: Vec<C64> = sp.k2.iter().map(|k| C64::new(1.0 / (k + mean), 0.0)).collect();
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let (dv, _) = pcg(
            |x: &[f64]| {
                let lx = sp.laplacian(x);
                (0..ns).map(|k| lx[k] + eh[k] * x[k]).collect()
            },
            |x: &[f64]| sp.fft.filter_real(x, &prec),
            &rhs,
            1e-13,
            5000,
        );
        let rn0 = l2(&r);
        let mut t = 1.0;
        let (vn, rn) = loop {
            let vn: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + t * b).collect();
            let rn = residual(&vn);
            if l2(&rn) < (1.0 - 1e-4 * t) * rn0 || t < 1e-3 {
                break (vn, rn);
            }
            t *= 0.5;
        };
        v = vn;
        r = rn;
        rsup = r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    }

    let phi: ComplexField = (0..ns)
        .map(|k| f[k] * (norm.sqrt() * (q[k] + 0.5 * v[k]).exp()))
        .collect();

    let vh = sp.fft.forward_real(&v);
    let integrate = |mult: &dyn Fn(usize) -> C64| -> Vec<f64> {
        let mut c: Vec<C64> = (0..ns).map(|k| vh[k] * mult(k)).collect();
        sp.fft.inverse(&mut c);
        c.iter().map(|z| z.re).collect()
    };
    let intx_vy = integrate(&|k| I * sp.ky[k] * sp.ix[k]);
    let inty_vx = integrate(&|k| I * sp.kx[k] * sp.iy[k]);
    let sgn = if d.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut ux = Vec::with_capacity(ns);
    let mut uy = Vec::with_capacity(ns);
    for k in 0..ns {
        let [x, y] = grid.coords(k);
        let ax = -0.5 * intx_vy[k] + e * ((2.0 * PI * df / area) * y - 2.0 * PI * sy / area);
        let ay = 0.5 * inty_vx[k];
        let mut a = C64::from_polar(1.0, -ax);
        let mut b = C64::from_polar(1.0, -ay);
        if k % n == n - 1 {
            a *= sgn;
        }
        if k / n == n - 1 {
            b *= C64::from_polar(sgn, 2.0 * PI * (df * x - sx) / l);
        }
        ux.push(a);
        uy.push(b);
    }
    let links = LinkField { x: ux, y: uy };
    let w: ScalarField = phi.iter().map(|p| 0.5 * (tau - p.norm_sqr())).collect();
    let mut field = VortexField {
        grid: grid.clone(),
        tau,
        divisor: divisor.clone(),
        phi,
        links,
        w,
        residual_sup: 0.0,
        dbar_sup: 0.0,
        smooth_part: v,
    };
    let (r1, r2) = vortex_residual(&field);
    field.residual_sup = r1.iter().fold(0.0f64, |a, &x| a.max(x)) / tau;
    field.dbar_sup = r2.iter().fold(0.0f64, |a, &x| a.max(x)) / tau.sqrt();

    let deg = chern_degree(&field.links, grid)?;
    if deg != d as i64 {
        return Err(Error::Solver(format!("reconstructed degree {deg} differs from divisor degree {d}")));
    }
    if field.residual_sup > opts.tol {
        return Err(Error::Accuracy(format!(
            "curvature equation residual {:.3e} exceeds tolerance {:.1e}",
            field.residual_sup, opts.tol
        )));
    }
    if field.dbar_sup > dbar_contract(grid, tau, opts.tol) {
        return Err(Error::Accuracy(format!(
            "holomorphicity residual {:.3e} exceeds the discretization contract {:.3e}",
            field.dbar_sup,
            dbar_contract(grid, tau, opts.tol)
        )));
    }

    let h_field = field.phi.iter().map(|p| p.norm_sqr().ln()).collect();
    let report = TaubesSolveReport {
        newton_iterations: iters,
        final_residual: rsup / tau,
        h_field,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((field, report))
}

/// Accepted bound on `sup |∂̄_∇φ| / √τ`. The forward-difference operator
/// misses the continuum ∂̄ by `(ε/2)·∂²φ`, and `∂²φ ~ τ^{3/2}` at a core, so
/// the bound is `max(tol, spacing·τ/2)`.
pub fn dbar_contract(grid: &TorusGrid, tau: f64, tol: f64) -> f64 {
    tol.max(0.5 * grid.spacing * tau)
}

/// Cell average of a site field over the plaquette with lower-left corner at
/// each site, evaluated spectrally.
pub fn cell_average(field: &[f64], grid: &TorusGrid) -> ScalarField {
    let sp = Spectral::new(grid);
    let m: Vec<C64> = sp.ix.iter().zip(&sp.iy).map(|(a, b)| a * b / (grid.spacing * grid.spacing)).collect();
    sp.fft.filter_real(field, &m)
}

/// `(r1, r2)`: `r1 = |iΛF − w|` per plaquette, `r2 = |∂̄_∇φ|` per site with
/// `∂̄_∇ = (D_x + i D_y)/√2`.
pub fn vortex_residual(field: &VortexField) -> (ScalarField, ScalarField) {
    vortex_residual_of(&field.grid, field.tau, &field.links, &field.phi)
}

pub fn vortex_residual_of(
    grid: &TorusGrid,
    tau: f64,
    links: &LinkField,
    phi: &[C64],
) -> (ScalarField, ScalarField) {
    let e2 = grid.spacing * grid.spacing;
    let w: Vec<f64> = phi.iter().map(|p| 0.5 * (tau - p.norm_sqr())).collect();
    let wp = cell_average(&w, grid);
    let th = links.plaquette_angles(grid);
    let r1 = th.iter().zip(&wp).map(|(t, w)| (t / e2 - w).abs()).collect();
    let dx = cov_dx(links, phi, grid);
    let dy = cov_dy(links, phi, grid);
    let r2 = dx
        .iter()
        .zip(&dy)
        .map(|(a, b)| (a + I * b).norm() / std::f64::consts::SQRT_2)
        .collect();
    (r1, r2)
}

/// Discrete Ginzburg–Landau energy `Σ ε² (|F|² + |∇φ|² + λ w²)`.
pub fn gl_energy(field: &VortexField, lambda: f64) -> f64 {
    gl_energy_of(&field.grid, field.tau, &field.links, &field.phi, lambda)
}

pub fn gl_energy_of(grid: &TorusGrid, tau: f64, links: &LinkField, phi: &[C64], lambda: f64) -> f64 {
    let e2 = grid.spacing * grid.spacing;
    let th = links.plaquette_angles(grid);
    let dx = cov_dx(links, phi, grid);
    let dy = cov_dy(links, phi, grid);
    let mut s = 0.0;
    for k in 0..grid.sites() {
        let w = 0.5 * (tau - phi[k].norm_sqr());
        s += (th[k] / e2).powi(2) + dx[k].norm_sqr() + dy[k].norm_sqr() + lambda * w * w;
    }
    e2 * s
}

/// `|∇_A φ|` per site from the forward covariant differences.
pub fn covariant_gradient_norm(field: &VortexField) -> ScalarField {
    let dx = cov_dx(&field.links, &field.phi, &field.grid);
    let dy = cov_dy(&field.links, &field.phi, &field.grid);
    dx.iter().zip(&dy).map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt()).collect()
}

/// Decay window in units of `1/√τ`, capped at `ρ_D`.
pub const DECAY_WINDOW: (f64, f64) = (1.0, 3.0);

pub fn decay_window(tau: f64, rho: f64) -> (f64, f64) {
    let s = tau.sqrt();
    (DECAY_WINDOW.0 / s, (DECAY_WINDOW.1 / s).min(rho))
}

/// `max |φ|²` and a log-linear fit of `w + |∇φ|` against the distance to the
/// divisor.
pub fn taubes_bounds_check(field: &VortexField) -> Result<(f64, DecayFit)> {
    let max_phi_sq = field.phi.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
    if field.divisor.d() == 0 {
        return Err(Error::Diagnostic("no divisor to measure decay from".into()));
    }
    let dist = dist_to_divisor(&field.divisor, &field.grid);
    let rho = crate::tangent::rho_min(&field.divisor, &field.grid);
    let (lo, hi) = decay_window(field.tau, rho);
    let g = covariant_gradient_norm(field);
    let samples: Vec<(f64, f64)> = (0..field.grid.sites())
        .filter(|&k| dist[k] >= lo && dist[k] <= hi)
        .map(|k| (dist[k], field.w[k] + g[k]))
        .collect();
    let fit = fit_decay(samples, field.tau, 20)?;
    Ok((max_phi_sq, fit))
}

impl VortexField {
    pub fn d(&self) -> usize {
        self.divisor.d()
    }

    pub fn gauge_apply(&self, g: &crate::lattice::GaugeTransform) -> VortexField {
        VortexField {
            phi: g.apply_section(&self.phi),
            links: g.apply_links(&self.links, &self.grid),
            ..self.clone()
        }
    }

    /// `∫ w ω`.
    pub fn w_integral(&self) -> f64 {
        self.grid.spacing.powi(2) * self.w.iter().sum::<f64>()
    }

    /// `‖φ‖²_{L²}`.
    pub fn phi_norm_sq(&self) -> f64 {
        self.grid.spacing.powi(2) * self.phi.iter().map(|p| p.norm_sqr()).sum::<f64>()
    }
}
