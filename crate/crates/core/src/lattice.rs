//! Flat square torus lattice, field containers, the gauge action and the
//! L² pairing on tangent pairs.
//!
//! Sites are indexed `k = j * n + i` with site `(i, j)` at `(i·ε, j·ε)`.
//! Links are parallel transporters: `links.x[k]` transports from `s + x̂` back
//! to `s`, so the covariant difference is
//! `D_x ψ(s) = (conj(U_x(s)) ψ(s + x̂) − ψ(s)) / ε`.
//! A gauge transformation acts by `U_x(s) ↦ g(s + x̂) U_x(s) conj(g(s))`,
//! `φ ↦ g φ`.

use crate::error::{Error, Result};
use crate::fft::{freqs, Fft2};
pub use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub type ScalarField = Vec<f64>;
pub type ComplexField = Vec<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub n: usize,
    pub side_length: f64,
    pub spacing: f64,
    pub area: f64,
}

pub fn build_grid(n: usize, side_length: f64) -> Result<TorusGrid> {
    if !n.is_multiple_of(2) {
        return Err(Error::Config("n must be even".into()));
    }
    if n < 8 {
        return Err(Error::Config(format!("n must be at least 8, got {n}")));
    }
    if !(side_length > 0.0 && side_length.is_finite()) {
        return Err(Error::Config(format!("side_length must be positive, got {side_length}")));
    }
    Ok(TorusGrid {
        n,
        side_length,
        spacing: side_length / n as f64,
        area: side_length * side_length,
    })
}

impl TorusGrid {
    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    pub fn shift(&self, k: usize, di: isize, dj: isize) -> usize {
        let n = self.n as isize;
        let i = (k as isize % n + di).rem_euclid(n);
        let j = (k as isize / n + dj).rem_euclid(n);
        (j * n + i) as usize
    }

    pub fn xp(&self, k: usize) -> usize {
        self.shift(k, 1, 0)
    }
    pub fn xm(&self, k: usize) -> usize {
        self.shift(k, -1, 0)
    }
    pub fn yp(&self, k: usize) -> usize {
        self.shift(k, 0, 1)
    }
    pub fn ym(&self, k: usize) -> usize {
        self.shift(k, 0, -1)
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        [
            (k % self.n) as f64 * self.spacing,
            (k / self.n) as f64 * self.spacing,
        ]
    }

    pub fn nearest_site(&self, p: [f64; 2]) -> usize {
        let n = self.n as isize;
        let i = (p[0] / self.spacing).round() as isize;
        let j = (p[1] / self.spacing).round() as isize;
        (j.rem_euclid(n) * n + i.rem_euclid(n)) as usize
    }

    pub fn fft(&self) -> Fft2 {
        Fft2::new(self.n)
    }

    /// Physical wavenumbers `(kx, ky)` for every spectral index, FFT layout.
    pub fn wavenumbers(&self) -> (Vec<f64>, Vec<f64>) {
        let m = freqs(self.n);
        let s = 2.0 * std::f64::consts::PI / self.side_length;
        let mut kx = Vec::with_capacity(self.sites());
        let mut ky = Vec::with_capacity(self.sites());
        for j in 0..self.n {
            for i in 0..self.n {
                kx.push(s * m[i]);
                ky.push(s * m[j]);
            }
        }
        (kx, ky)
    }

    /// Symbol of the 5-point Laplacian `d*d` (positive).
    pub fn lap5_symbol(&self) -> Vec<f64> {
        let (kx, ky) = self.wavenumbers();
        let e = self.spacing;
        kx.iter()
            .zip(&ky)
            .map(|(a, b)| 4.0 * ((a * e / 2.0).sin().powi(2) + (b * e / 2.0).sin().powi(2)) / (e * e))
            .collect()
    }
}

/// An effective divisor given by an ordered list of points.  Points may lie
/// outside the fundamental domain: loop lifts use unwrapped coordinates so
/// that the field reconstruction varies continuously along the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divisor {
    pub points: Vec<[f64; 2]>,
}

impl Divisor {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Divisor { points }
    }

    pub fn empty() -> Self {
        Divisor { points: vec![] }
    }

    pub fn d(&self) -> usize {
        self.points.len()
    }

    pub fn min_separation(&self, grid: &TorusGrid) -> f64 {
        let mut m = f64::INFINITY;
        for a in 0..self.points.len() {
            for b in a + 1..self.points.len() {
                m = m.min(torus_dist(self.points[a], self.points[b], grid));
            }
        }
        m
    }

    /// Simplicity at grid resolution: pairwise distance above two spacings.
    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        for p in &self.points {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Config("divisor point is not finite".into()));
            }
        }
        let sep = self.min_separation(grid);
        if sep <= 2.0 * grid.spacing {
            return Err(Error::Config(format!(
                "divisor points closer than two grid spacings ({sep:.4})"
            )));
        }
        Ok(())
    }
}

fn wrap_half(x: f64, l: f64) -> f64 {
    (x + 0.5 * l).rem_euclid(l) - 0.5 * l
}

pub fn torus_dist(a: [f64; 2], b: [f64; 2], grid: &TorusGrid) -> f64 {
    let l = grid.side_length;
    wrap_half(a[0] - b[0], l).hypot(wrap_half(a[1] - b[1], l))
}

/// Per-site distance to the nearest divisor point (`+∞` for the empty divisor).
pub fn dist_to_divisor(divisor: &Divisor, grid: &TorusGrid) -> ScalarField {
    (0..grid.sites())
        .map(|k| {
            let x = grid.coords(k);
            divisor
                .points
                .iter()
                .map(|&p| torus_dist(x, p, grid))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Coefficients `b` of an imaginary 1-form `a = i (b_x dx + b_y dy)`, one
/// value per link.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl OneForm {
    pub fn zeros(grid: &TorusGrid) -> Self {
        OneForm { x: vec![0.0; grid.sites()], y: vec![0.0; grid.sites()] }
    }

    /// Lattice divergence `d*b` (adjoint of the forward difference).
    pub fn codifferential(&self, grid: &TorusGrid) -> ScalarField {
        let e = grid.spacing;
        (0..grid.sites())
            .map(|k| -((self.x[k] - self.x[grid.xm(k)]) + (self.y[k] - self.y[grid.ym(k)])) / e)
            .collect()
    }

    pub fn norm_sq(&self, grid: &TorusGrid) -> f64 {
        let e2 = grid.spacing * grid.spacing;
        e2 * self.x.iter().chain(&self.y).map(|v| v * v).sum::<f64>()
    }
}

/// Forward difference `d f` of a real site function as a link 1-form.
pub fn exterior_derivative(f: &[f64], grid: &TorusGrid) -> OneForm {
    let e = grid.spacing;
    let n = grid.sites();
    OneForm {
        x: (0..n).map(|k| (f[grid.xp(k)] - f[k]) / e).collect(),
        y: (0..n).map(|k| (f[grid.yp(k)] - f[k]) / e).collect(),
    }
}

/// The pointwise isometry `b ↦ α = i b_x − b_y` onto the unit (0,1)-component.
pub fn to_antiholomorphic(a: &OneForm) -> ComplexField {
    a.x.iter().zip(&a.y).map(|(&bx, &by)| C64::new(-by, bx)).collect()
}

pub fn from_antiholomorphic(alpha: &[C64]) -> OneForm {
    OneForm {
        x: alpha.iter().map(|a| a.im).collect(),
        y: alpha.iter().map(|a| -a.re).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkField {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
}

impl LinkField {
    pub fn trivial(grid: &TorusGrid) -> Self {
        let one = C64::new(1.0, 0.0);
        LinkField { x: vec![one; grid.sites()], y: vec![one; grid.sites()] }
    }

    pub fn max_modulus_defect(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .map(|u| (u.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Principal argument of every plaquette product; equals `ε²·iΛF`.
    pub fn plaquette_angles(&self, grid: &TorusGrid) -> ScalarField {
        (0..grid.sites())
            .map(|k| {
                (self.x[k] * self.y[grid.xp(k)] * self.x[grid.yp(k)].conj() * self.y[k].conj()).arg()
            })
            .collect()
    }

    /// Principal link angles `b` with `U = exp(−i ε b)`.
    pub fn relative_velocity(&self, earlier: &LinkField, grid: &TorusGrid, dt: f64) -> OneForm {
        let s = -1.0 / (grid.spacing * dt);
        OneForm {
            x: self.x.iter().zip(&earlier.x).map(|(a, b)| s * (a * b.conj()).arg()).collect(),
            y: self.y.iter().zip(&earlier.y).map(|(a, b)| s * (a * b.conj()).arg()).collect(),
        }
    }
}

pub fn chern_degree(links: &LinkField, grid: &TorusGrid) -> Result<i64> {
    let th = links.plaquette_angles(grid);
    if th.iter().any(|t| t.abs() >= std::f64::consts::PI - 0.1) {
        return Err(Error::Resolution("field too rough for degree measurement".into()));
    }
    let s: f64 = th.iter().sum::<f64>() / (2.0 * std::f64::consts::PI);
    Ok(s.round() as i64)
}

/// Covariant forward difference along x.
pub fn cov_dx(links: &LinkField, psi: &[C64], grid: &TorusGrid) -> ComplexField {
    let e = grid.spacing;
    (0..grid.sites())
        .map(|k| (links.x[k].conj() * psi[grid.xp(k)] - psi[k]) / e)
        .collect()
}

/// Covariant forward difference along y.
pub fn cov_dy(links: &LinkField, psi: &[C64], grid: &TorusGrid) -> ComplexField {
    let e = grid.spacing;
    (0..grid.sites())
        .map(|k| (links.y[k].conj() * psi[grid.yp(k)] - psi[k]) / e)
        .collect()
}

/// A tangent pair `(α, ψ)`: `α` is the unit (0,1)-component of the form part
/// (see [`to_antiholomorphic`]), `ψ` the section part.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub alpha: ComplexField,
    pub psi: ComplexField,
}

impl TangentVector {
    pub fn zeros(grid: &TorusGrid) -> Self {
        let z = C64::new(0.0, 0.0);
        TangentVector { alpha: vec![z; grid.sites()], psi: vec![z; grid.sites()] }
    }

    pub fn from_one_form(a: &OneForm, psi: ComplexField) -> Self {
        TangentVector { alpha: to_antiholomorphic(a), psi }
    }

    /// The real 1-form representation of the form slot.
    pub fn one_form(&self) -> OneForm {
        from_antiholomorphic(&self.alpha)
    }

    pub fn scale(&self, c: C64) -> Self {
        TangentVector {
            alpha: self.alpha.iter().map(|v| v * c).collect(),
            psi: self.psi.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        TangentVector {
            alpha: self.alpha.iter().zip(&other.alpha).map(|(a, b)| a + b).collect(),
            psi: self.psi.iter().zip(&other.psi).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn norm(&self, grid: &TorusGrid) -> f64 {
        l2_inner(self, self, grid).sqrt()
    }

    /// Pointwise norm `(|α|² + |ψ|²)^{1/2}`.
    pub fn pointwise_norm(&self) -> ScalarField {
        self.alpha
            .iter()
            .zip(&self.psi)
            .map(|(a, p)| (a.norm_sqr() + p.norm_sqr()).sqrt())
            .collect()
    }

    pub fn to_vec(&self) -> Vec<C64> {
        let mut v = self.alpha.clone();
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn from_vec(v: &[C64]) -> Self {
        let n = v.len() / 2;
        TangentVector { alpha: v[..n].to_vec(), psi: v[n..].to_vec() }
    }
}

/// Discrete L² metric: `ε² Σ (b·b′ + Re conj(ψ) ψ′)`.
pub fn l2_inner(u: &TangentVector, v: &TangentVector, grid: &TorusGrid) -> f64 {
    let e2 = grid.spacing * grid.spacing;
    let a: f64 = u.alpha.iter().zip(&v.alpha).map(|(x, y)| (x.conj() * y).re).sum();
    let p: f64 = u.psi.iter().zip(&v.psi).map(|(x, y)| (x.conj() * y).re).sum();
    e2 * (a + p)
}

/// Complex Hermitian pairing `ε² Σ conj(u)·v` of flat complex vectors.
pub fn herm(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaugeTransform {
    pub g: ComplexField,
    pub phase_lift: Option<ScalarField>,
}

impl GaugeTransform {
    pub fn identity(grid: &TorusGrid) -> Self {
        GaugeTransform { g: vec![C64::new(1.0, 0.0); grid.sites()], phase_lift: Some(vec![0.0; grid.sites()]) }
    }

    /// `g = exp(2πi f)`.
    pub fn from_phase(f: ScalarField) -> Self {
        let g = f
            .iter()
            .map(|&t| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * t))
            .collect();
        GaugeTransform { g, phase_lift: Some(f) }
    }

    pub fn from_values(g: ComplexField) -> Self {
        GaugeTransform { g, phase_lift: None }
    }

    pub fn inverse(&self) -> Self {
        GaugeTransform {
            g: self.g.iter().map(|v| v.conj()).collect(),
            phase_lift: self.phase_lift.as_ref().map(|f| f.iter().map(|v| -v).collect()),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        GaugeTransform {
            g: self.g.iter().zip(&other.g).map(|(a, b)| a * b).collect(),
            phase_lift: match (&self.phase_lift, &other.phase_lift) {
                (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x + y).collect()),
                _ => None,
            },
        }
    }

    pub fn max_modulus_defect(&self) -> f64 {
        self.g.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn apply_links(&self, links: &LinkField, grid: &TorusGrid) -> LinkField {
        LinkField {
            x: (0..grid.sites()).map(|k| self.g[grid.xp(k)] * links.x[k] * self.g[k].conj()).collect(),
            y: (0..grid.sites()).map(|k| self.g[grid.yp(k)] * links.y[k] * self.g[k].conj()).collect(),
        }
    }

    pub fn apply_section(&self, phi: &[C64]) -> ComplexField {
        phi.iter().zip(&self.g).map(|(p, g)| p * g).collect()
    }

    /// Push-forward of a tangent pair: the form slot is gauge invariant.
    pub fn apply_tangent(&self, t: &TangentVector) -> TangentVector {
        TangentVector { alpha: t.alpha.clone(), psi: self.apply_section(&t.psi) }
    }
}

/// Field dump: a one-line JSON header followed by little-endian `f64` values
/// in row-major site order (complex values interleaved as `re, im`).
pub fn write_dump(path: &Path, grid: &TorusGrid, kind: &str, values: &[f64], count: usize) -> Result<()> {
    let header = serde_json::json!({
        "n": grid.n,
        "side_length": grid.side_length,
        "kind": kind,
        "count": count,
    });
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{header}")?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn write_complex_dump(path: &Path, grid: &TorusGrid, kind: &str, values: &[C64]) -> Result<()> {
    let flat: Vec<f64> = values.iter().flat_map(|c| [c.re, c.im]).collect();
    write_dump(path, grid, kind, &flat, values.len())
}

pub fn read_dump(path: &Path) -> Result<(serde_json::Value, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Config("dump has no header line".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])?;
    let values = bytes[nl + 1..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}
