//! The linearization `L = D + A` acting on tangent pairs `(α, ψ)`, its exact
//! adjoint, the Green's operator of `H = ½Δ + ½|φ|²` and the projection onto
//! `ker L`.
//!
//! With `T = ∂_x + i∂_y` on functions (trivial transport) and
//! `D_∇ = D_x + i D_y` on sections:
//!
//! ```text
//! L(α, ψ)  = (T^H α − conj(φ) ψ,  D_∇ ψ + α φ)
//! L*(f, ξ) = (T f + conj(φ) ξ,     D_∇^H ξ − φ f)
//! ```
//!
//! On the lattice `L` is square and invertible; its `d` smallest singular
//! values are exponentially small in `1/(ε√τ)` and the matching left singular
//! vectors are staggered doubler modes. The projector therefore deflates an
//! explicitly computed near-cokernel before the conjugate-gradient solve.

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::krylov::{norm, pcg};
use crate::lattice::{herm, ComplexField, TangentVector, TorusGrid, C64, I};
use crate::vortex::VortexField;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq)]
pub struct CoTangentPair {
    pub f: ComplexField,
    pub xi: ComplexField,
}

impl CoTangentPair {
    pub fn zeros(n: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        CoTangentPair { f: vec![z; n], xi: vec![z; n] }
    }

    pub fn to_vec(&self) -> Vec<C64> {
        let mut v = self.f.clone();
        v.extend_from_slice(&self.xi);
        v
    }

    pub fn from_vec(v: &[C64]) -> Self {
        let n = v.len() / 2;
        CoTangentPair { f: v[..n].to_vec(), xi: v[n..].to_vec() }
    }

    pub fn inner(&self, other: &Self, grid: &TorusGrid) -> f64 {
        grid.spacing.powi(2) * (herm(&self.f, &other.f) + herm(&self.xi, &other.xi)).re
    }

    pub fn norm(&self, grid: &TorusGrid) -> f64 {
        self.inner(self, grid).sqrt()
    }
}

fn check_len(field: &VortexField, len: usize) -> Result<()> {
    if len != field.grid.sites() {
        return Err(Error::Precondition(format!(
            "grid mismatch: vector of {len} sites on a grid of {}",
            field.grid.sites()
        )));
    }
    Ok(())
}

/// `T f = (f(s+x) − f(s))/ε + i (f(s+y) − f(s))/ε`.
pub fn t_op(f: &[C64], grid: &TorusGrid) -> ComplexField {
    let e = grid.spacing;
    (0..grid.sites())
        .map(|k| ((f[grid.xp(k)] - f[k]) + I * (f[grid.yp(k)] - f[k])) / e)
        .collect()
}

pub fn t_adj(a: &[C64], grid: &TorusGrid) -> ComplexField {
    let e = grid.spacing;
    (0..grid.sites())
        .map(|k| ((a[grid.xm(k)] - a[k]) - I * (a[grid.ym(k)] - a[k])) / e)
        .collect()
}

/// `D_∇ ψ = D_x ψ + i D_y ψ` with forward covariant differences.
pub fn dbar_cov(field: &VortexField, psi: &[C64]) -> ComplexField {
    let g = &field.grid;
    let u = &field.links;
    let e = g.spacing;
    (0..g.sites())
        .map(|k| {
            ((u.x[k].conj() * psi[g.xp(k)] - psi[k]) + I * (u.y[k].conj() * psi[g.yp(k)] - psi[k])) / e
        })
        .collect()
}

pub fn dbar_cov_adj(field: &VortexField, xi: &[C64]) -> ComplexField {
    let g = &field.grid;
    let u = &field.links;
    let e = g.spacing;
    (0..g.sites())
        .map(|k| {
            let (km, kn) = (g.xm(k), g.ym(k));
            ((u.x[km] * xi[km] - xi[k]) - I * (u.y[kn] * xi[kn] - xi[k])) / e
        })
        .collect()
}

/// Differential part `D(α, ψ) = (T^H α, D_∇ ψ)`.
pub fn apply_d(field: &VortexField, t: &TangentVector) -> CoTangentPair {
    CoTangentPair { f: t_adj(&t.alpha, &field.grid), xi: dbar_cov(field, &t.psi) }
}

pub fn apply_d_adjoint(field: &VortexField, z: &CoTangentPair) -> TangentVector {
    TangentVector { alpha: t_op(&z.f, &field.grid), psi: dbar_cov_adj(field, &z.xi) }
}

/// Algebraic part `A(α, ψ) = (−conj(φ) ψ, α φ)`.
pub fn apply_a(field: &VortexField, t: &TangentVector) -> CoTangentPair {
    let p = &field.phi;
    CoTangentPair {
        f: t.psi.iter().zip(p).map(|(s, p)| -p.conj() * s).collect(),
        xi: t.alpha.iter().zip(p).map(|(a, p)| a * p).collect(),
    }
}

pub fn apply_a_adjoint(field: &VortexField, z: &CoTangentPair) -> TangentVector {
    let p = &field.phi;
    TangentVector {
        alpha: z.xi.iter().zip(p).map(|(x, p)| p.conj() * x).collect(),
        psi: z.f.iter().zip(p).map(|(f, p)| -p * f).collect(),
    }
}

pub fn apply_l(field: &VortexField, t: &TangentVector) -> Result<CoTangentPair> {
    check_len(field, t.alpha.len())?;
    check_len(field, t.psi.len())?;
    Ok(apply_l_unchecked(field, t))
}

pub fn apply_l_adjoint(field: &VortexField, z: &CoTangentPair) -> Result<TangentVector> {
    check_len(field, z.f.len())?;
    check_len(field, z.xi.len())?;
    Ok(apply_l_adjoint_unchecked(field, z))
}

fn apply_l_unchecked(field: &VortexField, t: &TangentVector) -> CoTangentPair {
    let d = apply_d(field, t);
    let a = apply_a(field, t);
    CoTangentPair {
        f: d.f.iter().zip(&a.f).map(|(x, y)| x + y).collect(),
        xi: d.xi.iter().zip(&a.xi).map(|(x, y)| x + y).collect(),
    }
}

fn apply_l_adjoint_unchecked(field: &VortexField, z: &CoTangentPair) -> TangentVector {
    apply_d_adjoint(field, z).add(&apply_a_adjoint(field, z))
}

fn llstar(field: &VortexField, v: &[C64]) -> Vec<C64> {
    let z = CoTangentPair::from_vec(v);
    apply_l_unchecked(field, &apply_l_adjoint_unchecked(field, &z)).to_vec()
}

/// The mixed term `(D A* + A D*) z`, which vanishes in the continuum at a
/// vortex and is a first-order lattice artifact here.
pub fn mixed_term(field: &VortexField, z: &CoTangentPair) -> CoTangentPair {
    let a = apply_d(field, &apply_a_adjoint(field, z));
    let b = apply_a(field, &apply_d_adjoint(field, z));
    CoTangentPair {
        f: a.f.iter().zip(&b.f).map(|(x, y)| x + y).collect(),
        xi: a.xi.iter().zip(&b.xi).map(|(x, y)| x + y).collect(),
    }
}

/// Solve `H u = rhs`, `H = ½Δ + ½|φ|²` with the 5-point Laplacian.
pub fn green_scalar(field: &VortexField, rhs: &[C64]) -> Result<ComplexField> {
    check_len(field, rhs.len())?;
    let mass: Vec<f64> = field.phi.iter().map(|p| p.norm_sqr()).collect();
    green_with_mass(&field.grid, &mass, 1.0, rhs)
}

/// Solve `(½Δ/s + ½ m) u = rhs`; `s` rescales the metric (`s = 1` is the
/// ordinary Green's operator).
pub fn green_with_mass(grid: &TorusGrid, mass: &[f64], s: f64, rhs: &[C64]) -> Result<ComplexField> {
    let mbar = mass.iter().sum::<f64>() / mass.len() as f64;
    if !(mbar > 0.0) {
        return Err(Error::Precondition("Higgs field vanishes identically".into()));
    }
    let sym = grid.lap5_symbol();
    let prec: Vec<f64> = sym.iter().map(|l| 1.0 / (0.5 * l / s + 0.5 * mbar)).collect();
    let fft = grid.fft();
    let apply = |u: &[C64]| -> Vec<C64> { h_apply(grid, mass, s, u) };
    let maxit = 10 * grid.n;
    let (u, out) = pcg(apply, |r: &[C64]| fft.filter_complex(r, &prec), rhs, 1e-12, maxit);
    if out.rel_residual > 1e-10 {
        return Err(Error::Solver(format!(
            "Green's operator CG stagnated after {} iterations (relative residual {:.2e})",
            out.iterations, out.rel_residual
        )));
    }
    Ok(u)
}

pub fn h_apply(grid: &TorusGrid, mass: &[f64], s: f64, u: &[C64]) -> ComplexField {
    let e2 = grid.spacing * grid.spacing;
    (0..grid.sites())
        .map(|k| {
            let lap = (u[k] * 4.0 - u[grid.xp(k)] - u[grid.xm(k)] - u[grid.yp(k)] - u[grid.ym(k)]) / e2;
            lap * (0.5 / s) + u[k] * (0.5 * mass[k])
        })
        .collect()
}

pub fn apply_h(field: &VortexField, u: &[C64]) -> ComplexField {
    let mass: Vec<f64> = field.phi.iter().map(|p| p.norm_sqr()).collect();
    h_apply(&field.grid, &mass, 1.0, u)
}

/// Symbol of `T` on the lattice; vanishes at `k = 0` and at the staggered
/// doubler momentum.
fn t_symbol(grid: &TorusGrid) -> Vec<f64> {
    let (kx, ky) = grid.wavenumbers();
    let e = grid.spacing;
    kx.iter()
        .zip(&ky)
        .map(|(&a, &b)| (((I * a * e).exp() - 1.0) + I * ((I * b * e).exp() - 1.0)).norm_sqr() / (e * e))
        .collect()
}

/// Deterministic, well-spread start vectors (Weyl sequences).
fn start_block(len: usize, m: usize) -> Vec<Vec<C64>> {
    let g = 0.754_877_666_246_692_8_f64;
    let h = 0.569_840_290_998_053_3_f64;
    (0..m)
        .map(|c| {
            (0..len)
                .map(|k| {
                    let t = (k + 1) as f64 * (c + 1) as f64;
                    C64::new((t * g).fract() - 0.5, (t * h + 0.25 * c as f64).fract() - 0.5)
                })
                .collect()
        })
        .collect()
}

fn orthonormalize_against(basis: &mut Vec<Vec<C64>>, cand: Vec<Vec<C64>>, drop_tol: f64) {
    for mut v in cand {
        let n0 = norm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let c = herm(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let nv = norm(&v);
        if nv > drop_tol * n0 {
            for x in v.iter_mut() {
                *x /= nv;
            }
            basis.push(v);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CokernelReport {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Block LOBPCG for the `m` smallest eigenpairs of the Hermitian operator
/// `apply`, preconditioned by `precond`.
pub fn lobpcg_smallest<A, P>(
    apply: A,
    precond: P,
    len: usize,
    want: usize,
    block: usize,
    tol: f64,
    maxit: usize,
) -> (Vec<Vec<C64>>, CokernelReport)
where
    A: Fn(&[C64]) -> Vec<C64>,
    P: Fn(&[C64]) -> Vec<C64>,
{
    let mut x: Vec<Vec<C64>> = Vec::new();
    orthonormalize_against(&mut x, start_block(len, block), 1e-12);
    let mut p: Vec<Vec<C64>> = Vec::new();
    let mut lam = vec![0.0; block];
    let mut res = vec![f64::INFINITY; block];
    let mut iters = 0;
    let mut first = true;
    loop {
        let mut s: Vec<Vec<C64>> = Vec::new();
        orthonormalize_against(&mut s, x.clone(), 1e-10);
        if !first {
            let ax: Vec<Vec<C64>> = x.iter().map(|v| apply(v)).collect();
            let r: Vec<Vec<C64>> = ax
                .iter()
                .zip(&x)
                .zip(&lam)
                .map(|((a, v), &l)| a.iter().zip(v).map(|(a, v)| a - v * l).collect())
                .collect();
            res = r.iter().map(|v| norm(v)).collect();
            if res[..want].iter().all(|&r| r <= tol) || iters >= maxit {
                break;
            }
            let w: Vec<Vec<C64>> = r.iter().map(|v| precond(v)).collect();
            orthonormalize_against(&mut s, w, 1e-10);
            orthonormalize_against(&mut s, p.clone(), 1e-10);
            iters += 1;
        }
        let nx = x.len();
        let as_: Vec<Vec<C64>> = s.iter().map(|v| apply(v)).collect();
        let m = s.len();
        let gram = DMatrix::from_fn(m, m, |i, j| herm(&s[i], &as_[j]));
        let gram = (&gram + gram.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let mut nxv = Vec::with_capacity(block);
        let mut npv = Vec::with_capacity(block);
        for &c in order.iter().take(block) {
            let col = eig.eigenvectors.column(c);
            let mut v = vec![C64::new(0.0, 0.0); len];
            let mut pv = vec![C64::new(0.0, 0.0); len];
            for (i, si) in s.iter().enumerate() {
                let ci = col[i];
                for (o, a) in v.iter_mut().zip(si) {
                    *o += a * ci;
                }
                if i >= nx {
                    for (o, a) in pv.iter_mut().zip(si) {
                        *o += a * ci;
                    }
                }
            }
            nxv.push(v);
            npv.push(pv);
        }
        lam = order.iter().take(block).map(|&c| eig.eigenvalues[c]).collect();
        x = nxv;
        p = npv;
        first = false;
    }
    let report = CokernelReport { eigenvalues: lam.clone(), residuals: res, iterations: iters };
    (x.into_iter().take(want).collect(), report)
}

#[derive(Clone, Debug, Serialize)]
pub struct HorizontalSolveReport {
    pub cg_iterations: usize,
    pub cg_rel_residual: f64,
    /// `‖L x‖ / ‖y‖`.
    pub lx_rel: f64,
    /// `|⟨w, L y⟩| / ‖L y‖` summed over the deflated directions.
    pub deflated_weight: f64,
}

/// Orthogonal projection onto `ker L` at a fixed vortex.  Holds the
/// near-cokernel of `L` (the `d` smallest eigenvectors of `L L*`).
#[derive(Clone, Debug)]
pub struct HorizontalProjector {
    pub cokernel: Vec<Vec<C64>>,
    pub report: CokernelReport,
}

impl HorizontalProjector {
    pub fn new(field: &VortexField) -> Result<Self> {
        let d = field.d();
        let g = &field.grid;
        let n = g.sites();
        if d == 0 {
            return Ok(HorizontalProjector {
                cokernel: vec![],
                report: CokernelReport { eigenvalues: vec![], residuals: vec![], iterations: 0 },
            });
        }
        let mbar = field.phi.iter().map(|p| p.norm_sqr()).sum::<f64>() / n as f64;
        let prec: Vec<f64> = t_symbol(g).iter().map(|s| 1.0 / (s + mbar)).collect();
        let fft: Fft2 = g.fft();
        let precond = |r: &[C64]| -> Vec<C64> {
            let mut a = fft.filter_complex(&r[..n], &prec);
            a.extend(fft.filter_complex(&r[n..], &prec));
            a
        };
        let scale = 8.0 / (g.spacing * g.spacing) + field.tau;
        let (w, report) = lobpcg_smallest(|v| llstar(field, v), precond, 2 * n, d, d + 2, 1e-10 * scale, 600);
        Ok(HorizontalProjector { cokernel: w, report })
    }

    fn deflate(&self, v: &mut [C64]) {
        for w in &self.cokernel {
            let c = herm(w, v);
            for (x, y) in v.iter_mut().zip(w) {
                *x -= c * y;
            }
        }
    }

    /// `z = (L L*)⁻¹ L y` on the deflated space and `x = y − L* z`.
    pub fn project(
        &self,
        field: &VortexField,
        y: &TangentVector,
    ) -> Result<(CoTangentPair, TangentVector, HorizontalSolveReport)> {
        let ly = apply_l(field, y)?.to_vec();
        let lyn = norm(&ly);
        let weight: f64 = self.cokernel.iter().map(|w| herm(w, &ly).norm()).sum::<f64>() / lyn.max(1e-300);
        let mut rhs = ly;
        self.deflate(&mut rhs);
        let maxit = 40 * field.grid.n + 2000;
        let (mut zv, out) = pcg(
            |v: &[C64]| {
                let mut u = v.to_vec();
                self.deflate(&mut u);
                let mut r = llstar(field, &u);
                self.deflate(&mut r);
                r
            },
            |r: &[C64]| r.to_vec(),
            &rhs,
            1e-12,
            maxit,
        );
        if !out.converged && out.rel_residual > 1e-9 {
            return Err(Error::Solver(format!(
                "horizontal correction CG failed: relative residual {:.2e} after {} iterations",
                out.rel_residual, out.iterations
            )));
        }
        self.deflate(&mut zv);
        let z = CoTangentPair::from_vec(&zv);
        let x = y.sub(&apply_l_adjoint_unchecked(field, &z));
        let yn = norm(&y.to_vec());
        let lx = norm(&apply_l_unchecked(field, &x).to_vec());
        let rep = HorizontalSolveReport {
            cg_iterations: out.iterations,
            cg_rel_residual: out.rel_residual,
            lx_rel: if yn > 0.0 { lx / yn } else { 0.0 },
            deflated_weight: weight,
        };
        Ok((z, x, rep))
    }
}

/// Horizontal part of `y`; builds the projector for this call only.
pub fn solve_horizontal_correction(field: &VortexField, y: &TangentVector) -> Result<(CoTangentPair, TangentVector)> {
    if field.residual_sup > 1e-6 {
        return Err(Error::Precondition(format!(
            "field is not a vortex (residual {:.2e})",
            field.residual_sup
        )));
    }
    let p = HorizontalProjector::new(field)?;
    let (z, x, _) = p.project(field, y)?;
    Ok((z, x))
}

/// Relative residuals of the block-diagonal equations
/// `(T^H T + |φ|²) f = (L y)_f` and `(D_∇ D_∇^H + |φ|²) ξ = (L y)_ξ`.
pub fn split_residuals(field: &VortexField, z: &CoTangentPair, y: &TangentVector) -> (f64, f64) {
    let ly = apply_l_unchecked(field, y);
    let dd = apply_d(field, &apply_d_adjoint(field, z));
    let m: Vec<f64> = field.phi.iter().map(|p| p.norm_sqr()).collect();
    let rel = |lhs: &[C64], zc: &[C64], r: &[C64]| {
        let e: Vec<C64> = (0..lhs.len()).map(|k| lhs[k] + zc[k] * m[k] - r[k]).collect();
        norm(&e) / norm(r).max(1e-300)
    };
    (rel(&dd.f, &z.f, &ly.f), rel(&dd.xi, &z.xi, &ly.xi))
}

/// Smallest Ritz value of `L L*` after `steps` Lanczos iterations.
pub fn lanczos_min_ritz(field: &VortexField, steps: usize) -> f64 {
    let len = 2 * field.grid.sites();
    let mut q = start_block(len, 1).pop().unwrap();
    let qn = norm(&q);
    q.iter_mut().for_each(|x| *x /= qn);
    let mut q_prev = vec![C64::new(0.0, 0.0); len];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut beta = 0.0;
    for _ in 0..steps {
        let mut w = llstar(field, &q);
        let a = herm(&q, &w).re;
        for k in 0..len {
            w[k] -= q[k] * a + q_prev[k] * beta;
        }
        alphas.push(a);
        beta = norm(&w);
        if beta < 1e-14 {
            break;
        }
        betas.push(beta);
        q_prev = std::mem::replace(&mut q, w.iter().map(|x| x / beta).collect());
    }
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    SymmetricEigen::new(t).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Dense matrix of `L` in the basis (α sites, ψ sites) → (f sites, ξ sites).
pub fn dense_l(field: &VortexField) -> DMatrix<C64> {
    let n = field.grid.sites();
    let mut m = DMatrix::from_element(2 * n, 2 * n, C64::new(0.0, 0.0));
    let mut e = vec![C64::new(0.0, 0.0); 2 * n];
    for c in 0..2 * n {
        e[c] = C64::new(1.0, 0.0);
        let col = apply_l_unchecked(field, &TangentVector::from_vec(&e)).to_vec();
        for (r, v) in col.into_iter().enumerate() {
            m[(r, c)] = v;
        }
        e[c] = C64::new(0.0, 0.0);
    }
    m
}

/// Numerical kernel dimension from ascending singular values: the position of
/// the largest ratio jump among the smallest quarter of the spectrum.
pub fn kernel_dimension(svals_ascending: &[f64]) -> usize {
    let m = (svals_ascending.len() / 4).max(2);
    let mut best = (0.0, 0);
    for i in 0..m.min(svals_ascending.len() - 1) {
        let r = svals_ascending[i + 1] / svals_ascending[i].max(1e-300);
        if r > best.0 {
            best = (r, i + 1);
        }
    }
    best.1
}
