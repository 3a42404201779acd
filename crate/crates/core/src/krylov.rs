//! Preconditioned conjugate gradients for real symmetric and complex
//! Hermitian positive operators given as closures.

use num_complex::Complex64 as C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

pub trait CgScalar: Copy + Send + Sync {
    fn zero() -> Self;
    fn re_dot(a: &[Self], b: &[Self]) -> f64;
    fn axpy(y: &mut [Self], a: f64, x: &[Self]);
    /// `p ← z + beta·p`
    fn xpby(p: &mut [Self], z: &[Self], beta: f64);
}

impl CgScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn re_dot(a: &[Self], b: &[Self]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
    fn axpy(y: &mut [Self], a: f64, x: &[Self]) {
        for (u, v) in y.iter_mut().zip(x) {
            *u += a * v;
        }
    }
    fn xpby(p: &mut [Self], z: &[Self], beta: f64) {
        for (u, v) in p.iter_mut().zip(z) {
            *u = v + beta * *u;
        }
    }
}

impl CgScalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn re_dot(a: &[Self], b: &[Self]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
    }
    fn axpy(y: &mut [Self], a: f64, x: &[Self]) {
        for (u, v) in y.iter_mut().zip(x) {
            *u += v * a;
        }
    }
    fn xpby(p: &mut [Self], z: &[Self], beta: f64) {
        for (u, v) in p.iter_mut().zip(z) {
            *u = v + *u * beta;
        }
    }
}

pub fn norm<T: CgScalar>(v: &[T]) -> f64 {
    T::re_dot(v, v).sqrt()
}

/// Solve `A x = b` from `x = 0`; stops when `‖r‖ ≤ tol·‖b‖` or after `maxit`
/// iterations.  The inner product is the real part of the Hermitian one, so
/// complex Hermitian operators are handled as real symmetric ones.
pub fn pcg<T, A, P>(apply: A, precond: P, b: &[T], tol: f64, maxit: usize) -> (Vec<T>, CgOutcome)
where
    T: CgScalar,
    A: Fn(&[T]) -> Vec<T>,
    P: Fn(&[T]) -> Vec<T>,
{
    let mut x = vec![T::zero(); b.len()];
    let bn = norm(b);
    if bn == 0.0 {
        return (x, CgOutcome { iterations: 0, rel_residual: 0.0, converged: true });
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = T::re_dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..maxit {
        let ap = apply(&p);
        let pap = T::re_dot(&p, &ap);
        if !(pap > 0.0) {
            return (x, CgOutcome { iterations: it, rel_residual: rel, converged: false });
        }
        let al = rz / pap;
        T::axpy(&mut x, al, &p);
        T::axpy(&mut r, -al, &ap);
        rel = norm(&r) / bn;
        if rel <= tol {
            return (x, CgOutcome { iterations: it + 1, rel_residual: rel, converged: true });
        }
        z = precond(&r);
        let rzn = T::re_dot(&r, &z);
        T::xpby(&mut p, &z, rzn / rz);
        rz = rzn;
    }
    (x, CgOutcome { iterations: maxit, rel_residual: rel, converged: false })
}
