#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use nalgebra::DMatrix;
use vortexberry::lattice::{build_grid, Divisor, TangentVector, TorusGrid, C64, I};
use vortexberry::linops::CoTangentPair;
use vortexberry::vortex::{solve_vortex, SolveOptions, VortexField};

pub fn tau0(d: usize, grid: &TorusGrid) -> f64 {
    4.0 * PI * d as f64 / grid.area
}

pub fn grid(n: usize) -> TorusGrid {
    build_grid(n, 1.0).unwrap()
}

pub fn vortex(n: usize, points: &[[f64; 2]], units: f64) -> VortexField {
    let g = grid(n);
    let div = Divisor::new(points.to_vec());
    let tau = units * tau0(div.d(), &g);
    solve_vortex(&div, tau, &g, &SolveOptions::default()).unwrap().0
}

/// Coarse-grid solve with the resolution guard off, for dense oracles.
pub fn coarse_vortex(n: usize, points: &[[f64; 2]], units: f64) -> VortexField {
    let g = grid(n);
    let div = Divisor::new(points.to_vec());
    let tau = units * tau0(div.d(), &g);
    solve_vortex(&div, tau, &g, &SolveOptions::relaxed(1e-8)).unwrap().0
}

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn sym(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }

    pub fn complex(&mut self, len: usize) -> Vec<C64> {
        (0..len).map(|_| C64::new(self.sym(), self.sym())).collect()
    }

    pub fn real(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.sym()).collect()
    }

    pub fn tangent(&mut self, grid: &TorusGrid) -> TangentVector {
        TangentVector { alpha: self.complex(grid.sites()), psi: self.complex(grid.sites()) }
    }

    pub fn cotangent(&mut self, grid: &TorusGrid) -> CoTangentPair {
        CoTangentPair { f: self.complex(grid.sites()), xi: self.complex(grid.sites()) }
    }
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn sup(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Stencil assembly of `L`, written out entry by entry.
pub fn stencil_l(field: &VortexField) -> DMatrix<C64> {
    let g = &field.grid;
    let n = g.sites();
    let e = g.spacing;
    let z = C64::new(0.0, 0.0);
    let mut m = DMatrix::from_element(2 * n, 2 * n, z);
    for k in 0..n {
        // f row: T^H α − conj(φ) ψ
        m[(k, g.xm(k))] += C64::new(1.0 / e, 0.0);
        m[(k, g.ym(k))] += C64::new(0.0, -1.0 / e);
        m[(k, k)] += C64::new(-1.0 / e, 1.0 / e);
        m[(k, n + k)] += -field.phi[k].conj();
        // ξ row: D_x ψ + i D_y ψ + α φ
        m[(n + k, n + g.xp(k))] += field.links.x[k].conj() / e;
        m[(n + k, n + g.yp(k))] += I * field.links.y[k].conj() / e;
        m[(n + k, n + k)] += C64::new(-1.0 / e, -1.0 / e);
        m[(n + k, k)] += field.phi[k];
    }
    m
}
