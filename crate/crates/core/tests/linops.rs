mod common;

use common::{coarse_vortex, max_abs_diff, stencil_l, vortex, Rng};
use nalgebra::DVector;
use proptest::prelude::*;
use vortexberry::lattice::*;
use vortexberry::linops::*;
use vortexberry::Error;

fn rel_gap(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

#[test]
fn dense_oracle_matches_matrix_free_on_random_vectors() {
    for (n, pts) in [(8usize, vec![[0.5, 0.5]]), (16, vec![[0.3, 0.6], [0.7, 0.2]])] {
        let f = coarse_vortex(n, &pts, 2.0);
        let m = stencil_l(&f);
        let mh = m.adjoint();
        assert!((&m - dense_l(&f)).norm() <= 1e-12 * m.norm());
        let mut rng = Rng::new(n as u64);
        for _ in 0..100 {
            let t = rng.tangent(&f.grid);
            let z = rng.cotangent(&f.grid);
            let lt = apply_l(&f, &t).unwrap().to_vec();
            let want = &m * DVector::from_vec(t.to_vec());
            let scale = want.norm();
            assert!(max_abs_diff(&lt, want.as_slice()) <= 1e-10 * scale);
            let ls = apply_l_adjoint(&f, &z).unwrap().to_vec();
            let want = &mh * DVector::from_vec(z.to_vec());
            assert!(max_abs_diff(&ls, want.as_slice()) <= 1e-10 * want.norm());
        }
    }
}

#[test]
fn kernel_dimension_is_twice_degree() {
    for (n, pts) in [
        (8usize, vec![[0.5, 0.5]]),
        (16, vec![[0.5, 0.5]]),
        (8, vec![[0.25, 0.25], [0.75, 0.75]]),
        (16, vec![[0.3, 0.6], [0.7, 0.2]]),
    ] {
        let f = coarse_vortex(n, &pts, 2.0);
        let mut sv: Vec<f64> = stencil_l(&f).singular_values().iter().cloned().collect();
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let complex_dim = kernel_dimension(&sv);
        assert_eq!(2 * complex_dim, 2 * pts.len(), "n={n}, svals {:?}", &sv[..4]);
    }
}

#[test]
fn projection_matches_dense_kernel_projector() {
    for (n, pts) in [(8usize, vec![[0.5, 0.5]]), (16, vec![[0.5, 0.5]]), (16, vec![[0.3, 0.6], [0.7, 0.2]])] {
        let f = coarse_vortex(n, &pts, 2.0);
        let d = pts.len();
        let svd = stencil_l(&f).svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
        let proj = HorizontalProjector::new(&f).unwrap();
        let mut rng = Rng::new(99);
        for _ in 0..5 {
            let y = rng.tangent(&f.grid);
            let yv = DVector::from_vec(y.to_vec());
            let mut want = DVector::from_element(yv.len(), C64::new(0.0, 0.0));
            for &i in &idx[..d] {
                let v = vt.row(i).adjoint();
                let c = (v.adjoint() * &yv)[(0, 0)];
                want += v * c;
            }
            let (_, x, _) = proj.project(&f, &y).unwrap();
            let err = max_abs_diff(&x.to_vec(), want.as_slice()) / common::sup(yv.as_slice());
            assert!(err <= 1e-9, "n={n} d={d}: {err:e}");
        }
    }
}

#[test]
fn aa_star_is_multiplication_by_phi_squared() {
    let f = vortex(64, &[[0.5, 0.5]], 2.0);
    let mut rng = Rng::new(5);
    let z = rng.cotangent(&f.grid);
    let w = apply_a(&f, &apply_a_adjoint(&f, &z));
    for k in 0..f.grid.sites() {
        let m = f.phi[k].norm_sqr();
        assert!((w.f[k] - z.f[k] * m).norm() <= 1e-12 * m.max(1.0));
        assert!((w.xi[k] - z.xi[k] * m).norm() <= 1e-12 * m.max(1.0));
    }
}

#[test]
fn grid_mismatch_is_a_precondition_error() {
    let f = coarse_vortex(8, &[[0.5, 0.5]], 2.0);
    let t = TangentVector::zeros(&common::grid(16));
    assert!(matches!(apply_l(&f, &t), Err(Error::Precondition(_))));
    assert!(matches!(apply_l_adjoint(&f, &CoTangentPair::zeros(4)), Err(Error::Precondition(_))));
}

#[test]
fn green_operator_inverts_h() {
    let f = vortex(32, &[[0.5, 0.5]], 2.0);
    let mut rng = Rng::new(17);
    let rhs = rng.complex(f.grid.sites());
    let u = green_scalar(&f, &rhs).unwrap();
    let back = apply_h(&f, &u);
    let r: f64 = back.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let b: f64 = rhs.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    assert!(r <= 1e-9 * b);
}

#[test]
fn horizontal_vectors_are_in_kernel_at_resolved_grid() {
    let f = vortex(64, &[[0.5, 0.5]], 8.0);
    let proj = HorizontalProjector::new(&f).unwrap();
    let mut rng = Rng::new(23);
    let y = rng.tangent(&f.grid);
    let (_, x, rep) = proj.project(&f, &y).unwrap();
    assert!(rep.lx_rel <= 1e-8, "{}", rep.lx_rel);
    // idempotent
    let (_, x2, _) = proj.project(&f, &x).unwrap();
    assert!(max_abs_diff(&x.to_vec(), &x2.to_vec()) <= 1e-8 * common::sup(&x.to_vec()));
    assert!(lanczos_min_ritz(&f, 30) > 0.0);
}

#[test]
fn cokernel_is_empty_without_vortices() {
    let g = common::grid(16);
    let (f, _) = vortexberry::vortex::solve_vortex(&Divisor::empty(), 5.0, &g, &Default::default()).unwrap();
    let p = HorizontalProjector::new(&f).unwrap();
    assert!(p.cokernel.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_pairs_are_adjoint(seed in 0u64..100_000) {
        let f = coarse_vortex(16, &[[0.5, 0.5]], 2.0);
        let g = &f.grid;
        let mut rng = Rng::new(seed);
        let t = rng.tangent(g);
        let z = rng.cotangent(g);
        let pairs: [(CoTangentPair, TangentVector); 3] = [
            (apply_l(&f, &t).unwrap(), apply_l_adjoint(&f, &z).unwrap()),
            (apply_d(&f, &t), apply_d_adjoint(&f, &z)),
            (apply_a(&f, &t), apply_a_adjoint(&f, &z)),
        ];
        for (lt, lsz) in &pairs {
            let a = lt.inner(&z, g);
            let b = l2_inner(&t, lsz, g);
            let scale = lt.norm(g) * z.norm(g);
            prop_assert!(rel_gap(a, b, scale) <= 1e-11, "{a} vs {b}");
        }
        // complex-linear pieces, checked with the Hermitian pairing
        let a = herm(&t_op(&z.f, g), &t.alpha);
        let b = herm(&z.f, &t_adj(&t.alpha, g));
        prop_assert!((a - b).norm() <= 1e-11 * a.norm().max(1.0));
        let a = herm(&dbar_cov(&f, &t.psi), &z.xi);
        let b = herm(&t.psi, &dbar_cov_adj(&f, &z.xi));
        prop_assert!((a - b).norm() <= 1e-11 * a.norm().max(1.0));
    }

    #[test]
    fn h_is_symmetric_positive(seed in 0u64..100_000) {
        let f = coarse_vortex(16, &[[0.5, 0.5]], 2.0);
        let mut rng = Rng::new(seed);
        let u = rng.complex(f.grid.sites());
        let v = rng.complex(f.grid.sites());
        let a = herm(&u, &apply_h(&f, &v));
        let b = herm(&apply_h(&f, &u), &v);
        prop_assert!((a - b).norm() <= 1e-11 * a.norm().max(1.0));
        prop_assert!(herm(&u, &apply_h(&f, &u)).re > 0.0);
    }
}
