mod common;

use common::{max_abs_diff, tau0, vortex, Rng};
use proptest::prelude::*;
use vortexberry::berry::*;
use vortexberry::lattice::*;
use vortexberry::linops::{apply_l_adjoint, CoTangentPair, HorizontalProjector};
use vortexberry::loops::*;
use vortexberry::tangent::{build_frame, TangentSeed};
use vortexberry::Error;

#[test]
fn vertical_vector_is_l_star_of_minus_i_f() {
    let f = vortex(32, &[[0.5, 0.5]], 2.0);
    let fun = Rng::new(1).real(f.grid.sites());
    let zf: Vec<C64> = fun.iter().map(|v| C64::new(0.0, -v)).collect();
    let z = CoTangentPair { f: zf, xi: vec![C64::new(0.0, 0.0); f.grid.sites()] };
    let via_adjoint = apply_l_adjoint(&f, &z).unwrap();
    let direct = vertical_vector(&f, &fun);
    assert!(max_abs_diff(&via_adjoint.to_vec(), &direct.to_vec()) <= 1e-12 * common::sup(&direct.to_vec()));
}

#[test]
fn connection_reproduces_vertical_generator() {
    let f = vortex(32, &[[0.5, 0.5]], 2.0);
    let fun = Rng::new(2).real(f.grid.sites());
    let a = connection_form(&f, &vertical_vector(&f, &fun)).unwrap();
    for (x, v) in a.iter().zip(&fun) {
        assert!(x.re == 0.0);
        assert!((x.im - v).abs() <= 1e-8);
    }
}

#[test]
fn connection_vanishes_on_horizontal_vectors() {
    let f = vortex(64, &[[0.5, 0.5]], 8.0);
    let proj = HorizontalProjector::new(&f).unwrap();
    let y = Rng::new(4).tangent(&f.grid);
    let (_, x, _) = proj.project(&f, &y).unwrap();
    let a = connection_form(&f, &x).unwrap();
    let fun = Rng::new(5).real(f.grid.sites());
    // horizontal means orthogonal to every vertical vector
    let v = vertical_vector(&f, &fun);
    assert!(l2_inner(&x, &v, &f.grid).abs() <= 1e-8 * x.norm(&f.grid) * v.norm(&f.grid));
    assert!(common::sup(&a) <= 1e-6 * common::sup(&x.to_vec()));
}

#[test]
fn curvature_rejects_non_horizontal_input() {
    let f = vortex(32, &[[0.5, 0.5]], 2.0);
    let y = Rng::new(6).tangent(&f.grid);
    assert!(matches!(curvature_pair(&f, &y, &y), Err(Error::Precondition(_))));
}

#[test]
fn curvature_profile_at_eight_tau0() {
    let f = vortex(64, &[[0.5, 0.5]], 8.0);
    let proj = HorizontalProjector::new(&f).unwrap();
    let frame = build_frame(&f, &proj).unwrap();
    let r = curvature_report(&f, &frame).unwrap();
    assert!(r.min_diag >= -1e-10);
    assert!(r.rel_sup_error <= 0.1, "{}", r.rel_sup_error);
    let x = &frame.x[0];
    let om = curvature_pair(&f, x, &x.scale(I)).unwrap();
    let back = curvature_pair(&f, &x.scale(I), x).unwrap();
    assert!(max_abs_diff(&om, &back.iter().map(|v| -v).collect::<Vec<_>>()) == 0.0);
    assert!(om.iter().all(|v| v.re == 0.0));
}

fn circle(n: usize, units: f64) -> (LoopPath, TorusGrid, f64) {
    let g = common::grid(n);
    let div = Divisor::new(vec![[0.65, 0.5]]);
    let path = make_loop(LoopKind::BoundingCircle, &LoopParams { radius: 0.15, ..Default::default() }, &div, &g, 64).unwrap();
    let tau = units * tau0(1, &g);
    (path, g, tau)
}

#[test]
fn constant_loop_has_trivial_holonomy() {
    let g = common::grid(32);
    let div = Divisor::new(vec![[0.5, 0.5]]);
    let path = LoopPath {
        kind: LoopKind::Custom,
        curves: vec![Curve::Constant([0.5, 0.5])],
        samples: 64,
        basepoint: div.clone(),
    };
    let (phi, gc) = accumulate_phase(&path, 2.0 * tau0(1, &g), &g, &Default::default(), None, 1.0).unwrap();
    assert!(phi.iter().all(|&v| v == 0.0));
    assert!(gc.g.iter().all(|&v| v == C64::new(1.0, 0.0)));
}

#[test]
fn bounding_circle_holonomy_is_consistent() {
    let (path, g, tau) = circle(32, 2.0);
    let cycles = vec![CyclePath::row("row", 0.05, &g), CyclePath::column("column", 0.05, &g)];
    let rep = parallel_transport(&path, tau, &g, &cycles, &[], &TransportOptions::default()).unwrap();
    assert_eq!(rep.winding["row"], 0);
    assert_eq!(rep.winding["column"], 0);
    assert!(rep.richardson_phase_diff.unwrap() <= 1e-3);
    assert_eq!(rep.shadow_homology, (0, 0));
    assert_eq!(rep.steps, 128);
    assert!(rep.g.max_modulus_defect() < 1e-12);
    // the phase is concentrated inside the shadow
    assert!(rep.inside_mean.unwrap() > rep.outside_mean.unwrap());
    assert_eq!(rep.crossing_deltas.len(), 1);
    assert!(rep.crossing_deltas[0] > 0.0);
}

#[test]
fn phase_concentrates_as_tau_grows() {
    let mut last = (0.0, 0.0, f64::INFINITY);
    for units in [2.0, 4.0, 8.0] {
        let (path, g, tau) = circle(64, units);
        let opts = TransportOptions { richardson: false, ..Default::default() };
        let rep = parallel_transport(&path, tau, &g, &[], &[], &opts).unwrap();
        let now = (rep.inside_mean.unwrap(), rep.crossing_deltas[0], rep.outside_mean.unwrap());
        assert!(now.0 > last.0 && now.1 > last.1 && now.2 < last.2, "{units}: {now:?} after {last:?}");
        last = now;
    }
}

#[test]
#[ignore = "asymptotic; at 8τ₀ with radius 0.15 the measured inside mean is 0.39 and sup|g − 1| is 1.9"]
fn inside_outside_dichotomy_at_eight_tau0() {
    let (path, g, tau) = circle(64, 8.0);
    let rep = parallel_transport(&path, tau, &g, &[], &[], &TransportOptions::default()).unwrap();
    assert!((rep.inside_mean.unwrap() - 1.0).abs() <= 0.1);
    assert!(rep.outside_mean.unwrap().abs() <= 0.1);
    assert!(rep.sup_off_shadow <= 0.1);
}

#[test]
fn reversed_loop_inverts_holonomy() {
    let (path, g, tau) = circle(32, 2.0);
    let opts = TransportOptions { richardson: false, ..Default::default() };
    let a = parallel_transport(&path, tau, &g, &[], &[], &opts).unwrap();
    let b = parallel_transport(&path.reversed(), tau, &g, &[], &[], &opts).unwrap();
    let prod: Vec<C64> = a.g.g.iter().zip(&b.g.g).map(|(x, y)| x * y).collect();
    let dev = prod.iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max);
    assert!(dev <= 2e-3, "{dev}");
}

#[test]
fn holonomy_is_gauge_invariant() {
    let (path, g, tau) = circle(32, 2.0);
    let opts = TransportOptions { richardson: false, ..Default::default() };
    let gauge = GaugeTransform::from_phase(Rng::new(8).real(g.sites()));
    let a = parallel_transport(&path, tau, &g, &[], &[], &opts).unwrap();
    let b = parallel_transport_gauged(&path, tau, &g, &[], &[], &opts, Some(&gauge)).unwrap();
    assert!(max_abs_diff(&a.g.g, &b.g.g) <= 1e-8);
}

#[test]
fn transport_requires_enough_steps() {
    let (path, g, tau) = circle(32, 2.0);
    let r = parallel_transport(&path.with_samples(32), tau, &g, &[], &[], &TransportOptions::default());
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn coulomb_fix_zeroes_divergence() {
    let f = vortex(32, &[[0.5, 0.5]], 2.0);
    let gauge = GaugeTransform::from_phase(Rng::new(9).real(f.grid.sites()).iter().map(|v| 0.05 * v).collect());
    let moved = f.gauge_apply(&gauge);
    let (gt, fixed) = coulomb_fix(&moved, &f, 0).unwrap();
    assert!(coulomb_residual(&fixed, &f) <= 1e-8);
    assert!((gt.g[0] - 1.0).norm() < 1e-14);
    // a pure gauge is undone up to the constant g(basepoint)
    let c = gauge.g[0];
    let back: Vec<C64> = fixed.phi.iter().zip(&f.phi).map(|(a, b)| a - c * b).collect();
    assert!(common::sup(&back) <= 1e-8 * f.tau.sqrt());
}

#[test]
fn large_area_rescaling_is_a_vortex() {
    let f = vortex(64, &[[0.5, 0.5]], 2.0);
    let t = f.tau.sqrt();
    let la = rescale_large_area(&f, t).unwrap();
    let (r1, r2) = la.residuals();
    assert!(r1 <= 1e-8, "{r1}");
    assert!(r2 <= vortexberry::vortex::dbar_contract(&f.grid, f.tau, 1e-8), "{r2}");
    let (links, phi) = la.to_tau_vortex();
    assert_eq!(links, f.links);
    assert!(max_abs_diff(&phi, &f.phi) <= 1e-12 * t);
    assert!(matches!(rescale_large_area(&f, 0.0), Err(Error::Domain(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn curvature_is_antisymmetric(seed in 0u64..1000) {
        let f = vortex(32, &[[0.5, 0.5]], 2.0);
        let mut rng = Rng::new(seed);
        let a = rng.tangent(&f.grid);
        let b = rng.tangent(&f.grid);
        let ab = curvature_pair_unchecked(&f, &a, &b).unwrap();
        let ba = curvature_pair_unchecked(&f, &b, &a).unwrap();
        let aa = curvature_pair_unchecked(&f, &a, &a).unwrap();
        prop_assert!(max_abs_diff(&ab, &ba.iter().map(|v| -v).collect::<Vec<_>>()) <= 1e-9 * common::sup(&ab).max(1e-12));
        prop_assert!(common::sup(&aa) <= 1e-12 * common::sup(&ab).max(1.0));
    }

    #[test]
    fn frame_curvature_diagonal_is_nonnegative(x in 0.2f64..0.8, y in 0.2f64..0.8) {
        let f = vortex(32, &[[x, y]], 2.0);
        let proj = HorizontalProjector::new(&f).unwrap();
        let frame = build_frame(&f, &proj).unwrap();
        let s = TangentSeed::unit(&f.divisor, 0);
        prop_assert_eq!(s.theta.len(), 1);
        let r = curvature_report(&f, &frame).unwrap();
        prop_assert!(r.min_diag >= -1e-10);
    }
}
