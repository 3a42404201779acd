mod common;

use common::grid;
use proptest::prelude::*;
use std::f64::consts::PI;
use vortexberry::lattice::*;
use vortexberry::loops::*;
use vortexberry::Error;

fn smooth_disk(center: [f64; 2], r: f64, width: f64, g: &TorusGrid) -> Vec<f64> {
    (0..g.sites())
        .map(|k| {
            let d = torus_dist(g.coords(k), center, g);
            let s = ((r + width - d) / (2.0 * width)).clamp(0.0, 1.0);
            s * s * (3.0 - 2.0 * s)
        })
        .collect()
}

#[test]
fn loop_shapes_and_homology() {
    let g = grid(64);
    let div = Divisor::new(vec![[0.5, 0.5]]);
    let p = LoopParams::default();
    let c = make_loop(LoopKind::BoundingCircle, &p, &div, &g, 64).unwrap();
    assert_eq!(shadow(&c, &g).unwrap().homology_class, (0, 0));
    // the loop starts at the basepoint and circles p − (r, 0)
    assert!(torus_dist(c.divisor_at(0.0).points[0], [0.5, 0.5], &g) < 1e-12);
    assert!(torus_dist(c.divisor_at(0.5).points[0], [0.2, 0.5], &g) < 1e-12);
    let a = make_loop(LoopKind::AlphaCycle, &p, &div, &g, 64).unwrap();
    assert_eq!(shadow(&a, &g).unwrap().homology_class, (1, 0));
    let b = make_loop(LoopKind::BetaCycle, &p, &div, &g, 64).unwrap();
    assert_eq!(shadow(&b, &g).unwrap().homology_class, (0, 1));
    let rb = make_loop(LoopKind::BetaCycle, &LoopParams { reversed: true, ..p.clone() }, &div, &g, 64).unwrap();
    assert_eq!(shadow(&rb, &g).unwrap().homology_class, (0, -1));
}

#[test]
fn interchange_swaps_the_pair() {
    let g = grid(64);
    let div = Divisor::new(vec![[0.35, 0.5], [0.65, 0.5]]);
    let path = make_loop(LoopKind::Interchange, &LoopParams::default(), &div, &g, 64).unwrap();
    let end = path.divisor_at(1.0);
    assert!(torus_dist(end.points[0], [0.65, 0.5], &g) < 1e-9);
    assert!(torus_dist(end.points[1], [0.35, 0.5], &g) < 1e-9);
    let sh = shadow(&path, &g).unwrap();
    assert_eq!(sh.polylines.len(), 1);
    assert_eq!(sh.homology_class, (0, 0));
    // counterclockwise lens: the shoelace area is positive
    let pl = &sh.polylines[0];
    let area: f64 = pl.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum::<f64>() / 2.0;
    assert!(area > 0.0);
}

#[test]
fn invalid_loops_are_rejected() {
    let g = grid(64);
    let div = Divisor::new(vec![[0.35, 0.5], [0.65, 0.5]]);
    let p = LoopParams { mover: 5, ..Default::default() };
    assert!(matches!(make_loop(LoopKind::AlphaCycle, &p, &div, &g, 64), Err(Error::Config(_))));
    // an alpha cycle along the shared row runs into the other point
    let hit = make_loop(LoopKind::AlphaCycle, &LoopParams::default(), &div, &g, 64);
    assert!(matches!(hit, Err(Error::Config(_))));
    let open = LoopParams { tracks: vec![vec![[0.35, 0.5], [0.4, 0.5]], vec![[0.65, 0.5]]], ..Default::default() };
    assert!(matches!(make_loop(LoopKind::Custom, &open, &div, &g, 64), Err(Error::LoopClosure(_))));
}

#[test]
fn winding_of_linear_phases() {
    let g = grid(32);
    for (m, n) in [(1i64, 0i64), (0, 1), (2, -1), (-3, 2)] {
        let f: Vec<f64> = (0..g.sites())
            .map(|k| {
                let [x, y] = g.coords(k);
                m as f64 * x + n as f64 * y
            })
            .collect();
        let gt = GaugeTransform::from_phase(f);
        assert_eq!(winding(&gt, &CyclePath::row("r", 0.3, &g), &g).unwrap(), m);
        assert_eq!(winding(&gt, &CyclePath::column("c", 0.7, &g), &g).unwrap(), n);
        assert_eq!(winding(&gt, &CyclePath::row("r", 0.3, &g).reversed(), &g).unwrap(), -m);
    }
}

#[test]
fn fast_phase_is_a_resolution_error() {
    let g = grid(16);
    let f: Vec<f64> = (0..g.sites()).map(|k| 5.0 * g.coords(k)[0]).collect();
    let gt = GaugeTransform::from_phase(f);
    assert!(matches!(winding(&gt, &CyclePath::row("r", 0.0, &g), &g), Err(Error::Resolution(_))));
}

#[test]
fn crossing_probe_crosses_from_right_to_left() {
    let g = grid(64);
    let div = Divisor::new(vec![[0.65, 0.5]]);
    let path = make_loop(LoopKind::BoundingCircle, &LoopParams::default(), &div, &g, 64).unwrap();
    let sh = shadow(&path, &g).unwrap();
    let gt = GaugeTransform::from_phase(smooth_disk([0.5, 0.5], 0.15, 0.03, &g));
    for t in [0.1, 0.25, 0.6, 0.9] {
        let (probe, c) = crossing_probe(&sh, 0, t, 0.3).unwrap();
        assert!((torus_dist(c, [0.5, 0.5], &g) - 0.15).abs() < 1e-3);
        let delta = crossing_delta(&gt, &probe, &g).unwrap();
        assert!((delta - 1.0).abs() < 1e-9, "t={t}: {delta}");
    }
}

#[test]
fn current_pairing_matches_stokes() {
    // For g = exp(2πi f) with f the indicator of a disk, ∫ b ∧ df = ∮ b.
    let g = grid(128);
    let div = Divisor::new(vec![[0.55, 0.45]]);
    let path = make_loop(LoopKind::BoundingCircle, &LoopParams { radius: 0.2, ..Default::default() }, &div, &g, 512).unwrap();
    let sh = shadow(&path, &g).unwrap();
    let gt = GaugeTransform::from_phase(smooth_disk([0.35, 0.45], 0.2, 0.05, &g));
    for b in test_forms() {
        let cur = current_pairing(&gt, &b, &g).unwrap();
        let cyc = cycle_pairing(&sh, &b, &g);
        assert!((cur - cyc).abs() <= 5e-3 * b.c1_norm(1.0), "{cur} vs {cyc}");
    }
}

#[test]
fn test_forms_are_fixed_and_nontrivial() {
    let forms = test_forms();
    assert_eq!(forms.len(), 5);
    assert_eq!(TEST_FORMS.len(), 5);
    for b in &forms {
        let (c0, c1) = b.norms(1.0);
        assert!(c0 > 0.0 && c1 > 0.0);
        assert!((b.c1_norm(1.0) - (c0 + c1)).abs() < 1e-12);
    }
}

#[test]
fn duality_cycles_avoid_the_moving_point() {
    let g = grid(64);
    let p = [0.3, 0.45];
    let row = CyclePath::row("alpha", p[1] + CYCLE_OFFSET, &g);
    let col = CyclePath::column("beta", p[0] + CYCLE_OFFSET, &g);
    assert!(row.samples.iter().all(|x| (x[1] - p[1]).abs() >= 0.2));
    assert!(col.samples.iter().all(|x| (x[0] - p[0]).abs() >= 0.2));
    assert_eq!(row.samples.len(), 65);
    let both = row.concat(&col);
    assert_eq!(both.samples.len(), 129);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_unit_is_unimodular(x in 0.0f64..1.0, y in 0.0f64..1.0, seed in 0u64..1000) {
        let g = grid(8);
        let f = common::Rng::new(seed).real(64).iter().map(|v| 0.05 * v).collect();
        let gt = GaugeTransform::from_phase(f);
        let v = sample_unit(&gt.g, [x, y], &g);
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversal_negates_cycle_pairing(cx in 0.3f64..0.7, cy in 0.3f64..0.7, r in 0.08f64..0.2) {
        let g = grid(64);
        let div = Divisor::new(vec![[cx, cy]]);
        let p = LoopParams { radius: r, ..Default::default() };
        let fwd = shadow(&make_loop(LoopKind::BoundingCircle, &p, &div, &g, 128).unwrap(), &g).unwrap();
        let bwd = shadow(&make_loop(LoopKind::BoundingCircle, &LoopParams { reversed: true, ..p }, &div, &g, 128).unwrap(), &g).unwrap();
        for b in test_forms() {
            let a = cycle_pairing(&fwd, &b, &g);
            let c = cycle_pairing(&bwd, &b, &g);
            prop_assert!((a + c).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_increment_sums_small_steps(steps in prop::collection::vec(-1.5f64..1.5, 1..40)) {
        let mut acc = 0.0;
        let mut vals = vec![C64::new(1.0, 0.0)];
        for s in &steps {
            acc += s;
            vals.push(C64::from_polar(1.0, acc));
        }
        let w = phase_increment(&vals).unwrap();
        prop_assert!((w - acc / (2.0 * PI)).abs() < 1e-12);
    }
}
