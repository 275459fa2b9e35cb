use std::f64::consts::PI;

use omega_core::metrics::{dice, iou, success_curve, summarize, weighted_fg_iou};
use omega_core::spatial::{
    compose_similarity, decompose_similarity, generate_grid, transform_grid, wrap, RigidParams, SimilarityMatrix,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> impl Strategy<Value = RigidParams<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -10.0..10.0f64, 0.05..3.0f64)
        .prop_map(|(tx, ty, theta, s)| RigidParams::new(tx, ty, theta, s))
}

fn masks() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (1usize..64).prop_flat_map(|n| (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n)))
}

#[test]
fn compose_decompose_round_trip_over_many_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for _ in 0..10_000 {
        let p = RigidParams::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-PI..PI),
            rng.gen_range(0.1..2.0),
        );
        let q = decompose_similarity(&compose_similarity(&p)).unwrap();
        let err = [q.tx - p.tx, q.ty - p.ty, wrap(q.theta - p.theta), q.s - p.s];
        assert!(err.iter().all(|e| e.abs() < 1e-9), "{p:?} -> {q:?}");
    }
}

proptest! {
    #[test]
    fn wrap_is_periodic_and_bounded(d in -100.0..100.0f64, k in -5i32..5) {
        let w = wrap(d);
        prop_assert!((-PI..PI).contains(&w));
        prop_assert!((wrap(d + 2.0 * PI * k as f64) - w).abs() < 1e-9 || (wrap(d + 2.0 * PI * k as f64) - w).abs() > 2.0 * PI - 1e-9);
        prop_assert!((w - d).rem_euclid(2.0 * PI) < 1e-9 || (w - d).rem_euclid(2.0 * PI) > 2.0 * PI - 1e-9);
    }

    #[test]
    fn decomposition_is_canonical(p in params()) {
        let q = decompose_similarity(&compose_similarity(&p)).unwrap();
        prop_assert!(q.s > 0.0);
        prop_assert!((-PI..PI).contains(&q.theta));
        let m = compose_similarity(&q);
        let n = compose_similarity(&p);
        for r in 0..2 {
            for c in 0..3 {
                prop_assert!((m.m[r][c] - n.m[r][c]).abs() < 1e-9 * (1.0 + n.m[r][c].abs()));
            }
        }
    }

    #[test]
    fn inverse_undoes_composition(p in params()) {
        let m = compose_similarity(&p);
        let id = m.mul(&m.inverse());
        let eye = SimilarityMatrix::<f64>::identity();
        for r in 0..3 {
            for c in 0..3 {
                prop_assert!((id.m[r][c] - eye.m[r][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn transformed_grid_matches_matrix(p in params()) {
        let m = compose_similarity(&p);
        let g = generate_grid::<f64>(5, 7).unwrap();
        let t = transform_grid(&g, &m);
        for r in 0..5 {
            for c in 0..7 {
                let (x, y) = g.point(r, c);
                let (ex, ey) = m.apply(x, y);
                let (tx, ty) = t.point(r, c);
                prop_assert!((tx - ex).abs() < 1e-12 && (ty - ey).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overlap_metrics_are_bounded_and_symmetric((a, b) in masks()) {
        let j = iou(&a, &b).unwrap();
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&j) && (0.0..=1.0).contains(&d));
        prop_assert_eq!(j, iou(&b, &a).unwrap());
        prop_assert!(d >= j - 1e-12);
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-9);
        prop_assert!(a.iter().all(|v| !v) || (iou(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_iou_is_a_convex_combination(
        gt in proptest::collection::vec(0u8..4, 1..80),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<u8> = gt.iter().map(|&g| if rng.gen_bool(0.7) { g } else { rng.gen_range(0..4) }).collect();
        match weighted_fg_iou(&gt, &pred, &[1, 2, 3]) {
            Ok(w) => {
                let total: f64 = w.per_class.iter().map(|c| c.1).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&w.value));
                prop_assert!((weighted_fg_iou(&gt, &gt, &[1, 2, 3]).unwrap().value - 1.0).abs() < 1e-9);
            }
            Err(_) => prop_assert!(gt.iter().all(|&g| g == 0)),
        }
    }

    #[test]
    fn success_curve_is_monotone_with_unit_auc_bound(values in proptest::collection::vec(0.0..=1.0f64, 1..50)) {
        let thresholds: Vec<f64> = (40..=100).map(|i| i as f64 / 100.0).collect();
        let (points, auc) = success_curve(&values, &thresholds).unwrap();
        prop_assert!(points.windows(2).all(|w| w[1].success_rate <= w[0].success_rate));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&auc));
    }

    #[test]
    fn summary_is_ordered(values in proptest::collection::vec(-1e3..1e3f64, 1..40)) {
        let s = summarize(&values).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= hi);
        prop_assert!((s.iqr - (s.q3 - s.q1)).abs() < 1e-12);
    }
}
