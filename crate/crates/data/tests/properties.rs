use omega_core::spatial::{compose_similarity, warp_image, RigidParams, SimilarityMatrix};
use omega_data::phantom::{validate_params, MAX_TRANSLATION};
use omega_data::preprocess::{equalize_histogram, standardize};
use omega_data::{
    apply_augmentation, generate_phantom, partition_folds, preprocess, AugmentRanges, Corruption, View,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIZE: usize = 64;

fn pose() -> impl Strategy<Value = RigidParams<f64>> {
    (
        -MAX_TRANSLATION..MAX_TRANSLATION,
        -MAX_TRANSLATION..MAX_TRANSLATION,
        -3.1..3.1f64,
        0.5..1.0f64,
    )
        .prop_map(|(tx, ty, theta, s)| RigidParams::new(tx, ty, theta, s))
}

fn view() -> impl Strategy<Value = View> {
    (0usize..5).prop_map(|i| View::ALL[i])
}

fn inside(m: &SimilarityMatrix<f64>, x: f64, y: f64) -> bool {
    let (u, v) = m.apply(x, y);
    u.abs() <= 1.0 && v.abs() <= 1.0
}

fn lin(i: usize) -> f64 {
    omega_core::spatial::linspace_value(i, SIZE)
}

/// Mean absolute difference between `a` and `b` over pixels where `keep`.
fn masked_mae(a: &[f64], b: &[f64], keep: impl Fn(f64, f64) -> bool) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in 0..SIZE {
        for c in 0..SIZE {
            if keep(lin(c), lin(r)) {
                sum += (a[r * SIZE + c] - b[r * SIZE + c]).abs();
                n += 1;
            }
        }
    }
    assert!(n > SIZE * SIZE / 8, "too few comparable pixels ({n})");
    sum / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pose_canonicalizes_the_observed_image(seed in any::<u64>(), view in view(), p in pose()) {
        let canonical = generate_phantom(seed, 0, view, 0, RigidParams::identity(), SIZE, Corruption::NONE).unwrap();
        let observed = generate_phantom(seed, 0, view, 0, p, SIZE, Corruption::NONE).unwrap();
        let m = compose_similarity(&p);
        let back = warp_image(&observed.image, (SIZE, SIZE), &m, (SIZE, SIZE)).unwrap();
        let mae = masked_mae(&back, &canonical.image, |x, y| inside(&m, x, y));
        prop_assert!(mae < 0.05, "mean abs error {mae}");
    }

    #[test]
    fn augmentation_preserves_canonicalization(
        seed in any::<u64>(),
        view in view(),
        p in pose(),
        aug_seed in any::<u64>(),
    ) {
        let canonical = generate_phantom(seed, 0, view, 0, RigidParams::identity(), SIZE, Corruption::NONE).unwrap();
        let observed = generate_phantom(seed, 0, view, 0, p, SIZE, Corruption::NONE).unwrap();
        let a = AugmentRanges::default().draw(&mut ChaCha8Rng::seed_from_u64(aug_seed));
        let aug = apply_augmentation(&observed.image, &observed.labels, SIZE, &p, &a).unwrap();
        let m_new = compose_similarity(&aug.params);
        let m_old = compose_similarity(&p);
        let back = warp_image(&aug.image, (SIZE, SIZE), &m_new, (SIZE, SIZE)).unwrap();
        let mae = masked_mae(&back, &canonical.image, |x, y| inside(&m_new, x, y) && inside(&m_old, x, y));
        prop_assert!(mae < 0.05, "mean abs error {mae}");
        // The composed transform is unchanged: A·M′ = M.
        let recomposed = compose_similarity(&a).mul(&m_new);
        for r in 0..2 {
            for c in 0..3 {
                prop_assert!((recomposed.m[r][c] - m_old.m[r][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn labels_stay_within_the_view_classes(seed in any::<u64>(), view in view(), p in pose()) {
        let s = generate_phantom(seed, 0, view, 0, p, SIZE, Corruption::default()).unwrap();
        prop_assert_eq!(s.labels.len(), SIZE * SIZE);
        prop_assert!(s.labels.iter().all(|l| *l == 0 || view.classes().contains(l)));
        prop_assert!(validate_params(&s.params).is_ok());
    }

    #[test]
    fn standardization_is_idempotent(values in proptest::collection::vec(-5.0..5.0f64, 4..200)) {
        if let Some(once) = standardize(&values) {
            let twice = standardize(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn equalization_is_monotone_and_rank_stable(values in proptest::collection::vec(0.0..10.0f64, 2..200)) {
        let e = equalize_histogram(&values);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(e[i] <= e[j]);
                }
            }
        }
        prop_assert!(e.iter().all(|v| (0.0..=1.0).contains(v)));
        let ee = equalize_histogram(&e);
        let order = |x: &[f64]| {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
            idx
        };
        prop_assert_eq!(order(&e), order(&ee));
    }

    #[test]
    fn preprocessed_images_are_standardized(seed in any::<u64>(), view in view(), p in pose()) {
        let s = generate_phantom(seed, 0, view, 0, p, SIZE, Corruption::default()).unwrap();
        let out = preprocess(&s.image, (SIZE, SIZE), SIZE).unwrap();
        prop_assert!(!out.constant);
        let n = out.image.len() as f64;
        let mean = out.image.iter().sum::<f64>() / n;
        let var = out.image.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn folds_partition_subjects(
        counts in proptest::collection::vec(1usize..30, 3..40),
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        prop_assume!(counts.len() >= k);
        let pairs: Vec<(usize, usize)> = counts.iter().enumerate().map(|(s, &c)| (s * 3 + 1, c)).collect();
        let a = partition_folds(&pairs, k, seed).unwrap();
        prop_assert_eq!(a.folds.len(), pairs.len());
        prop_assert!(pairs.iter().all(|(s, _)| a.fold_of(*s).is_some_and(|f| f < k)));
        let mut seen: Vec<usize> = (0..k).flat_map(|f| a.subjects(f)).collect();
        seen.sort_unstable();
        let mut all: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        all.sort_unstable();
        prop_assert_eq!(seen, all);
        // Largest-first packing keeps every fold within one subject of the others.
        let totals = a.totals(&pairs);
        let spread = totals.iter().max().unwrap() - totals.iter().min().unwrap();
        prop_assert!(spread <= *counts.iter().max().unwrap());
        prop_assert_eq!(partition_folds(&pairs, k, seed).unwrap(), a);
    }
}
