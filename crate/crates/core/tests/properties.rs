//! Property tests for structural invariants.

mod common;

use proptest::prelude::*;

use mmts_core::embedding::EmbeddingMatrix;
use mmts_core::loss::{
    infonce, max_margin, multimodal_infonce, Direction, SimilarityMatrix, TemperatureVector,
};
use mmts_core::retrieval_eval::recall_at_k;
use mmts_core::schedule::{
    base_temperature, cluster_shift, sample_temperature, LossKind, ScheduleConfig, ShiftTable,
};
use mmts_core::synthdata::{sample_sizes, SizeDistribution, SyntheticDatasetSpec};
use mmts_core::distribution::kmeans_fit;

fn schedule_config(alpha: f64, period: u64, sh_minus: f64, sh_plus: f64) -> ScheduleConfig {
    ScheduleConfig {
        alpha,
        period,
        sh_minus,
        sh_plus,
        loss_kind: LossKind::InfoNce,
    }
}

/// Similarity matrices as flat value vectors in [-1, 1].
fn similarity_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(-1.0f64..=1.0, n * n).prop_map(move |v| (n, v))
    })
}

proptest! {
    #[test]
    fn base_wave_stays_within_half_amplitude(
        alpha in 0.001f64..0.2,
        period in 1u64..5000,
        t in 0u64..200_000,
    ) {
        let cfg = schedule_config(alpha, period, alpha, alpha * 2.0);
        let base = base_temperature(t, &cfg);
        prop_assert!(base >= -alpha / 2.0 - 1e-15);
        prop_assert!(base <= alpha / 2.0 + 1e-15);
        prop_assert_eq!(base.to_bits(), base_temperature(t + period, &cfg).to_bits());
    }

    #[test]
    fn shifts_interpolate_within_bounds_and_monotonically(
        sizes in proptest::collection::vec(1u64..100_000, 1..40),
        bounds in (0.01f64..0.5, 0.0f64..0.5),
    ) {
        let (sh_minus, delta) = bounds;
        let sh_plus = sh_minus + delta;
        let assignments: Vec<usize> = (0..sizes.len()).collect();
        let table = ShiftTable::from_assignments(&assignments, sizes.len(), sh_minus, sh_plus, 0)
            .unwrap();
        // Table counts one sample per cluster; overwrite with the drawn sizes
        // through the public constructor path instead.
        let min = *sizes.iter().min().unwrap();
        let max = *sizes.iter().max().unwrap();
        let shifts: Vec<f64> = sizes
            .iter()
            .map(|&s| cluster_shift(s, min, max, sh_minus, sh_plus).unwrap())
            .collect();
        for &sh in &shifts {
            prop_assert!(sh >= sh_minus && sh <= sh_plus);
        }
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by_key(|&c| sizes[c]);
        for pair in order.windows(2) {
            prop_assert!(shifts[pair[0]] <= shifts[pair[1]]);
        }
        prop_assert_eq!(shifts[order[0]], if min == max { (sh_minus + sh_plus) / 2.0 } else { sh_minus });
        prop_assert_eq!(shifts[*order.last().unwrap()], if min == max { (sh_minus + sh_plus) / 2.0 } else { sh_plus });
        drop(table);
    }

    #[test]
    fn scheduled_values_stay_strictly_positive(
        alpha in 0.01f64..0.1,
        t in 0u64..10_000,
        sizes in proptest::collection::vec(1u64..1000, 2..20),
    ) {
        let sh_minus = alpha / 2.0 + 0.01;
        let sh_plus = sh_minus + 0.1;
        let cfg = schedule_config(alpha, 500, sh_minus, sh_plus);
        cfg.validate().unwrap();
        let mut assignments = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            assignments.extend(std::iter::repeat_n(c, (s % 5 + 1) as usize));
        }
        let table =
            ShiftTable::from_assignments(&assignments, sizes.len(), sh_minus, sh_plus, 0).unwrap();
        for i in 0..assignments.len() {
            let tau = sample_temperature(t, i, &table, &cfg).unwrap();
            prop_assert!(tau > 0.0);
            let (lo, hi) = cfg.value_range();
            prop_assert!(tau >= lo - 1e-15 && tau <= hi + 1e-15);
        }
    }

    #[test]
    fn zipf_apportionment_is_exact_and_ordered(
        k in 1usize..30,
        exponent in 0.0f64..3.0,
        extra in 0u64..5000,
    ) {
        let total = k as u64 + extra;
        let spec = SyntheticDatasetSpec {
            num_clusters: k,
            distribution: SizeDistribution::Zipf { exponent, total },
            latent_dim: 2,
            view_dims: (2, 2),
            noise_sigma: 0.0,
            seed: 0,
        };
        let sizes = sample_sizes(&spec).unwrap();
        prop_assert_eq!(sizes.iter().sum::<u64>(), total);
        prop_assert!(sizes.iter().all(|&s| s >= 1));
        for pair in sizes.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
    }

    #[test]
    fn infonce_loss_non_negative_and_rows_sum_to_zero(
        (n, values) in similarity_strategy(10),
        tau in 0.05f64..1.0,
    ) {
        let s = SimilarityMatrix::new(n, values, Direction::VToT).unwrap();
        let taus = TemperatureVector::uniform(n, tau).unwrap();
        let r = infonce(&s, &taus).unwrap();
        prop_assert!(r.loss >= -1e-15);
        for i in 0..n {
            let sum: f64 = r.grad_row(i).iter().sum();
            prop_assert!(sum.abs() < 1e-12);
        }
    }

    #[test]
    fn multimodal_loss_is_transpose_symmetric(
        (n, values) in similarity_strategy(10),
        tau in 0.05f64..1.0,
    ) {
        let s = SimilarityMatrix::new(n, values, Direction::VToT).unwrap();
        let taus = TemperatureVector::uniform(n, tau).unwrap();
        let a = multimodal_infonce(&s, &taus).unwrap();
        let b = multimodal_infonce(&s.transposed(), &taus).unwrap();
        prop_assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.grad(i, j).to_bits(), b.grad(j, i).to_bits());
            }
        }
    }

    #[test]
    fn max_margin_gradient_has_hinge_sign_structure(
        (n, values) in similarity_strategy(10),
        margin in 0.01f64..0.5,
    ) {
        let s = SimilarityMatrix::new(n, values, Direction::VToT).unwrap();
        let margins = TemperatureVector::uniform(n, margin).unwrap();
        let r = max_margin(&s, &margins).unwrap();
        prop_assert!(r.loss >= 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    prop_assert!(r.grad(i, j) <= 0.0);
                } else {
                    prop_assert!(r.grad(i, j) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn mme_round_trip_preserves_f32_exact_values(
        rows in 1usize..6,
        cols in 1usize..6,
        seed in 0u64..1000,
    ) {
        let mut rng = common::seeded_rng(seed);
        use rand::Rng;
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.gen_range(-10.0f32..10.0) as f64)
            .collect();
        let m = EmbeddingMatrix::new(rows, cols, data).unwrap();
        let back = EmbeddingMatrix::from_mme_bytes(&m.to_mme_bytes()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn recall_is_monotone_in_cutoff(
        (n, values) in similarity_strategy(12),
    ) {
        let s = SimilarityMatrix::new(n, values, Direction::VToT).unwrap();
        let ks: Vec<usize> = (1..=n).collect();
        let recall = recall_at_k(&s, &ks).unwrap();
        let mut prev = 0.0;
        for k in 1..=n {
            prop_assert!(recall[&k] >= prev);
            prev = recall[&k];
        }
        prop_assert_eq!(recall[&n], 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kmeans_objective_never_rises(
        n in 4usize..24,
        k in 1usize..4,
        seed in 0u64..100,
    ) {
        let mut rng = common::seeded_rng(seed);
        use rand::Rng;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
        // Zero rows cannot be normalized; nudge any that appear.
        let data: Vec<f64> = data
            .iter()
            .map(|&v| if v == 0.0 { 0.1 } else { v })
            .collect();
        let x = EmbeddingMatrix::new(n, 3, data).unwrap();
        let model = kmeans_fit(&x, k.min(n), seed, 50, 0.0).unwrap();
        for pair in model.inertia_history.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-300);
        }
        // Every assignment is the true nearest centroid.
        let labels = model.assign(&x).unwrap();
        let xn = x.l2_normalized().unwrap();
        for (i, &label) in labels.iter().enumerate() {
            let di = |c: usize| -> f64 {
                xn.row(i)
                    .iter()
                    .zip(model.centroid(c))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            };
            let assigned = di(label);
            for c in 0..model.k {
                prop_assert!(assigned <= di(c) + 1e-15);
            }
        }
    }
}
