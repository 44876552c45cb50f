//! Fixture builders shared by the benchmark targets. Sizes are chosen so a
//! full `cargo bench` finishes in minutes on one core while still exercising
//! the cache-unfriendly shapes the library sees in the ablation runs.

use mmts_core::embedding::EmbeddingMatrix;
use mmts_core::schedule::{LossKind, ScheduleConfig};
use mmts_core::synthdata::{generate, PairedDataset, SizeDistribution, SyntheticDatasetSpec};
use mmts_core::trainer::{ShiftTableSource, TrainConfig, TrainMode};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random rows on the unit sphere, deterministic in the seed.
pub fn unit_rows(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = Uniform::new(-1.0, 1.0);
    let data: Vec<f64> = (0..n * d).map(|_| uniform.sample(&mut rng)).collect();
    EmbeddingMatrix::new(n, d, data)
        .unwrap()
        .l2_normalized()
        .unwrap()
}

/// Long-tail paired dataset at the ablation's per-run scale.
pub fn ablation_scale_dataset(seed: u64) -> PairedDataset {
    let mut sizes = vec![120u64; 4];
    sizes.extend(std::iter::repeat_n(10u64, 16));
    generate(&SyntheticDatasetSpec {
        num_clusters: 20,
        distribution: SizeDistribution::Explicit { sizes },
        latent_dim: 16,
        view_dims: (12, 10),
        noise_sigma: 0.2,
        seed,
    })
    .unwrap()
}

/// Training recipe matching the dataset from `ablation_scale_dataset`.
pub fn bench_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        schedule: ScheduleConfig {
            alpha: 0.01,
            period: 500,
            sh_minus: 0.015,
            sh_plus: 0.035,
            loss_kind: LossKind::InfoNce,
        },
        mode: TrainMode::TsAndIcs,
        learning_rate: 0.1,
        batch_size: 64,
        total_iters: 1,
        d_emb: 16,
        seed,
        shift_table_source: ShiftTableSource::OracleLabels,
        kmeans_k: 20,
        kmeans_max_iters: 100,
        kmeans_tol: 1e-6,
        log_interval: 100,
    }
}
