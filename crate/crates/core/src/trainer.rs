//! Toy two-tower trainer for schedule ablations.
//!
//! Each tower is a single linear map from a raw view to a shared embedding
//! space; embeddings are L2-normalized before the similarity matrix. The
//! trainer runs plain SGD on the selected contrastive loss, with the
//! per-sample temperature (or margin) supplied by one of four modes so the
//! cosine wave and the cluster shifts can be ablated independently.
//!
//! Determinism: model initialization and batch sampling draw from separate
//! ChaCha8 streams of the config seed, and gradient accumulation over the
//! batch runs in sample order.

use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{build_shift_table, kmeans_fit};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::loss::{
    embedding_gradients, max_margin, multimodal_infonce, similarity_matrix, TemperatureVector,
};
use crate::schedule::{base_temperature, LossKind, ScheduleConfig, ShiftTable};
use crate::synthdata::PairedDataset;

const STREAM_MODEL_INIT: u64 = 16;
const STREAM_BATCHES: u64 = 17;

pub const MODEL_VISUAL_FILE: &str = "tower_visual.mme";
pub const MODEL_TEXT_FILE: &str = "tower_text.mme";

/// Two linear towers mapping raw views into a shared embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTowerModel {
    pub d_visual: usize,
    pub d_text: usize,
    pub d_emb: usize,
    /// d_visual x d_emb, row-major.
    pub w_visual: Vec<f64>,
    /// d_text x d_emb, row-major.
    pub w_text: Vec<f64>,
}

impl TwoTowerModel {
    /// Gaussian initialization scaled by 1/sqrt(fan-in).
    pub fn init(d_visual: usize, d_text: usize, d_emb: usize, seed: u64) -> Result<Self> {
        if d_visual == 0 || d_text == 0 || d_emb == 0 {
            return Err(Error::InvalidArgument(
                "tower dimensions must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_MODEL_INIT);
        let mut draw = |rows: usize, scale: f64| -> Vec<f64> {
            (0..rows * d_emb)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect()
        };
        let w_visual = draw(d_visual, 1.0 / (d_visual as f64).sqrt());
        let w_text = draw(d_text, 1.0 / (d_text as f64).sqrt());
        Ok(Self {
            d_visual,
            d_text,
            d_emb,
            w_visual,
            w_text,
        })
    }

    fn project(x: &EmbeddingMatrix, w: &[f64], d_in: usize, d_emb: usize) -> Result<EmbeddingMatrix> {
        if x.cols() != d_in {
            return Err(Error::InvalidArgument(format!(
                "input has {} columns, tower expects {d_in}",
                x.cols()
            )));
        }
        let n = x.rows();
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let row = x.row(i);
                (0..d_emb)
                    .map(|k| {
                        let mut acc = 0.0;
                        for (a, v) in row.iter().enumerate() {
                            acc += v * w[a * d_emb + k];
                        }
                        acc
                    })
                    .collect::<Vec<f64>>()
            })
            .collect();
        EmbeddingMatrix::new(n, d_emb, data)
    }

    /// Linear (pre-normalization) outputs of the visual tower.
    pub fn project_visual(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        Self::project(x, &self.w_visual, self.d_visual, self.d_emb)
    }

    /// Linear (pre-normalization) outputs of the text tower.
    pub fn project_text(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        Self::project(x, &self.w_text, self.d_text, self.d_emb)
    }

    /// Unit-normalized embeddings of both views.
    pub fn forward(
        &self,
        visual: &EmbeddingMatrix,
        text: &EmbeddingMatrix,
    ) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
        Ok((
            self.project_visual(visual)?.l2_normalized()?,
            self.project_text(text)?.l2_normalized()?,
        ))
    }

    pub fn is_finite(&self) -> bool {
        self.w_visual.iter().chain(&self.w_text).all(|v| v.is_finite())
    }

    /// Writes `tower_visual.mme` and `tower_text.mme` into `dir`.
    pub fn save_dir<P: AsRef<std::path::Path>>(&self, dir: P) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        EmbeddingMatrix::new(self.d_visual, self.d_emb, self.w_visual.clone())?
            .save_mme(dir.join(MODEL_VISUAL_FILE))?;
        EmbeddingMatrix::new(self.d_text, self.d_emb, self.w_text.clone())?
            .save_mme(dir.join(MODEL_TEXT_FILE))?;
        Ok(())
    }

    pub fn load_dir<P: AsRef<std::path::Path>>(dir: P) -> Result<Self> {
        let dir = dir.as_ref();
        let wv = EmbeddingMatrix::load_mme(dir.join(MODEL_VISUAL_FILE))?;
        let wt = EmbeddingMatrix::load_mme(dir.join(MODEL_TEXT_FILE))?;
        if wv.cols() != wt.cols() {
            return Err(Error::Validation(format!(
                "tower embedding dims differ: {} visual vs {} text",
                wv.cols(),
                wt.cols()
            )));
        }
        Ok(Self {
            d_visual: wv.rows(),
            d_text: wt.rows(),
            d_emb: wv.cols(),
            w_visual: wv.data().to_vec(),
            w_text: wt.data().to_vec(),
        })
    }
}

/// Where the per-sample scheduled value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainMode {
    /// Constant value for every sample and iteration.
    Fixed { value: f64 },
    /// Cosine wave plus the midpoint of the shift bounds; no per-cluster term.
    TsOnly,
    /// Per-cluster shift only; no wave.
    IcsOnly,
    /// Full schedule: wave plus per-cluster shift.
    TsAndIcs,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainMode::Fixed { value } => write!(f, "fixed:{value}"),
            TrainMode::TsOnly => write!(f, "ts_only"),
            TrainMode::IcsOnly => write!(f, "ics_only"),
            TrainMode::TsAndIcs => write!(f, "ts_and_ics"),
        }
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ts_only" => Ok(TrainMode::TsOnly),
            "ics_only" => Ok(TrainMode::IcsOnly),
            "ts_and_ics" => Ok(TrainMode::TsAndIcs),
            other => {
                if let Some(v) = other.strip_prefix("fixed:") {
                    let value: f64 = v.parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad fixed value {v:?}"))
                    })?;
                    Ok(TrainMode::Fixed { value })
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown mode {other:?}; expected fixed:<v>, ts_only, ics_only, ts_and_ics"
                    )))
                }
            }
        }
    }
}

/// Which assignments feed the shift table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftTableSource {
    /// Ground-truth cluster labels of the synthetic dataset.
    OracleLabels,
    /// K-Means on the raw text view.
    KmeansOnTextView,
}

impl std::fmt::Display for ShiftTableSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShiftTableSource::OracleLabels => write!(f, "oracle_labels"),
            ShiftTableSource::KmeansOnTextView => write!(f, "kmeans_on_text_view"),
        }
    }
}

impl FromStr for ShiftTableSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle_labels" => Ok(ShiftTableSource::OracleLabels),
            "kmeans_on_text_view" => Ok(ShiftTableSource::KmeansOnTextView),
            other => Err(Error::InvalidArgument(format!(
                "unknown shift table source {other:?}"
            ))),
        }
    }
}

fn default_shift_source() -> ShiftTableSource {
    ShiftTableSource::OracleLabels
}

fn default_kmeans_k() -> usize {
    200
}

fn default_kmeans_max_iters() -> usize {
    300
}

fn default_kmeans_tol() -> f64 {
    1e-6
}

fn default_log_interval() -> u64 {
    100
}

/// Full training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: ScheduleConfig,
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_iters: u64,
    pub d_emb: usize,
    pub seed: u64,
    #[serde(default = "default_shift_source")]
    pub shift_table_source: ShiftTableSource,
    #[serde(default = "default_kmeans_k")]
    pub kmeans_k: usize,
    #[serde(default = "default_kmeans_max_iters")]
    pub kmeans_max_iters: usize,
    #[serde(default = "default_kmeans_tol")]
    pub kmeans_tol: f64,
    #[serde(default = "default_log_interval")]
    pub log_interval: u64,
}

impl TrainConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        self.schedule.validate()?;
        // Zero is allowed: a no-op run that leaves the weights at init.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 2".into(),
            ));
        }
        if self.batch_size > n_samples {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} exceeds dataset size {n_samples}",
                self.batch_size
            )));
        }
        if self.d_emb == 0 {
            return Err(Error::InvalidArgument("d_emb must be at least 1".into()));
        }
        if let TrainMode::Fixed { value } = self.mode {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "fixed mode value must be positive, got {value}"
                )));
            }
        }
        if self.log_interval == 0 {
            return Err(Error::InvalidArgument(
                "log_interval must be at least 1".into(),
            ));
        }
        if self.needs_shift_table()
            && self.shift_table_source == ShiftTableSource::KmeansOnTextView
        {
            if self.kmeans_k == 0 || self.kmeans_k > n_samples {
                return Err(Error::InvalidArgument(format!(
                    "kmeans_k {} outside [1, {n_samples}]",
                    self.kmeans_k
                )));
            }
            if self.kmeans_max_iters == 0 {
                return Err(Error::InvalidArgument(
                    "kmeans_max_iters must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn needs_shift_table(&self) -> bool {
        matches!(self.mode, TrainMode::IcsOnly | TrainMode::TsAndIcs)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load_json<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Builds the shift table the config asks for, or None when the mode does
/// not use one.
pub fn build_table_for(
    dataset: &PairedDataset,
    config: &TrainConfig,
) -> Result<Option<ShiftTable>> {
    if !config.needs_shift_table() {
        return Ok(None);
    }
    let table = match config.shift_table_source {
        ShiftTableSource::OracleLabels => ShiftTable::from_assignments(
            &dataset.labels,
            dataset.sizes.len(),
            config.schedule.sh_minus,
            config.schedule.sh_plus,
            config.seed,
        )?,
        ShiftTableSource::KmeansOnTextView => {
            let model = kmeans_fit(
                &dataset.text,
                config.kmeans_k,
                config.seed,
                config.kmeans_max_iters,
                config.kmeans_tol,
            )?;
            build_shift_table(
                &model,
                &dataset.text,
                config.schedule.sh_minus,
                config.schedule.sh_plus,
            )?
        }
    };
    Ok(Some(table))
}

/// Scheduled value for every sample of the batch at iteration `t`.
pub fn mode_values(
    config: &TrainConfig,
    table: Option<&ShiftTable>,
    t: u64,
    batch: &[usize],
) -> Result<Vec<f64>> {
    let sched = &config.schedule;
    match config.mode {
        TrainMode::Fixed { value } => Ok(vec![value; batch.len()]),
        TrainMode::TsOnly => {
            let v = base_temperature(t, sched) + (sched.sh_minus + sched.sh_plus) / 2.0;
            Ok(vec![v; batch.len()])
        }
        TrainMode::IcsOnly | TrainMode::TsAndIcs => {
            let table = table.ok_or_else(|| {
                Error::InvalidArgument(format!("mode {} requires a shift table", config.mode))
            })?;
            let base = match config.mode {
                TrainMode::TsAndIcs => base_temperature(t, sched),
                _ => 0.0,
            };
            batch
                .iter()
                .map(|&i| Ok(base + table.shift(table.assignment(i)?)?))
                .collect()
        }
    }
}

/// Loss and the range of scheduled values used in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub value_min: f64,
    pub value_max: f64,
}

/// One SGD step on the given batch. The model is updated in place.
pub fn train_step(
    model: &mut TwoTowerModel,
    dataset: &PairedDataset,
    batch: &[usize],
    t: u64,
    table: Option<&ShiftTable>,
    config: &TrainConfig,
) -> Result<StepOutcome> {
    let v_batch = dataset.visual.gather_rows(batch)?;
    let t_batch = dataset.text.gather_rows(batch)?;
    let v_lin = model.project_visual(&v_batch)?;
    let t_lin = model.project_text(&t_batch)?;
    let v_emb = v_lin.l2_normalized()?;
    let t_emb = t_lin.l2_normalized()?;
    let similarities = similarity_matrix(&v_emb, &t_emb)?;
    let values = TemperatureVector::from_values(mode_values(config, table, t, batch)?)?;
    let result = match config.schedule.loss_kind {
        LossKind::InfoNce => multimodal_infonce(&similarities, &values)?,
        LossKind::MaxMargin => max_margin(&similarities, &values)?,
    };
    let (grad_v, grad_t) = embedding_gradients(&v_lin, &t_lin, &result)?;

    // dL/dW[a][k] = sum over batch rows of x[row][a] * dL/dlin[row][k],
    // accumulated in row order.
    let lr = config.learning_rate;
    for (x, grad, w, d_in) in [
        (&v_batch, &grad_v, &mut model.w_visual, model.d_visual),
        (&t_batch, &grad_t, &mut model.w_text, model.d_text),
    ] {
        debug_assert_eq!(w.len(), d_in * config.d_emb);
        for row in 0..batch.len() {
            let xr = x.row(row);
            let gr = grad.row(row);
            for (a, &xa) in xr.iter().enumerate() {
                if xa == 0.0 {
                    continue;
                }
                let dst = &mut w[a * config.d_emb..(a + 1) * config.d_emb];
                for (wk, gk) in dst.iter_mut().zip(gr) {
                    *wk -= lr * xa * gk;
                }
            }
        }
    }

    Ok(StepOutcome {
        loss: result.loss,
        value_min: values.min(),
        value_max: values.max(),
    })
}

/// One logged step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: u64,
    pub loss: f64,
    pub value_min: f64,
    pub value_max: f64,
}

/// Output of a full training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub model: TwoTowerModel,
    pub log: Vec<LogEntry>,
    pub shift_table: Option<ShiftTable>,
}

/// Trains a fresh model on the dataset. Non-finite losses or weights abort
/// with a divergence error naming the iteration. Zero iterations returns the
/// initial model and an empty log.
pub fn train(dataset: &PairedDataset, config: &TrainConfig) -> Result<TrainRun> {
    dataset.validate()?;
    let n = dataset.len();
    config.validate(n)?;
    let table = build_table_for(dataset, config)?;
    let mut model = TwoTowerModel::init(
        dataset.visual.cols(),
        dataset.text.cols(),
        config.d_emb,
        config.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(STREAM_BATCHES);
    let mut log = Vec::new();
    for t in 0..config.total_iters {
        let batch = rand::seq::index::sample(&mut rng, n, config.batch_size).into_vec();
        let outcome = train_step(&mut model, dataset, &batch, t, table.as_ref(), config)
            .map_err(|e| match e {
                Error::Numeric(message) => Error::Divergence {
                    iteration: t,
                    message,
                },
                other => other,
            })?;
        if !outcome.loss.is_finite() || !model.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                message: format!("loss {} or weights left the finite range", outcome.loss),
            });
        }
        if t == 0 || t % config.log_interval == 0 || t + 1 == config.total_iters {
            log.push(LogEntry {
                iteration: t,
                loss: outcome.loss,
                value_min: outcome.value_min,
                value_max: outcome.value_max,
            });
        }
    }
    Ok(TrainRun {
        model,
        log,
        shift_table: table,
    })
}

/// Writes the training log as TSV with a header.
pub fn write_log_tsv<W: Write>(log: &[LogEntry], mut w: W) -> Result<()> {
    writeln!(w, "iter\tloss\ttau_min\ttau_max")?;
    for e in log {
        writeln!(
            w,
            "{}\t{:.8e}\t{:.8e}\t{:.8e}",
            e.iteration, e.loss, e.value_min, e.value_max
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, SizeDistribution, SyntheticDatasetSpec};

    fn dataset() -> PairedDataset {
        generate(&SyntheticDatasetSpec {
            num_clusters: 4,
            distribution: SizeDistribution::Explicit {
                sizes: vec![12, 6, 3, 3],
            },
            latent_dim: 4,
            view_dims: (6, 5),
            noise_sigma: 0.05,
            seed: 33,
        })
        .unwrap()
    }

    fn config(mode: TrainMode, loss_kind: LossKind) -> TrainConfig {
        TrainConfig {
            schedule: ScheduleConfig {
                alpha: 0.04,
                period: 50,
                sh_minus: 0.05,
                sh_plus: 0.10,
                loss_kind,
            },
            mode,
            learning_rate: 0.05,
            batch_size: 8,
            total_iters: 40,
            d_emb: 4,
            seed: 5,
            shift_table_source: ShiftTableSource::OracleLabels,
            kmeans_k: 4,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            log_interval: 10,
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = dataset();
        let cfg = config(TrainMode::TsAndIcs, LossKind::InfoNce);
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn loss_decreases_on_easy_data() {
        let data = dataset();
        for loss_kind in [LossKind::InfoNce, LossKind::MaxMargin] {
            let mut cfg = config(TrainMode::TsAndIcs, loss_kind);
            cfg.total_iters = 200;
            let run = train(&data, &cfg).unwrap();
            let first = run.log.first().unwrap().loss;
            let last = run.log.last().unwrap().loss;
            assert!(
                last < first,
                "{loss_kind}: loss went {first} -> {last}"
            );
        }
    }

    #[test]
    fn zero_iterations_returns_initial_model() {
        let data = dataset();
        let mut cfg = config(TrainMode::TsOnly, LossKind::InfoNce);
        cfg.total_iters = 0;
        let run = train(&data, &cfg).unwrap();
        let fresh =
            TwoTowerModel::init(data.visual.cols(), data.text.cols(), cfg.d_emb, cfg.seed)
                .unwrap();
        assert_eq!(run.model, fresh);
        assert!(run.log.is_empty());
    }

    #[test]
    fn mode_values_follow_their_definitions() {
        let data = dataset();
        let cfg = config(TrainMode::TsAndIcs, LossKind::InfoNce);
        let table = build_table_for(&data, &cfg).unwrap().unwrap();
        let batch = [0usize, 20, 23];

        let fixed_cfg = TrainConfig {
            mode: TrainMode::Fixed { value: 0.07 },
            ..cfg.clone()
        };
        assert_eq!(
            mode_values(&fixed_cfg, None, 9, &batch).unwrap(),
            vec![0.07; 3]
        );

        let ts_cfg = TrainConfig {
            mode: TrainMode::TsOnly,
            ..cfg.clone()
        };
        let expected =
            base_temperature(9, &cfg.schedule) + (cfg.schedule.sh_minus + cfg.schedule.sh_plus) / 2.0;
        assert_eq!(
            mode_values(&ts_cfg, None, 9, &batch).unwrap(),
            vec![expected; 3]
        );

        let ics_cfg = TrainConfig {
            mode: TrainMode::IcsOnly,
            ..cfg.clone()
        };
        let ics = mode_values(&ics_cfg, Some(&table), 9, &batch).unwrap();
        // Sample 0 is in the largest cluster, samples 20 and 23 in the
        // smallest two.
        assert_eq!(ics[0], 0.10);
        assert_eq!(ics[1], 0.05);
        assert_eq!(ics[2], 0.05);
        // No dependence on t.
        assert_eq!(ics, mode_values(&ics_cfg, Some(&table), 31, &batch).unwrap());

        let full = mode_values(&cfg, Some(&table), 9, &batch).unwrap();
        let base = base_temperature(9, &cfg.schedule);
        assert_eq!(full[0], base + 0.10);
        assert_eq!(full[1], base + 0.05);
    }

    #[test]
    fn modes_needing_table_reject_none() {
        let cfg = config(TrainMode::IcsOnly, LossKind::InfoNce);
        assert!(mode_values(&cfg, None, 0, &[0, 1]).is_err());
    }

    #[test]
    fn kmeans_source_builds_table_from_text_view() {
        let data = dataset();
        let mut cfg = config(TrainMode::TsAndIcs, LossKind::InfoNce);
        cfg.shift_table_source = ShiftTableSource::KmeansOnTextView;
        let table = build_table_for(&data, &cfg).unwrap().unwrap();
        assert_eq!(table.k, 4);
        assert_eq!(table.num_samples(), data.len());
        table.validate().unwrap();
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = config(TrainMode::TsAndIcs, LossKind::InfoNce);
        cfg.validate(24).unwrap();
        cfg.batch_size = 1;
        assert!(cfg.validate(24).is_err());
        cfg.batch_size = 25;
        assert!(cfg.validate(24).is_err());
        cfg.batch_size = 8;
        cfg.learning_rate = -0.1;
        assert!(cfg.validate(24).is_err());
        cfg.learning_rate = 0.0;
        cfg.validate(24).unwrap();
        cfg.learning_rate = 0.05;
        cfg.mode = TrainMode::Fixed { value: -0.1 };
        assert!(cfg.validate(24).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_model_at_init() {
        let data = dataset();
        let mut cfg = config(TrainMode::TsAndIcs, LossKind::InfoNce);
        cfg.learning_rate = 0.0;
        let run = train(&data, &cfg).unwrap();
        let init = TwoTowerModel::init(6, 5, cfg.d_emb, cfg.seed).unwrap();
        assert_eq!(run.model, init);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        // Normalization makes the loss scale-invariant, so moderate blowups
        // self-correct; only an overflow of the row norms counts as
        // divergence, which this learning rate forces within a step or two.
        let data = dataset();
        let mut cfg = config(TrainMode::Fixed { value: 0.05 }, LossKind::InfoNce);
        cfg.learning_rate = 1e200;
        cfg.total_iters = 50;
        match train(&data, &cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn mode_strings_round_trip() {
        for s in ["fixed:0.05", "ts_only", "ics_only", "ts_and_ics"] {
            let mode: TrainMode = s.parse().unwrap();
            assert_eq!(mode.to_string(), s);
        }
        assert!("warmup".parse::<TrainMode>().is_err());
        assert!("fixed:abc".parse::<TrainMode>().is_err());
    }

    #[test]
    fn model_round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let model = TwoTowerModel::init(6, 5, 4, 11).unwrap();
        model.save_dir(dir.path()).unwrap();
        let back = TwoTowerModel::load_dir(dir.path()).unwrap();
        assert_eq!(back.d_visual, 6);
        assert_eq!(back.d_text, 5);
        assert_eq!(back.d_emb, 4);
        // Weights pass through f32 on disk.
        for (a, b) in back.w_visual.iter().zip(&model.w_visual) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn log_tsv_has_expected_header() {
        let log = vec![LogEntry {
            iteration: 0,
            loss: 2.0,
            value_min: 0.05,
            value_max: 0.1,
        }];
        let mut buf = Vec::new();
        write_log_tsv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter\tloss\ttau_min\ttau_max\n"));
    }
}
