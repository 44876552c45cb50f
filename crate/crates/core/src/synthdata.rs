//! Synthetic paired datasets with controllable long-tail cluster sizes.
//!
//! Each cluster owns a unit prototype in a shared latent space. A sample is
//! its cluster prototype plus isotropic Gaussian noise, pushed through two
//! fixed random linear maps to produce the raw "visual" and "text" views.
//! The two views of one sample share the latent vector, so a linear tower
//! per view can recover the pairing.
//!
//! RNG domains are separated by ChaCha8 stream: sizes, prototypes, view
//! maps, and sample noise draw from independent streams of the same seed,
//! so switching the size distribution does not reshuffle the geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

const STREAM_SIZES: u64 = 0;
const STREAM_PROTOTYPES: u64 = 1;
const STREAM_MAPS: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Hard cap on generated samples; requests beyond this are argument errors.
const MAX_TOTAL_SAMPLES: u64 = 10_000_000;

/// How many samples each cluster receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeDistribution {
    /// Deterministic apportionment of `total` samples proportional to
    /// 1/(c+1)^exponent for cluster c, by largest remainder. Exponent 0
    /// splits evenly; larger exponents concentrate mass in low clusters.
    Zipf { exponent: f64, total: u64 },
    /// Independent heavy-tailed draws: ceil of a Pareto(alpha) variate with
    /// scale 1, so every cluster has at least one sample.
    Pareto { alpha: f64 },
    /// Caller-provided sizes, one per cluster.
    Explicit { sizes: Vec<u64> },
}

/// Full recipe for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDatasetSpec {
    pub num_clusters: usize,
    pub distribution: SizeDistribution,
    pub latent_dim: usize,
    /// (visual, text) raw feature dimensions.
    pub view_dims: (usize, usize),
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 {
            return Err(Error::InvalidArgument(
                "num_clusters must be at least 1".into(),
            ));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument(
                "latent_dim must be at least 1".into(),
            ));
        }
        if self.view_dims.0 == 0 || self.view_dims.1 == 0 {
            return Err(Error::InvalidArgument(
                "view dimensions must be at least 1".into(),
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        match &self.distribution {
            SizeDistribution::Zipf { exponent, total } => {
                if !exponent.is_finite() || *exponent < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "zipf exponent must be finite and non-negative, got {exponent}"
                    )));
                }
                if *total < self.num_clusters as u64 {
                    return Err(Error::InvalidArgument(format!(
                        "zipf total {total} cannot cover {} clusters",
                        self.num_clusters
                    )));
                }
            }
            SizeDistribution::Pareto { alpha } => {
                if !alpha.is_finite() || *alpha <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "pareto alpha must be positive, got {alpha}"
                    )));
                }
            }
            SizeDistribution::Explicit { sizes } => {
                if sizes.len() != self.num_clusters {
                    return Err(Error::InvalidArgument(format!(
                        "explicit sizes has {} entries for {} clusters",
                        sizes.len(),
                        self.num_clusters
                    )));
                }
                if sizes.contains(&0) {
                    return Err(Error::InvalidArgument(
                        "explicit sizes must all be at least 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load_json<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Apportions `total` by largest remainder over weights w_c = 1/(c+1)^e,
/// then enforces a minimum of one sample per cluster by transferring from
/// the largest cluster. Sizes are non-increasing in cluster index.
fn zipf_sizes(num_clusters: usize, exponent: f64, total: u64) -> Vec<u64> {
    let weights: Vec<f64> = (0..num_clusters)
        .map(|c| ((c + 1) as f64).powf(-exponent))
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights
        .iter()
        .map(|w| total as f64 * w / weight_sum)
        .collect();
    let mut sizes: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = sizes.iter().sum();
    let mut order: Vec<usize> = (0..num_clusters).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).expect("finite remainders").then(a.cmp(&b))
    });
    for i in 0..(total - assigned) as usize {
        sizes[order[i % num_clusters]] += 1;
    }
    // Monotone repair: when a trailing cluster rounds to zero, take one from
    // the last cluster currently at the maximum so the non-increasing order
    // survives the transfer.
    while let Some(zero) = sizes.iter().position(|&s| s == 0) {
        let max = *sizes.iter().max().expect("non-empty");
        let donor = sizes.iter().rposition(|&s| s == max).expect("max exists");
        sizes[donor] -= 1;
        sizes[zero] += 1;
    }
    sizes
}

/// Materializes the size of every cluster under the requested distribution.
pub fn sample_sizes(spec: &SyntheticDatasetSpec) -> Result<Vec<u64>> {
    spec.validate()?;
    let sizes = match &spec.distribution {
        SizeDistribution::Zipf { exponent, total } => {
            zipf_sizes(spec.num_clusters, *exponent, *total)
        }
        SizeDistribution::Pareto { alpha } => {
            let mut rng = stream_rng(spec.seed, STREAM_SIZES);
            (0..spec.num_clusters)
                .map(|_| {
                    let u: f64 = rng.gen();
                    // Inverse CDF of Pareto with scale 1, clamped to the
                    // sample cap so extreme tails fail validation cleanly.
                    let x = (1.0 - u).powf(-1.0 / alpha);
                    x.min(MAX_TOTAL_SAMPLES as f64 * 2.0).ceil() as u64
                })
                .collect()
        }
        SizeDistribution::Explicit { sizes } => sizes.clone(),
    };
    let total: u64 = sizes.iter().sum();
    if total > MAX_TOTAL_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "distribution yields {total} samples, cap is {MAX_TOTAL_SAMPLES}"
        )));
    }
    debug_assert!(sizes.iter().all(|&s| s >= 1));
    Ok(sizes)
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// Rank of a row-major matrix by Gaussian elimination with partial pivoting.
pub(crate) fn matrix_rank(data: &[f64], rows: usize, cols: usize, tol: f64) -> usize {
    let mut m = data.to_vec();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        let mut pivot = row;
        let mut best = 0.0;
        for r in row..rows {
            let v = m[r * cols + col].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best <= tol {
            continue;
        }
        if pivot != row {
            for c in 0..cols {
                m.swap(row * cols + c, pivot * cols + c);
            }
        }
        for r in (row + 1)..rows {
            let factor = m[r * cols + col] / m[row * cols + col];
            for c in col..cols {
                m[r * cols + c] -= factor * m[row * cols + c];
            }
        }
        rank += 1;
        row += 1;
        if row == rows {
            break;
        }
    }
    rank
}

/// Guaranteed full-rank random view map of shape latent_dim x view_dim.
fn full_rank_map(rng: &mut ChaCha8Rng, latent_dim: usize, view_dim: usize) -> Result<Vec<f64>> {
    let scale = 1.0 / (latent_dim as f64).sqrt();
    for _ in 0..64 {
        let m = normal_matrix(rng, latent_dim, view_dim, scale);
        if matrix_rank(&m, latent_dim, view_dim, 1e-9) == latent_dim.min(view_dim) {
            return Ok(m);
        }
    }
    Err(Error::Numeric(
        "could not draw a full-rank view map in 64 attempts".into(),
    ))
}

/// A generated dataset: raw (unnormalized) paired views plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub spec: SyntheticDatasetSpec,
    pub visual: EmbeddingMatrix,
    pub text: EmbeddingMatrix,
    /// True cluster of each sample, cluster-major order.
    pub labels: Vec<usize>,
    pub sizes: Vec<u64>,
}

/// Generates the dataset described by `spec`. The same spec always yields
/// bitwise-identical output.
pub fn generate(spec: &SyntheticDatasetSpec) -> Result<PairedDataset> {
    let sizes = sample_sizes(spec)?;
    let n: u64 = sizes.iter().sum();
    let n = usize::try_from(n)
        .map_err(|_| Error::InvalidArgument(format!("{n} samples exceed address space")))?;
    let latent = spec.latent_dim;
    let (d_v, d_t) = spec.view_dims;

    let mut proto_rng = stream_rng(spec.seed, STREAM_PROTOTYPES);
    let mut prototypes = Vec::with_capacity(spec.num_clusters * latent);
    for _ in 0..spec.num_clusters {
        loop {
            let row = normal_matrix(&mut proto_rng, 1, latent, 1.0);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                prototypes.extend(row.iter().map(|v| v / norm));
                break;
            }
        }
    }

    let mut map_rng = stream_rng(spec.seed, STREAM_MAPS);
    let map_v = full_rank_map(&mut map_rng, latent, d_v)?;
    let map_t = full_rank_map(&mut map_rng, latent, d_t)?;

    let mut noise_rng = stream_rng(spec.seed, STREAM_NOISE);
    let mut visual = Vec::with_capacity(n * d_v);
    let mut text = Vec::with_capacity(n * d_t);
    let mut labels = Vec::with_capacity(n);
    let mut latent_vec = vec![0.0f64; latent];
    for (c, &size) in sizes.iter().enumerate() {
        let proto = &prototypes[c * latent..(c + 1) * latent];
        for _ in 0..size {
            for (l, p) in latent_vec.iter_mut().zip(proto) {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                *l = p + spec.noise_sigma * z;
            }
            for col in 0..d_v {
                let mut acc = 0.0;
                for (a, lv) in latent_vec.iter().enumerate() {
                    acc += lv * map_v[a * d_v + col];
                }
                visual.push(acc);
            }
            for col in 0..d_t {
                let mut acc = 0.0;
                for (a, lv) in latent_vec.iter().enumerate() {
                    acc += lv * map_t[a * d_t + col];
                }
                text.push(acc);
            }
            labels.push(c);
        }
    }

    Ok(PairedDataset {
        spec: spec.clone(),
        visual: EmbeddingMatrix::new(n, d_v, visual)?,
        text: EmbeddingMatrix::new(n, d_t, text)?,
        labels,
        sizes,
    })
}

/// Sidecar JSON written next to the two `.mme` files.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSidecar {
    spec: SyntheticDatasetSpec,
    sizes: Vec<u64>,
    labels: Vec<usize>,
    visual_file: String,
    text_file: String,
}

pub const DATASET_SIDECAR: &str = "dataset.json";
pub const DATASET_VISUAL: &str = "visual.mme";
pub const DATASET_TEXT: &str = "text.mme";

impl PairedDataset {
    /// Writes `visual.mme`, `text.mme`, and `dataset.json` into `dir`.
    pub fn save_dir<P: AsRef<std::path::Path>>(&self, dir: P) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.visual.save_mme(dir.join(DATASET_VISUAL))?;
        self.text.save_mme(dir.join(DATASET_TEXT))?;
        let sidecar = DatasetSidecar {
            spec: self.spec.clone(),
            sizes: self.sizes.clone(),
            labels: self.labels.clone(),
            visual_file: DATASET_VISUAL.to_string(),
            text_file: DATASET_TEXT.to_string(),
        };
        let mut json = serde_json::to_string_pretty(&sidecar)?;
        json.push('\n');
        std::fs::write(dir.join(DATASET_SIDECAR), json)?;
        Ok(())
    }

    /// Loads a directory written by [`save_dir`](Self::save_dir) and checks
    /// that files and ground truth agree.
    pub fn load_dir<P: AsRef<std::path::Path>>(dir: P) -> Result<Self> {
        let dir = dir.as_ref();
        let sidecar: DatasetSidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.join(DATASET_SIDECAR))?)?;
        let visual = EmbeddingMatrix::load_mme(dir.join(&sidecar.visual_file))?;
        let text = EmbeddingMatrix::load_mme(dir.join(&sidecar.text_file))?;
        let dataset = Self {
            spec: sidecar.spec,
            visual,
            text,
            labels: sidecar.labels,
            sizes: sidecar.sizes,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Internal consistency: matching row counts, labels in range, and the
    /// label histogram equal to `sizes`.
    pub fn validate(&self) -> Result<()> {
        let n = self.visual.rows();
        if self.text.rows() != n {
            return Err(Error::Validation(format!(
                "visual has {n} rows, text has {}",
                self.text.rows()
            )));
        }
        if self.labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {n} samples",
                self.labels.len()
            )));
        }
        let k = self.sizes.len();
        let mut histogram = vec![0u64; k];
        for (i, &c) in self.labels.iter().enumerate() {
            if c >= k {
                return Err(Error::Validation(format!(
                    "label {c} at sample {i} out of bounds for {k} clusters"
                )));
            }
            histogram[c] += 1;
        }
        if histogram != self.sizes {
            return Err(Error::Validation(
                "label histogram does not match sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
