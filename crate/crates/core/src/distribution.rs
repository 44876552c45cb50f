//! K-Means estimation of the sample distribution over concept clusters.
//!
//! Rows are L2-normalized before clustering so distances reflect direction
//! rather than magnitude, matching how the similarity matrix consumes
//! embeddings. Initialization is k-means++ driven by a ChaCha8 stream.
//!
//! Determinism contract: all randomness comes from the seed, distance
//! computations per sample are independent (safe to parallelize), and every
//! reduction (sums, argmins over candidates, inertia) runs sequentially in
//! index order. Results are therefore bitwise identical across runs and
//! across thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::schedule::ShiftTable;

/// Fitted model. Centroids live in the unit-normalized input space.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub k: usize,
    pub d: usize,
    /// k x d row-major.
    pub centroids: Vec<f64>,
    /// Objective after the final assignment pass.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Objective recorded after each Lloyd update step; non-increasing.
    pub inertia_history: Vec<f64>,
    pub seed: u64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum()
}

/// Index of the nearest centroid; ties resolve to the lowest index.
fn nearest(row: &[f64], centroids: &[f64], k: usize, d: usize) -> usize {
    let mut best = 0;
    let mut best_d = dist2(row, &centroids[0..d]);
    for c in 1..k {
        let dc = dist2(row, &centroids[c * d..(c + 1) * d]);
        if dc < best_d {
            best = c;
            best_d = dc;
        }
    }
    best
}

fn assign_all(x: &EmbeddingMatrix, centroids: &[f64], k: usize) -> Vec<usize> {
    let d = x.cols();
    (0..x.rows())
        .into_par_iter()
        .map(|i| nearest(x.row(i), centroids, k, d))
        .collect()
}

fn kmeans_pp_init(x: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(x.row(first));
    // Running minimum squared distance to the chosen centroid set.
    let mut min_d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| dist2(x.row(i), x.row(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                cum += w;
                if cum > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with existing centroids.
            rng.gen_range(0..n)
        };
        let row = x.row(next).to_vec();
        min_d2
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m = m.min(dist2(x.row(i), &row)));
        centroids.extend_from_slice(&row);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ initialization.
///
/// Stops when the largest centroid movement drops below `tol` or after
/// `max_iters` update steps. Clusters left empty by an update are reseeded
/// with the point farthest from its own centroid, so no centroid is ever
/// undefined.
pub fn kmeans_fit(
    embeddings: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let n = embeddings.rows();
    let d = embeddings.cols();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "k {k} exceeds sample count {n}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tol must be finite and non-negative, got {tol}"
        )));
    }
    let x = embeddings.l2_normalized()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(&x, k, &mut rng);

    let mut inertia_history = Vec::new();
    let mut iterations_run = 0;
    let mut labels = vec![0usize; n];
    for _ in 0..max_iters {
        labels = assign_all(&x, &centroids, k);

        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0u64; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            let row = x.row(i);
            let dst = &mut sums[c * d..(c + 1) * d];
            for (s, v) in dst.iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut new_centroids = vec![0.0f64; k * d];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for j in 0..d {
                    new_centroids[c * d + j] = sums[c * d + j] * inv;
                }
            }
        }
        // Reseed empty clusters with the farthest point from its own (new)
        // centroid; a reseeded point is not reused within the same step.
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let point_d2: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let c = labels[i];
                    dist2(x.row(i), &new_centroids[c * d..(c + 1) * d])
                })
                .collect();
            let mut used = vec![false; n];
            for &c in &empties {
                let mut far = 0;
                let mut far_d2 = f64::NEG_INFINITY;
                for i in 0..n {
                    if !used[i] && point_d2[i] > far_d2 {
                        far = i;
                        far_d2 = point_d2[i];
                    }
                }
                used[far] = true;
                new_centroids[c * d..(c + 1) * d].copy_from_slice(x.row(far));
            }
        }

        let movement = (0..k)
            .map(|c| dist2(&centroids[c * d..(c + 1) * d], &new_centroids[c * d..(c + 1) * d]).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        iterations_run += 1;

        let step_d2: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let c = labels[i];
                dist2(x.row(i), &centroids[c * d..(c + 1) * d])
            })
            .collect();
        inertia_history.push(step_d2.iter().sum());

        if movement < tol {
            break;
        }
    }
    let _ = labels;

    // A final assignment pass keeps the published objective consistent with
    // the published centroids: every sample measured against its true
    // nearest centroid.
    let final_labels = assign_all(&x, &centroids, k);
    let final_d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = final_labels[i];
            dist2(x.row(i), &centroids[c * d..(c + 1) * d])
        })
        .collect();
    let inertia = final_d2.iter().sum();

    Ok(KMeansModel {
        k,
        d,
        centroids,
        inertia,
        iterations_run,
        inertia_history,
        seed,
    })
}

impl KMeansModel {
    /// Nearest-centroid assignment of (unit-normalized) embeddings.
    pub fn assign(&self, embeddings: &EmbeddingMatrix) -> Result<Vec<usize>> {
        if embeddings.cols() != self.d {
            return Err(Error::InvalidArgument(format!(
                "embedding dim {} does not match model dim {}",
                embeddings.cols(),
                self.d
            )));
        }
        let x = embeddings.l2_normalized()?;
        Ok(assign_all(&x, &self.centroids, self.k))
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.d..(c + 1) * self.d]
    }
}

/// Histogram of nearest-centroid assignments, length `k`.
pub fn cluster_sizes(model: &KMeansModel, embeddings: &EmbeddingMatrix) -> Result<Vec<u64>> {
    let labels = model.assign(embeddings)?;
    let mut sizes = vec![0u64; model.k];
    for c in labels {
        sizes[c] += 1;
    }
    Ok(sizes)
}

/// Assigns the embeddings and interpolates shifts from the resulting sizes.
pub fn build_shift_table(
    model: &KMeansModel,
    embeddings: &EmbeddingMatrix,
    sh_minus: f64,
    sh_plus: f64,
) -> Result<ShiftTable> {
    let assignments = model.assign(embeddings)?;
    ShiftTable::from_assignments(&assignments, model.k, sh_minus, sh_plus, model.seed)
}
