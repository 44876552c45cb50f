//! Independent reference implementations used to check the library.
//!
//! Everything here is written as plainly as possible, straight from the
//! defining formulas, and shares no code with the library paths it checks.
//! Losses use a different numerical stabilization (diagonal shift instead
//! of max shift) so agreement is meaningful.

// Index loops keep the oracles shaped like the formulas they transcribe.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmts_core::loss::{Direction, SimilarityMatrix};

/// InfoNCE with one shared temperature, only the mean loss:
/// L = (1/N) sum_i log sum_j exp((s_ij - s_ii) / tau).
pub fn infonce_single_tau_oracle(s: &[Vec<f64>], tau: f64) -> f64 {
    let n = s.len();
    let mut total = 0.0;
    for i in 0..n {
        let denom: f64 = (0..n).map(|j| ((s[i][j] - s[i][i]) / tau).exp()).sum();
        total += denom.ln();
    }
    total / n as f64
}

/// Symmetric InfoNCE oracle: mean of the row-anchored and column-anchored
/// single-temperature losses.
pub fn multimodal_infonce_single_tau_oracle(s: &[Vec<f64>], tau: f64) -> f64 {
    let n = s.len();
    let t: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| s[j][i]).collect())
        .collect();
    0.5 * (infonce_single_tau_oracle(s, tau) + infonce_single_tau_oracle(&t, tau))
}

/// Max-margin loss written as the literal double sum over ordered pairs.
pub fn max_margin_oracle(s: &[Vec<f64>], margins: &[f64]) -> f64 {
    let n = s.len();
    if n == 1 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            total += (s[i][j] - s[i][i] + margins[i]).max(0.0);
            total += (s[j][i] - s[i][i] + margins[i]).max(0.0);
        }
    }
    total / (2.0 * n as f64 * (n as f64 - 1.0))
}

/// Rank of the diagonal for query i: 1 + items strictly better, where an
/// equal score wins only with a lower index.
pub fn rank_oracle(s: &[Vec<f64>], i: usize) -> usize {
    let mut rank = 1;
    for j in 0..s.len() {
        if j != i && (s[i][j] > s[i][i] || (s[i][j] == s[i][i] && j < i)) {
            rank += 1;
        }
    }
    rank
}

pub fn recall_at_k_oracle(s: &[Vec<f64>], k: usize) -> f64 {
    let n = s.len();
    let hits = (0..n).filter(|&i| rank_oracle(s, i) <= k).count();
    hits as f64 / n as f64
}

/// Gallery order for one query: similarity descending, index ascending.
pub fn ranking_oracle(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    order
}

/// Mean average precision with positives at rel > threshold; queries with
/// no positive are skipped. Returns (mean, skipped).
pub fn map_oracle(s: &[Vec<f64>], rel: &[Vec<f64>], threshold: f64) -> (f64, usize) {
    let n = s.len();
    let mut aps = Vec::new();
    let mut skipped = 0;
    for q in 0..n {
        let order = ranking_oracle(&s[q]);
        let positives = rel[q].iter().filter(|&&r| r > threshold).count();
        if positives == 0 {
            skipped += 1;
            continue;
        }
        let mut hits = 0;
        let mut ap = 0.0;
        for (pos, &g) in order.iter().enumerate() {
            if rel[q][g] > threshold {
                hits += 1;
                ap += hits as f64 / (pos + 1) as f64;
            }
        }
        aps.push(ap / positives as f64);
    }
    let mean = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    (mean, skipped)
}

/// nDCG with linear gains rel/log2(rank + 1). Returns (mean, skipped).
pub fn ndcg_oracle(s: &[Vec<f64>], rel: &[Vec<f64>]) -> (f64, usize) {
    let n = s.len();
    let mut values = Vec::new();
    let mut skipped = 0;
    for q in 0..n {
        let order = ranking_oracle(&s[q]);
        let dcg: f64 = order
            .iter()
            .enumerate()
            .map(|(pos, &g)| rel[q][g] / ((pos + 2) as f64).log2())
            .sum();
        let mut ideal = rel[q].clone();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let idcg: f64 = ideal
            .iter()
            .enumerate()
            .map(|(pos, r)| r / ((pos + 2) as f64).log2())
            .sum();
        if idcg == 0.0 {
            skipped += 1;
        } else {
            values.push(dcg / idcg);
        }
    }
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    (mean, skipped)
}

/// Random similarity values in [-1, 1], returned both as the library type
/// and as plain nested vectors for the oracles.
pub fn random_similarity(rng: &mut ChaCha8Rng, n: usize) -> (SimilarityMatrix, Vec<Vec<f64>>) {
    let plain: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let flat: Vec<f64> = plain.iter().flatten().copied().collect();
    (
        SimilarityMatrix::new(n, flat, Direction::VToT).unwrap(),
        plain,
    )
}

/// Random cluster labels over [0, k), forced to cover every cluster when
/// n >= k so downstream histograms have no zero entries.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    if n >= k {
        for c in 0..k {
            labels[c] = c;
        }
    }
    labels
}

/// Binary relevancy from labels as nested vectors.
pub fn relevancy_from_labels(labels: &[usize]) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|a| {
            labels
                .iter()
                .map(|b| if a == b { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
