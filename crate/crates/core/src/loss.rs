//! Contrastive losses over a similarity matrix, with analytic gradients.
//!
//! Both losses consume an n x n similarity matrix between paired batches
//! (pair i sits on the diagonal) and a per-sample vector of scheduled
//! values: temperatures for InfoNCE, margins for max-margin. Gradients are
//! returned both with respect to the similarity entries and, through
//! [`embedding_gradients`], with respect to the raw pre-normalization
//! embeddings.
//!
//! Row computations are independent and run in parallel; the final loss sum
//! runs sequentially in row order so results do not depend on thread count.

use std::io::Write;

use rayon::prelude::*;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Which modality provides the anchor rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    VToT,
    TToV,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::VToT => Direction::TToV,
            Direction::TToV => Direction::VToT,
        }
    }
}

/// Dense n x n similarity matrix; rows are anchors of `direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
    direction: Direction,
}

impl SimilarityMatrix {
    pub fn new(n: usize, values: Vec<f64>, direction: Direction) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if values.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "similarity data has {} values, n {n} needs {}",
                values.len(),
                n * n
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite similarity at row {} col {}",
                pos / n,
                pos % n
            )));
        }
        Ok(Self { n, values, direction })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transposed(&self) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[j * n + i] = self.values[i * n + j];
            }
        }
        Self {
            n,
            values,
            direction: self.direction.flipped(),
        }
    }
}

/// Maximum allowed deviation of an embedding row norm from 1 when forming
/// similarities.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Pairwise dot products of two unit-normalized embedding batches.
///
/// Row i of `visual` against row j of `text` lands at (i, j), so the
/// returned matrix is visual-to-text. Inputs must already be normalized;
/// rows off unit norm by more than [`UNIT_NORM_TOLERANCE`] are rejected.
pub fn similarity_matrix(
    visual: &EmbeddingMatrix,
    text: &EmbeddingMatrix,
) -> Result<SimilarityMatrix> {
    if visual.rows() != text.rows() {
        return Err(Error::InvalidArgument(format!(
            "batch sizes differ: {} visual vs {} text",
            visual.rows(),
            text.rows()
        )));
    }
    if visual.cols() != text.cols() {
        return Err(Error::InvalidArgument(format!(
            "embedding dims differ: {} visual vs {} text",
            visual.cols(),
            text.cols()
        )));
    }
    for (name, m) in [("visual", visual), ("text", text)] {
        let dev = m.max_unit_norm_deviation();
        if dev > UNIT_NORM_TOLERANCE {
            return Err(Error::Validation(format!(
                "{name} rows are not unit-normalized (max deviation {dev:.3e})"
            )));
        }
    }
    let n = visual.rows();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let vi = visual.row(i);
            (0..n).map(move |j| vi.iter().zip(text.row(j)).map(|(a, b)| a * b).sum())
        })
        .collect();
    SimilarityMatrix::new(n, values, Direction::VToT)
}

/// Per-sample scheduled values: temperatures for InfoNCE, margins for
/// max-margin. Entry i applies whenever sample i is the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureVector {
    values: Vec<f64>,
}

impl TemperatureVector {
    /// All entries must be strictly positive and finite.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("temperature vector is empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Domain(format!(
                "temperature {} at index {pos} is not strictly positive",
                values[pos]
            )));
        }
        Ok(Self { values })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::from_values(vec![value; n.max(1)])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Loss value with gradients and per-pair diagnostic weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    n: usize,
    pub loss: f64,
    grad_similarities: Vec<f64>,
    per_negative_contributions: Vec<f64>,
}

impl LossResult {
    pub fn n(&self) -> usize {
        self.n
    }

    /// d(loss)/d(s_ij).
    pub fn grad(&self, i: usize, j: usize) -> f64 {
        self.grad_similarities[i * self.n + j]
    }

    pub fn grad_row(&self, i: usize) -> &[f64] {
        &self.grad_similarities[i * self.n..(i + 1) * self.n]
    }

    pub fn grad_matrix(&self) -> &[f64] {
        &self.grad_similarities
    }

    /// Weight of gallery item j in the loss terms anchored at i. For InfoNCE
    /// this is the softmax mass of j in anchor i's row; for max-margin the
    /// active-hinge mass of the pair, already divided by the normalizer.
    pub fn contribution(&self, i: usize, j: usize) -> f64 {
        self.per_negative_contributions[i * self.n + j]
    }

    pub fn contributions_matrix(&self) -> &[f64] {
        &self.per_negative_contributions
    }
}

fn check_loss_shapes(similarities: &SimilarityMatrix, values: &TemperatureVector) -> Result<usize> {
    let n = similarities.n();
    if values.len() != n {
        return Err(Error::InvalidArgument(format!(
            "value vector has {} entries, similarity matrix has {n} rows",
            values.len()
        )));
    }
    Ok(n)
}

/// One-directional InfoNCE with per-anchor temperatures.
///
/// Anchor i scores the diagonal entry against its row: the loss is the mean
/// over rows of -log softmax(s_i / tau_i)[i]. Rows are shifted by their
/// maximum before exponentiation, so any finite similarity scale is safe.
pub fn infonce(
    similarities: &SimilarityMatrix,
    temperatures: &TemperatureVector,
) -> Result<LossResult> {
    let n = check_loss_shapes(similarities, temperatures)?;
    let per_row: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let tau = temperatures.values()[i];
            let row = similarities.row(i);
            let mut z_max = f64::NEG_INFINITY;
            for &s in row {
                z_max = z_max.max(s / tau);
            }
            let mut sum_exp = 0.0;
            let mut p: Vec<f64> = Vec::with_capacity(n);
            for &s in row {
                let e = (s / tau - z_max).exp();
                sum_exp += e;
                p.push(e);
            }
            for v in p.iter_mut() {
                *v /= sum_exp;
            }
            let loss_i = z_max + sum_exp.ln() - row[i] / tau;
            (loss_i, p)
        })
        .collect();

    let mut loss = 0.0;
    let mut grad = vec![0.0; n * n];
    let mut contributions = vec![0.0; n * n];
    let inv_n = 1.0 / n as f64;
    for (i, (loss_i, p)) in per_row.iter().enumerate() {
        loss += loss_i;
        let tau = temperatures.values()[i];
        let scale = inv_n / tau;
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            grad[i * n + j] = (p[j] - delta) * scale;
            contributions[i * n + j] = p[j];
        }
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("infonce loss is {loss}")));
    }
    Ok(LossResult {
        n,
        loss,
        grad_similarities: grad,
        per_negative_contributions: contributions,
    })
}

/// Symmetric InfoNCE: the mean of the visual-to-text loss on `similarities`
/// and the text-to-visual loss on its transpose. Sample i keeps the same
/// temperature in both directions. Gradients are reported in the layout of
/// the input matrix.
pub fn multimodal_infonce(
    similarities: &SimilarityMatrix,
    temperatures: &TemperatureVector,
) -> Result<LossResult> {
    let n = check_loss_shapes(similarities, temperatures)?;
    let forward = infonce(similarities, temperatures)?;
    let backward = infonce(&similarities.transposed(), temperatures)?;
    let mut grad = vec![0.0; n * n];
    let mut contributions = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            grad[i * n + j] = 0.5 * (forward.grad(i, j) + backward.grad(j, i));
            contributions[i * n + j] =
                0.5 * (forward.contribution(i, j) + backward.contribution(j, i));
        }
    }
    Ok(LossResult {
        n,
        loss: 0.5 * (forward.loss + backward.loss),
        grad_similarities: grad,
        per_negative_contributions: contributions,
    })
}

/// Symmetric max-margin loss with per-anchor margins.
///
/// For every anchor i and negative j != i, two hinges are charged:
/// max(0, s_ij - s_ii + m_i) and max(0, s_ji - s_ii + m_i). The sum is
/// divided by 2N(N-1). The hinge subgradient at the kink is taken as 0. A
/// single pair has no negatives and yields a zero loss.
pub fn max_margin(
    similarities: &SimilarityMatrix,
    margins: &TemperatureVector,
) -> Result<LossResult> {
    let n = check_loss_shapes(similarities, margins)?;
    if n == 1 {
        return Ok(LossResult {
            n,
            loss: 0.0,
            grad_similarities: vec![0.0],
            per_negative_contributions: vec![0.0],
        });
    }
    let norm = 2.0 * (n as f64) * (n as f64 - 1.0);
    let inv_norm = 1.0 / norm;
    let m = margins.values();
    let diag: Vec<f64> = (0..n).map(|i| similarities.get(i, i)).collect();

    // Active-hinge indicators, charged per anchor row r:
    //   A(r, j): s_rj - s_rr + m_r > 0
    //   B(r, j): s_jr - s_rr + m_r > 0
    // Off-diagonal gradient entry (r, c) collects A(r, c) from anchor r and
    // B(c, r) from anchor c, both of which read s_rc.
    let per_row: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut loss_r = 0.0;
            let mut grad_row = vec![0.0; n];
            let mut contrib_row = vec![0.0; n];
            let mut diag_grad = 0.0;
            for j in 0..n {
                if j == r {
                    continue;
                }
                let a = similarities.get(r, j) - diag[r] + m[r];
                let b = similarities.get(j, r) - diag[r] + m[r];
                let a_active = a > 0.0;
                let b_active = b > 0.0;
                if a_active {
                    loss_r += a;
                    diag_grad -= inv_norm;
                }
                if b_active {
                    loss_r += b;
                    diag_grad -= inv_norm;
                }
                contrib_row[j] =
                    (a_active as u8 as f64 + b_active as u8 as f64) * inv_norm;
                // Entry (r, j) of the gradient: A(r, j) plus B(j, r), the
                // latter charged by anchor j but differentiating s_rj.
                let cross = similarities.get(r, j) - diag[j] + m[j] > 0.0;
                grad_row[j] = (a_active as u8 as f64 + cross as u8 as f64) * inv_norm;
            }
            grad_row[r] = diag_grad;
            (loss_r, grad_row, contrib_row)
        })
        .collect();

    let mut loss = 0.0;
    let mut grad = vec![0.0; n * n];
    let mut contributions = vec![0.0; n * n];
    for (r, (loss_r, grad_row, contrib_row)) in per_row.iter().enumerate() {
        loss += loss_r;
        grad[r * n..(r + 1) * n].copy_from_slice(grad_row);
        contributions[r * n..(r + 1) * n].copy_from_slice(contrib_row);
    }
    loss *= inv_norm;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("max-margin loss is {loss}")));
    }
    Ok(LossResult {
        n,
        loss,
        grad_similarities: grad,
        per_negative_contributions: contributions,
    })
}

/// Pulls a similarity-space gradient back to the raw (pre-normalization)
/// embeddings of both towers.
///
/// With u_i, w_j the unit rows and x_i, y_j the raw rows, s_ij = u_i . w_j;
/// the normalization Jacobian maps g to (g - (g . u) u) / |x|.
pub fn embedding_gradients(
    visual_raw: &EmbeddingMatrix,
    text_raw: &EmbeddingMatrix,
    result: &LossResult,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let n = result.n();
    if visual_raw.rows() != n || text_raw.rows() != n {
        return Err(Error::InvalidArgument(format!(
            "raw embeddings have {} / {} rows, loss result has {n}",
            visual_raw.rows(),
            text_raw.rows()
        )));
    }
    if visual_raw.cols() != text_raw.cols() {
        return Err(Error::InvalidArgument(format!(
            "embedding dims differ: {} visual vs {} text",
            visual_raw.cols(),
            text_raw.cols()
        )));
    }
    let d = visual_raw.cols();
    let u = visual_raw.l2_normalized()?;
    let w = text_raw.l2_normalized()?;

    let grad_v: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            // dL/du_i = sum_j G_ij w_j, then through the normalization of x_i.
            let mut g = vec![0.0; d];
            for j in 0..n {
                let coeff = result.grad(i, j);
                if coeff != 0.0 {
                    for (gk, wk) in g.iter_mut().zip(w.row(j)) {
                        *gk += coeff * wk;
                    }
                }
            }
            project_through_normalization(&g, u.row(i), visual_raw.row(i))
        })
        .collect();
    let grad_t: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|j| {
            // dL/dw_j = sum_i G_ij u_i.
            let mut g = vec![0.0; d];
            for i in 0..n {
                let coeff = result.grad(i, j);
                if coeff != 0.0 {
                    for (gk, uk) in g.iter_mut().zip(u.row(i)) {
                        *gk += coeff * uk;
                    }
                }
            }
            project_through_normalization(&g, w.row(j), text_raw.row(j))
        })
        .collect();

    Ok((
        EmbeddingMatrix::new(n, d, grad_v)?,
        EmbeddingMatrix::new(n, d, grad_t)?,
    ))
}

fn project_through_normalization(
    g: &[f64],
    unit_row: &[f64],
    raw_row: &[f64],
) -> std::vec::IntoIter<f64> {
    let norm = raw_row.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot: f64 = g.iter().zip(unit_row).map(|(a, b)| a * b).sum();
    g.iter()
        .zip(unit_row)
        .map(|(gk, uk)| (gk - dot * uk) / norm)
        .collect::<Vec<f64>>()
        .into_iter()
}

/// One gallery item in a hardness profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub gallery_index: usize,
    pub similarity: f64,
    /// Softmax mass of this negative in the anchor's row at the probed
    /// temperature (positive included in the normalizer).
    pub contribution: f64,
}

/// Softmax contributions of every negative for one anchor at a fixed
/// temperature, sorted by similarity descending (ties by gallery index).
pub fn negative_contribution_profile(
    similarities: &SimilarityMatrix,
    anchor: usize,
    tau: f64,
) -> Result<Vec<ProfileEntry>> {
    let n = similarities.n();
    if anchor >= n {
        return Err(Error::Index(format!(
            "anchor {anchor} out of bounds for {n} rows"
        )));
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Domain(format!(
            "temperature {tau} is not strictly positive"
        )));
    }
    let row = similarities.row(anchor);
    let z_max = row.iter().map(|s| s / tau).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|s| (s / tau - z_max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let mut entries: Vec<ProfileEntry> = (0..n)
        .filter(|&j| j != anchor)
        .map(|j| ProfileEntry {
            gallery_index: j,
            similarity: row[j],
            contribution: exps[j] / sum,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .expect("similarities are finite")
            .then(a.gallery_index.cmp(&b.gallery_index))
    });
    Ok(entries)
}

/// Writes profile entries as TSV with a header; rank is 1-based in the
/// sorted order.
pub fn write_profile_tsv<W: Write>(entries: &[ProfileEntry], mut w: W) -> Result<()> {
    writeln!(w, "rank\tsimilarity\tcontribution")?;
    for (rank, e) in entries.iter().enumerate() {
        writeln!(w, "{}\t{:.8e}\t{:.8e}", rank + 1, e.similarity, e.contribution)?;
    }
    Ok(())
}
