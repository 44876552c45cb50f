//! Finite-difference verification of the analytic loss gradients.
//!
//! Each trial draws a random problem (batch size, embedding dim, raw
//! embeddings, temperatures or margins), evaluates the analytic gradients,
//! and compares them entry by entry against central differences of the
//! scalar loss. Gradients are checked both in similarity space and through
//! the normalization chain back to the raw embeddings. Max-margin trials
//! resample margins until every hinge argument is safely away from its
//! kink, where the loss is not differentiable.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::loss::{
    embedding_gradients, infonce, max_margin, multimodal_infonce, similarity_matrix,
    Direction, LossResult, SimilarityMatrix, TemperatureVector,
};

/// Relative-error floor: entries smaller than this in both operands compare
/// in absolute terms instead.
const REL_ERR_FLOOR: f64 = 1e-4;

/// Minimum distance of any hinge argument from its kink in margin trials.
const KINK_CLEARANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    pub max_n: usize,
    pub max_d: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 42,
            step: 1e-5,
            tolerance: 1e-4,
            max_n: 16,
            max_d: 8,
        }
    }
}

impl GradcheckConfig {
    /// Zero trials is allowed and yields an empty passing report.
    pub fn validate(&self) -> Result<()> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_n < 2 || self.max_d < 2 {
            return Err(Error::InvalidArgument(
                "max_n and max_d must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Worst relative errors observed in one random problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    pub n: usize,
    pub d: usize,
    pub infonce_similarity_err: f64,
    pub infonce_embedding_err: f64,
    pub multimodal_similarity_err: f64,
    pub multimodal_embedding_err: f64,
    pub margin_similarity_err: f64,
    pub margin_embedding_err: f64,
    /// Largest |sum over a row| of the one-directional InfoNCE gradient;
    /// the softmax identity makes the exact value 0.
    pub infonce_row_sum: f64,
}

impl TrialResult {
    pub fn max_err(&self) -> f64 {
        [
            self.infonce_similarity_err,
            self.infonce_embedding_err,
            self.multimodal_similarity_err,
            self.multimodal_embedding_err,
            self.margin_similarity_err,
            self.margin_embedding_err,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub config: GradcheckConfig,
    pub trials: Vec<TrialResult>,
    pub max_relative_error: f64,
    pub max_infonce_row_sum: f64,
    pub passed: bool,
}

/// max over entries of |a - b| / max(|a|, |b|, floor).
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

/// Central differences of a scalar loss over every similarity entry.
pub fn fd_similarity_gradient<F>(
    loss_of: F,
    base: &SimilarityMatrix,
    step: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&SimilarityMatrix) -> Result<f64>,
{
    let n = base.n();
    let mut grad = vec![0.0; n * n];
    let mut values = base.values().to_vec();
    for e in 0..n * n {
        let original = values[e];
        values[e] = original + step;
        let plus = loss_of(&SimilarityMatrix::new(n, values.clone(), base.direction())?)?;
        values[e] = original - step;
        let minus = loss_of(&SimilarityMatrix::new(n, values.clone(), base.direction())?)?;
        values[e] = original;
        grad[e] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Central differences of a scalar loss over every raw embedding entry of
/// both towers.
pub fn fd_embedding_gradients<F>(
    loss_of: F,
    visual_raw: &EmbeddingMatrix,
    text_raw: &EmbeddingMatrix,
    step: f64,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&EmbeddingMatrix, &EmbeddingMatrix) -> Result<f64>,
{
    let perturb = |m: &EmbeddingMatrix, e: usize, delta: f64| -> Result<EmbeddingMatrix> {
        let mut data = m.data().to_vec();
        data[e] += delta;
        EmbeddingMatrix::new(m.rows(), m.cols(), data)
    };
    let mut grad_v = vec![0.0; visual_raw.data().len()];
    for (e, g) in grad_v.iter_mut().enumerate() {
        let plus = loss_of(&perturb(visual_raw, e, step)?, text_raw)?;
        let minus = loss_of(&perturb(visual_raw, e, -step)?, text_raw)?;
        *g = (plus - minus) / (2.0 * step);
    }
    let mut grad_t = vec![0.0; text_raw.data().len()];
    for (e, g) in grad_t.iter_mut().enumerate() {
        let plus = loss_of(visual_raw, &perturb(text_raw, e, step)?)?;
        let minus = loss_of(visual_raw, &perturb(text_raw, e, -step)?)?;
        *g = (plus - minus) / (2.0 * step);
    }
    Ok((grad_v, grad_t))
}

fn loss_from_raw<F>(
    loss_fn: &F,
    visual_raw: &EmbeddingMatrix,
    text_raw: &EmbeddingMatrix,
) -> Result<LossResult>
where
    F: Fn(&SimilarityMatrix) -> Result<LossResult>,
{
    let s = similarity_matrix(&visual_raw.l2_normalized()?, &text_raw.l2_normalized()?)?;
    loss_fn(&s)
}

/// Raw Gaussian embeddings with every row norm bounded away from zero, so
/// the normalization Jacobian stays well conditioned for differencing.
fn draw_raw(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
    let mut data = vec![0.0f64; n * d];
    for i in 0..n {
        loop {
            let row = &mut data[i * d..(i + 1) * d];
            for v in row.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.5 {
                break;
            }
        }
    }
    EmbeddingMatrix::new(n, d, data).expect("finite gaussian draws")
}

/// Smallest |hinge argument| across both charge directions.
fn min_kink_distance(s: &SimilarityMatrix, margins: &[f64]) -> f64 {
    let n = s.n();
    let mut min = f64::INFINITY;
    for (i, &margin) in margins.iter().enumerate().take(n) {
        for j in 0..n {
            if i == j {
                continue;
            }
            min = min.min((s.get(i, j) - s.get(i, i) + margin).abs());
            min = min.min((s.get(j, i) - s.get(i, i) + margin).abs());
        }
    }
    min
}

fn check_pair<F>(
    loss_fn: F,
    visual_raw: &EmbeddingMatrix,
    text_raw: &EmbeddingMatrix,
    step: f64,
) -> Result<(f64, f64, LossResult)>
where
    F: Fn(&SimilarityMatrix) -> Result<LossResult>,
{
    let v_norm = visual_raw.l2_normalized()?;
    let t_norm = text_raw.l2_normalized()?;
    let s = similarity_matrix(&v_norm, &t_norm)?;
    let analytic = loss_fn(&s)?;

    let fd_sim = fd_similarity_gradient(|m| Ok(loss_fn(m)?.loss), &s, step)?;
    let sim_err = max_relative_error(analytic.grad_matrix(), &fd_sim);

    let (av, at) = embedding_gradients(visual_raw, text_raw, &analytic)?;
    let (fv, ft) = fd_embedding_gradients(
        |v, t| Ok(loss_from_raw(&loss_fn, v, t)?.loss),
        visual_raw,
        text_raw,
        step,
    )?;
    let emb_err = max_relative_error(av.data(), &fv).max(max_relative_error(at.data(), &ft));
    Ok((sim_err, emb_err, analytic))
}

/// Runs the full suite. Trials are generated and checked sequentially from
/// the seed, so the report is deterministic.
pub fn run_trials(config: &GradcheckConfig) -> Result<GradcheckReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trials = Vec::with_capacity(config.trials);
    for index in 0..config.trials {
        let n = rng.gen_range(2..=config.max_n);
        let d = rng.gen_range(2..=config.max_d);
        let visual_raw = draw_raw(&mut rng, n, d);
        let text_raw = draw_raw(&mut rng, n, d);
        let taus: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..=1.0)).collect();

        let s = similarity_matrix(
            &visual_raw.l2_normalized()?,
            &text_raw.l2_normalized()?,
        )?;
        let mut margins: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..=0.5)).collect();
        let mut attempts = 0;
        while min_kink_distance(&s, &margins) <= KINK_CLEARANCE {
            margins = (0..n).map(|_| rng.gen_range(0.05..=0.5)).collect();
            attempts += 1;
            if attempts > 100 {
                return Err(Error::Numeric(
                    "could not place margins away from hinge kinks".into(),
                ));
            }
        }

        let tau_vec = TemperatureVector::from_values(taus)?;
        let margin_vec = TemperatureVector::from_values(margins)?;

        let (inf_sim, inf_emb, inf_result) = check_pair(
            |m| infonce(m, &tau_vec),
            &visual_raw,
            &text_raw,
            config.step,
        )?;
        let row_sum = (0..n)
            .map(|i| inf_result.grad_row(i).iter().sum::<f64>().abs())
            .fold(0.0, f64::max);
        let (mm_sim, mm_emb, _) = check_pair(
            |m| multimodal_infonce(m, &tau_vec),
            &visual_raw,
            &text_raw,
            config.step,
        )?;
        let (mg_sim, mg_emb, _) = check_pair(
            |m| max_margin(m, &margin_vec),
            &visual_raw,
            &text_raw,
            config.step,
        )?;

        trials.push(TrialResult {
            index,
            n,
            d,
            infonce_similarity_err: inf_sim,
            infonce_embedding_err: inf_emb,
            multimodal_similarity_err: mm_sim,
            multimodal_embedding_err: mm_emb,
            margin_similarity_err: mg_sim,
            margin_embedding_err: mg_emb,
            infonce_row_sum: row_sum,
        });
    }
    let max_relative_error = trials.iter().map(TrialResult::max_err).fold(0.0, f64::max);
    let max_infonce_row_sum = trials
        .iter()
        .map(|t| t.infonce_row_sum)
        .fold(0.0, f64::max);
    Ok(GradcheckReport {
        config: *config,
        trials,
        max_relative_error,
        max_infonce_row_sum,
        passed: max_relative_error < config.tolerance,
    })
}

impl GradcheckReport {
    /// Human-readable summary, one line per trial plus totals.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "trial\tn\td\tinfonce_sim\tinfonce_emb\tmultimodal_sim\tmultimodal_emb\tmargin_sim\tmargin_emb\trow_sum"
        )?;
        for t in &self.trials {
            writeln!(
                w,
                "{}\t{}\t{}\t{:.3e}\t{:.3e}\t{:.3e}\t{:.3e}\t{:.3e}\t{:.3e}\t{:.3e}",
                t.index,
                t.n,
                t.d,
                t.infonce_similarity_err,
                t.infonce_embedding_err,
                t.multimodal_similarity_err,
                t.multimodal_embedding_err,
                t.margin_similarity_err,
                t.margin_embedding_err,
                t.infonce_row_sum
            )?;
        }
        writeln!(
            w,
            "max_relative_error\t{:.6e}\nmax_infonce_row_sum\t{:.6e}\nresult\t{}",
            self.max_relative_error,
            self.max_infonce_row_sum,
            if self.passed { "pass" } else { "fail" }
        )?;
        Ok(())
    }
}

/// Direction marker reused by binaries that build matrices directly.
pub fn direction_v2t() -> Direction {
    Direction::VToT
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_tightly() {
        let report = run_trials(&GradcheckConfig {
            trials: 10,
            seed: 7,
            ..GradcheckConfig::default()
        })
        .unwrap();
        assert!(report.passed, "max err {}", report.max_relative_error);
        assert!(report.max_relative_error < 1e-4);
        assert!(report.max_infonce_row_sum < 1e-9);
        assert_eq!(report.trials.len(), 10);
    }

    #[test]
    fn report_is_deterministic() {
        let cfg = GradcheckConfig {
            trials: 3,
            seed: 19,
            ..GradcheckConfig::default()
        };
        let a = run_trials(&cfg).unwrap();
        let b = run_trials(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn relative_error_uses_floor_for_tiny_entries() {
        assert_eq!(max_relative_error(&[0.0], &[0.0]), 0.0);
        // Both below the floor: compared in absolute terms against it.
        let err = max_relative_error(&[1e-6], &[2e-6]);
        assert!((err - 1e-6 / 1e-4).abs() < 1e-18);
        let err = max_relative_error(&[1.0], &[1.1]);
        assert!((err - 0.1 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn config_is_validated() {
        let cfg = GradcheckConfig {
            step: 0.0,
            ..GradcheckConfig::default()
        };
        assert!(run_trials(&cfg).is_err());
        let cfg = GradcheckConfig {
            max_n: 1,
            ..GradcheckConfig::default()
        };
        assert!(run_trials(&cfg).is_err());
    }

    #[test]
    fn zero_trials_is_an_empty_pass() {
        let report = run_trials(&GradcheckConfig {
            trials: 0,
            ..GradcheckConfig::default()
        })
        .unwrap();
        assert!(report.passed);
        assert!(report.trials.is_empty());
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn text_report_contains_summary() {
        let report = run_trials(&GradcheckConfig {
            trials: 2,
            seed: 3,
            ..GradcheckConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        report.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("max_relative_error"));
        assert!(text.contains("result\tpass"));
    }
}
