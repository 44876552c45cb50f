//! Temperature and margin schedules.
//!
//! The per-sample modulation value is the sum of two parts: a cosine wave
//! over training iterations shared by all samples, and a per-cluster shift
//! interpolated from cluster sizes. Small clusters sit near the lower shift
//! bound and large clusters near the upper bound, so rare concepts are
//! trained with sharper (lower) temperatures on average. The same value
//! serves as the temperature of the InfoNCE loss or the margin of the
//! max-margin loss, selected by [`LossKind`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which loss consumes the scheduled values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "infonce")]
    InfoNce,
    #[serde(rename = "max_margin")]
    MaxMargin,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::InfoNce => write!(f, "infonce"),
            LossKind::MaxMargin => write!(f, "max_margin"),
        }
    }
}

/// Parameters of the schedule.
///
/// `alpha` is the peak-to-peak amplitude of the cosine wave: the base value
/// oscillates in [-alpha/2, alpha/2] with period `period` iterations.
/// `sh_minus` and `sh_plus` bound the per-cluster shifts. Validity requires
/// `sh_minus - alpha/2 > 0` so every scheduled value stays strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha: f64,
    pub period: u64,
    pub sh_minus: f64,
    pub sh_plus: f64,
    pub loss_kind: LossKind,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.period == 0 {
            return Err(Error::InvalidArgument("period must be at least 1".into()));
        }
        validate_shift_bounds(self.sh_minus, self.sh_plus)?;
        if self.sh_minus - self.alpha / 2.0 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sh_minus - alpha/2 must be positive to keep values positive, \
                 got sh_minus {} alpha {}",
                self.sh_minus, self.alpha
            )));
        }
        Ok(())
    }

    /// Smallest and largest value the schedule can emit under any shift table
    /// built with this config's bounds.
    pub fn value_range(&self) -> (f64, f64) {
        (self.sh_minus - self.alpha / 2.0, self.sh_plus + self.alpha / 2.0)
    }
}

fn validate_shift_bounds(sh_minus: f64, sh_plus: f64) -> Result<()> {
    if !sh_minus.is_finite() || !sh_plus.is_finite() {
        return Err(Error::InvalidArgument(
            "shift bounds must be finite".into(),
        ));
    }
    if sh_minus <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sh_minus must be positive, got {sh_minus}"
        )));
    }
    if sh_plus < sh_minus {
        return Err(Error::InvalidArgument(format!(
            "sh_plus {sh_plus} must be at least sh_minus {sh_minus}"
        )));
    }
    Ok(())
}

/// Cosine base value at iteration `t`. The phase is computed from
/// `t mod period`, so the wave repeats bitwise-exactly every period.
pub fn base_temperature(t: u64, config: &ScheduleConfig) -> f64 {
    let phase = (t % config.period) as f64 / config.period as f64;
    config.alpha * (std::f64::consts::TAU * phase).cos() / 2.0
}

/// Linear interpolation of a cluster's shift from its size.
///
/// A cluster at the minimum size maps exactly to `sh_minus`, at the maximum
/// exactly to `sh_plus`, and in between linearly. When all clusters have the
/// same size the midpoint of the bounds is returned.
pub fn cluster_shift(
    size: u64,
    min_size: u64,
    max_size: u64,
    sh_minus: f64,
    sh_plus: f64,
) -> Result<f64> {
    validate_shift_bounds(sh_minus, sh_plus)?;
    if min_size > max_size {
        return Err(Error::InvalidArgument(format!(
            "min_size {min_size} exceeds max_size {max_size}"
        )));
    }
    if size < min_size || size > max_size {
        return Err(Error::Domain(format!(
            "size {size} outside [{min_size}, {max_size}]"
        )));
    }
    if min_size == max_size {
        return Ok((sh_minus + sh_plus) / 2.0);
    }
    // Endpoints are returned verbatim so the extremes hit the bounds exactly
    // instead of accumulating rounding from the interpolation arithmetic.
    if size == min_size {
        return Ok(sh_minus);
    }
    if size == max_size {
        return Ok(sh_plus);
    }
    let fraction = (size - min_size) as f64 / (max_size - min_size) as f64;
    Ok(fraction * (sh_plus - sh_minus) + sh_minus)
}

/// Per-cluster shifts plus the assignment of each sample to its cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftTable {
    pub k: usize,
    pub sizes: Vec<u64>,
    pub shifts: Vec<f64>,
    pub assignments: Vec<usize>,
    pub sh_minus: f64,
    pub sh_plus: f64,
    pub seed: u64,
}

impl ShiftTable {
    /// Builds a table by counting cluster sizes from `assignments` and
    /// interpolating shifts between the bounds. `seed` records the rng seed
    /// of whatever process produced the assignments.
    pub fn from_assignments(
        assignments: &[usize],
        k: usize,
        sh_minus: f64,
        sh_plus: f64,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if assignments.is_empty() {
            return Err(Error::InvalidArgument(
                "assignments must be non-empty".into(),
            ));
        }
        let mut sizes = vec![0u64; k];
        for (i, &c) in assignments.iter().enumerate() {
            if c >= k {
                return Err(Error::Index(format!(
                    "assignment {c} at sample {i} out of bounds for k {k}"
                )));
            }
            sizes[c] += 1;
        }
        Self::from_sizes(sizes, assignments.to_vec(), sh_minus, sh_plus, seed)
    }

    fn from_sizes(
        sizes: Vec<u64>,
        assignments: Vec<usize>,
        sh_minus: f64,
        sh_plus: f64,
        seed: u64,
    ) -> Result<Self> {
        validate_shift_bounds(sh_minus, sh_plus)?;
        let min = *sizes.iter().min().expect("k >= 1");
        let max = *sizes.iter().max().expect("k >= 1");
        let shifts = sizes
            .iter()
            .map(|&s| cluster_shift(s, min, max, sh_minus, sh_plus))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k: sizes.len(),
            sizes,
            shifts,
            assignments,
            sh_minus,
            sh_plus,
            seed,
        })
    }

    /// Checks internal consistency: lengths, assignment range, shift bounds,
    /// and that shifts are a monotone map of sizes hitting both endpoints.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.sizes.len() != self.k || self.shifts.len() != self.k {
            return Err(Error::Validation(format!(
                "k {} does not match sizes {} / shifts {}",
                self.k,
                self.sizes.len(),
                self.shifts.len()
            )));
        }
        validate_shift_bounds(self.sh_minus, self.sh_plus)?;
        if let Some(&bad) = self.assignments.iter().find(|&&c| c >= self.k) {
            return Err(Error::Validation(format!(
                "assignment {bad} out of bounds for k {}",
                self.k
            )));
        }
        for (c, &sh) in self.shifts.iter().enumerate() {
            if !sh.is_finite() || sh < self.sh_minus || sh > self.sh_plus {
                return Err(Error::Validation(format!(
                    "shift {sh} of cluster {c} outside [{}, {}]",
                    self.sh_minus, self.sh_plus
                )));
            }
        }
        let min = *self.sizes.iter().min().expect("k >= 1");
        let max = *self.sizes.iter().max().expect("k >= 1");
        for c in 0..self.k {
            let expected = cluster_shift(self.sizes[c], min, max, self.sh_minus, self.sh_plus)?;
            if self.shifts[c] != expected {
                return Err(Error::Validation(format!(
                    "shift of cluster {c} is {}, interpolation gives {expected}",
                    self.shifts[c]
                )));
            }
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.assignments.len()
    }

    /// Cluster of sample `i`.
    pub fn assignment(&self, i: usize) -> Result<usize> {
        self.assignments.get(i).copied().ok_or_else(|| {
            Error::Index(format!(
                "sample {i} out of bounds for {} assignments",
                self.assignments.len()
            ))
        })
    }

    /// Shift of cluster `c`.
    pub fn shift(&self, c: usize) -> Result<f64> {
        self.shifts.get(c).copied().ok_or_else(|| {
            Error::Index(format!("cluster {c} out of bounds for k {}", self.k))
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(s)?;
        table.validate()?;
        Ok(table)
    }

    pub fn save_json<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Scheduled value of cluster `c` at iteration `t`.
pub fn cluster_temperature(
    t: u64,
    c: usize,
    table: &ShiftTable,
    config: &ScheduleConfig,
) -> Result<f64> {
    Ok(base_temperature(t, config) + table.shift(c)?)
}

/// Scheduled value of sample `i` at iteration `t`.
pub fn sample_temperature(
    t: u64,
    i: usize,
    table: &ShiftTable,
    config: &ScheduleConfig,
) -> Result<f64> {
    cluster_temperature(t, table.assignment(i)?, table, config)
}

/// One row of a schedule dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub iteration: u64,
    pub cluster: usize,
    pub temperature: f64,
}

/// Evaluates every cluster's value at every iteration in `0..iters`.
pub fn schedule_dump(
    table: &ShiftTable,
    config: &ScheduleConfig,
    iters: u64,
) -> Result<Vec<ScheduleRow>> {
    config.validate()?;
    table.validate()?;
    if iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(iters as usize * table.k);
    for t in 0..iters {
        let base = base_temperature(t, config);
        for c in 0..table.k {
            rows.push(ScheduleRow {
                iteration: t,
                cluster: c,
                temperature: base + table.shifts[c],
            });
        }
    }
    Ok(rows)
}

/// Writes dump rows as TSV with a header; values carry nine significant
/// digits so consumers can reproduce comparisons at 1e-8 relative precision.
pub fn write_dump_tsv<W: Write>(rows: &[ScheduleRow], mut w: W) -> Result<()> {
    writeln!(w, "iteration\tcluster\ttemperature")?;
    for row in rows {
        writeln!(
            w,
            "{}\t{}\t{:.8e}",
            row.iteration, row.cluster, row.temperature
        )?;
    }
    Ok(())
}
