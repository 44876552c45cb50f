//! Retrieval quality metrics over a similarity matrix.
//!
//! Ranking convention everywhere: gallery items are ordered by similarity
//! descending, ties broken by lower gallery index. The rank of the true
//! match for query i is one plus the number of items strictly better than
//! the diagonal entry, counting an equal item only when its index is lower.
//! Queries a metric cannot score (no positives, zero ideal gain) are
//! excluded from its mean and surfaced through counters instead of NaNs.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::SimilarityMatrix;

/// Graded relevance of every gallery item to every query, entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RelevancyMatrix {
    n_queries: usize,
    n_gallery: usize,
    values: Vec<f64>,
}

impl RelevancyMatrix {
    /// Entries must lie in [0, 1] and every query needs at least one
    /// positive entry.
    pub fn new(n_queries: usize, n_gallery: usize, values: Vec<f64>) -> Result<Self> {
        if n_queries == 0 || n_gallery == 0 {
            return Err(Error::InvalidArgument(format!(
                "relevancy shape must be positive, got {n_queries}x{n_gallery}"
            )));
        }
        if values.len() != n_queries * n_gallery {
            return Err(Error::InvalidArgument(format!(
                "relevancy data has {} values, shape needs {}",
                values.len(),
                n_queries * n_gallery
            )));
        }
        if let Some(pos) = values
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::Validation(format!(
                "relevance {} at row {} col {} outside [0, 1]",
                values[pos],
                pos / n_gallery,
                pos % n_gallery
            )));
        }
        for q in 0..n_queries {
            if values[q * n_gallery..(q + 1) * n_gallery]
                .iter()
                .all(|&v| v == 0.0)
            {
                return Err(Error::Validation(format!(
                    "query {q} has no relevant gallery item"
                )));
            }
        }
        Ok(Self {
            n_queries,
            n_gallery,
            values,
        })
    }

    /// Each query relevant only to its own index.
    pub fn identity(n: usize) -> Result<Self> {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self::new(n, n, values)
    }

    /// Binary relevance from cluster labels: 1 where labels match.
    pub fn from_labels(query_labels: &[usize], gallery_labels: &[usize]) -> Result<Self> {
        let (n_q, n_g) = (query_labels.len(), gallery_labels.len());
        let values: Vec<f64> = query_labels
            .iter()
            .flat_map(|ql| {
                gallery_labels
                    .iter()
                    .map(move |gl| if ql == gl { 1.0 } else { 0.0 })
            })
            .collect();
        Self::new(n_q, n_g, values)
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_gallery(&self) -> usize {
        self.n_gallery
    }

    pub fn get(&self, q: usize, g: usize) -> f64 {
        self.values[q * self.n_gallery + g]
    }

    pub fn transposed(&self) -> Result<Self> {
        let mut values = vec![0.0; self.values.len()];
        for q in 0..self.n_queries {
            for g in 0..self.n_gallery {
                values[g * self.n_queries + q] = self.get(q, g);
            }
        }
        Self::new(self.n_gallery, self.n_queries, values)
    }
}

/// Rank of the diagonal item for query i (1-based, lower-index tie rule).
fn diagonal_rank(similarities: &SimilarityMatrix, i: usize) -> usize {
    let row = similarities.row(i);
    let own = row[i];
    let better = row
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != i && (s > own || (s == own && j < i)))
        .count();
    better + 1
}

fn validate_ks(ks: &[usize], n: usize) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("no cutoff values given".into()));
    }
    for &k in ks {
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "cutoff {k} outside [1, {n}]"
            )));
        }
    }
    Ok(())
}

/// Fraction of queries whose true match ranks within each cutoff.
pub fn recall_at_k(
    similarities: &SimilarityMatrix,
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    let n = similarities.n();
    validate_ks(ks, n)?;
    let ranks: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| diagonal_rank(similarities, i))
        .collect();
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| r <= k).count();
            (k, hits as f64 / n as f64)
        })
        .collect())
}

/// A metric mean plus the number of queries it had to skip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome {
    pub value: f64,
    pub excluded_queries: usize,
}

/// Gallery indices in ranked order for one query row.
fn ranked_gallery(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| {
        row[b]
            .partial_cmp(&row[a])
            .expect("similarities are finite")
            .then(a.cmp(&b))
    });
    order
}

/// Mean average precision with binary positives at `rel > threshold`.
/// Queries without a positive are excluded and counted.
pub fn mean_average_precision(
    similarities: &SimilarityMatrix,
    relevancy: &RelevancyMatrix,
    threshold: f64,
) -> Result<MetricOutcome> {
    let n = similarities.n();
    if relevancy.n_queries() != n || relevancy.n_gallery() != n {
        return Err(Error::InvalidArgument(format!(
            "relevancy shape {}x{} does not match similarity {n}x{n}",
            relevancy.n_queries(),
            relevancy.n_gallery()
        )));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} outside [0, 1)"
        )));
    }
    let per_query: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|q| {
            let order = ranked_gallery(similarities.row(q));
            let mut hits = 0usize;
            let mut precision_sum = 0.0;
            for (pos, &g) in order.iter().enumerate() {
                if relevancy.get(q, g) > threshold {
                    hits += 1;
                    precision_sum += hits as f64 / (pos + 1) as f64;
                }
            }
            (hits > 0).then(|| precision_sum / hits as f64)
        })
        .collect();
    let included: Vec<f64> = per_query.iter().filter_map(|v| *v).collect();
    let excluded = n - included.len();
    let value = if included.is_empty() {
        0.0
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };
    Ok(MetricOutcome {
        value,
        excluded_queries: excluded,
    })
}

/// Normalized discounted cumulative gain with linear gains: item at rank r
/// contributes rel / log2(r + 1). Queries with zero ideal gain are excluded
/// and counted.
pub fn ndcg(
    similarities: &SimilarityMatrix,
    relevancy: &RelevancyMatrix,
) -> Result<MetricOutcome> {
    let n = similarities.n();
    if relevancy.n_queries() != n || relevancy.n_gallery() != n {
        return Err(Error::InvalidArgument(format!(
            "relevancy shape {}x{} does not match similarity {n}x{n}",
            relevancy.n_queries(),
            relevancy.n_gallery()
        )));
    }
    let per_query: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|q| {
            let order = ranked_gallery(similarities.row(q));
            let dcg: f64 = order
                .iter()
                .enumerate()
                .map(|(pos, &g)| relevancy.get(q, g) / ((pos + 2) as f64).log2())
                .sum();
            let mut gains: Vec<f64> = (0..n).map(|g| relevancy.get(q, g)).collect();
            gains.sort_by(|a, b| b.partial_cmp(a).expect("finite relevance"));
            let idcg: f64 = gains
                .iter()
                .enumerate()
                .map(|(pos, gain)| gain / ((pos + 2) as f64).log2())
                .sum();
            (idcg > 0.0).then(|| dcg / idcg)
        })
        .collect();
    let included: Vec<f64> = per_query.iter().filter_map(|v| *v).collect();
    let excluded = n - included.len();
    let value = if included.is_empty() {
        0.0
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };
    Ok(MetricOutcome {
        value,
        excluded_queries: excluded,
    })
}

/// Recall over the queries belonging to one group of clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRecall {
    pub clusters: Vec<usize>,
    pub num_queries: usize,
    pub recall: BTreeMap<usize, f64>,
}

/// Recall over the queries of a single cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecall {
    pub cluster: usize,
    pub size: u64,
    pub num_queries: usize,
    pub recall: BTreeMap<usize, f64>,
}

/// Head/tail recall split by cluster size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub head: StratumRecall,
    pub tail: StratumRecall,
    pub per_cluster: Vec<ClusterRecall>,
}

fn recall_over(ranks: &[usize], queries: &[usize], ks: &[usize]) -> BTreeMap<usize, f64> {
    ks.iter()
        .map(|&k| {
            if queries.is_empty() {
                return (k, 0.0);
            }
            let hits = queries.iter().filter(|&&q| ranks[q] <= k).count();
            (k, hits as f64 / queries.len() as f64)
        })
        .collect()
}

/// Splits clusters into a head (larger) and tail (smaller) half and reports
/// recall per stratum and per cluster, always against the full gallery.
///
/// Clusters are ordered by size descending with index breaking ties; the
/// first ceil(k/2) form the head. With one cluster the tail is empty and
/// reports zero recall over zero queries.
pub fn stratified_report(
    similarities: &SimilarityMatrix,
    labels: &[usize],
    sizes: &[u64],
    ks: &[usize],
) -> Result<StratifiedReport> {
    let n = similarities.n();
    validate_ks(ks, n)?;
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {n} queries",
            labels.len()
        )));
    }
    let k = sizes.len();
    if k == 0 {
        return Err(Error::InvalidArgument("sizes must be non-empty".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
        return Err(Error::Index(format!(
            "label {bad} out of bounds for {k} clusters"
        )));
    }
    if sizes.iter().sum::<u64>() != n as u64 {
        return Err(Error::Validation(format!(
            "sizes sum to {}, gallery has {n}",
            sizes.iter().sum::<u64>()
        )));
    }

    let ranks: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| diagonal_rank(similarities, i))
        .collect();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let head_len = k.div_ceil(2);
    let head_clusters: Vec<usize> = order[..head_len].to_vec();
    let tail_clusters: Vec<usize> = order[head_len..].to_vec();

    let mut cluster_queries: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (q, &c) in labels.iter().enumerate() {
        cluster_queries[c].push(q);
    }
    let stratum = |clusters: &[usize]| -> StratumRecall {
        let queries: Vec<usize> = {
            let mut qs: Vec<usize> = clusters
                .iter()
                .flat_map(|&c| cluster_queries[c].iter().copied())
                .collect();
            qs.sort_unstable();
            qs
        };
        StratumRecall {
            clusters: clusters.to_vec(),
            num_queries: queries.len(),
            recall: recall_over(&ranks, &queries, ks),
        }
    };

    let per_cluster = (0..k)
        .map(|c| ClusterRecall {
            cluster: c,
            size: sizes[c],
            num_queries: cluster_queries[c].len(),
            recall: recall_over(&ranks, &cluster_queries[c], ks),
        })
        .collect();

    Ok(StratifiedReport {
        head: stratum(&head_clusters),
        tail: stratum(&tail_clusters),
        per_cluster,
    })
}

/// Per-direction counters of queries excluded from a metric mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ExcludedQueries {
    pub map_v2t: usize,
    pub map_t2v: usize,
    pub ndcg_v2t: usize,
    pub ndcg_t2v: usize,
}

/// Full evaluation of one similarity matrix in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    /// Visual-to-text recall at each cutoff.
    pub recall_at: BTreeMap<usize, f64>,
    pub recall_at_t2v: BTreeMap<usize, f64>,
    pub map_v2t: f64,
    pub map_t2v: f64,
    pub ndcg_v2t: f64,
    pub ndcg_t2v: f64,
    pub excluded: ExcludedQueries,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified_v2t: Option<StratifiedReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified_t2v: Option<StratifiedReport>,
}

impl MetricsReport {
    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Computes every metric of the report from a visual-to-text similarity
/// matrix. `strata` optionally adds per-cluster recall from ground-truth
/// labels and sizes.
pub fn compute_metrics_report(
    similarities_v2t: &SimilarityMatrix,
    relevancy_v2t: &RelevancyMatrix,
    ks: &[usize],
    map_threshold: f64,
    strata: Option<(&[usize], &[u64])>,
) -> Result<MetricsReport> {
    let s_t2v = similarities_v2t.transposed();
    let r_t2v = relevancy_v2t.transposed()?;
    let map_v2t = mean_average_precision(similarities_v2t, relevancy_v2t, map_threshold)?;
    let map_t2v = mean_average_precision(&s_t2v, &r_t2v, map_threshold)?;
    let ndcg_v2t = ndcg(similarities_v2t, relevancy_v2t)?;
    let ndcg_t2v = ndcg(&s_t2v, &r_t2v)?;
    let (stratified_v2t, stratified_t2v) = match strata {
        Some((labels, sizes)) => (
            Some(stratified_report(similarities_v2t, labels, sizes, ks)?),
            Some(stratified_report(&s_t2v, labels, sizes, ks)?),
        ),
        None => (None, None),
    };
    Ok(MetricsReport {
        n: similarities_v2t.n(),
        recall_at: recall_at_k(similarities_v2t, ks)?,
        recall_at_t2v: recall_at_k(&s_t2v, ks)?,
        map_v2t: map_v2t.value,
        map_t2v: map_t2v.value,
        ndcg_v2t: ndcg_v2t.value,
        ndcg_t2v: ndcg_t2v.value,
        excluded: ExcludedQueries {
            map_v2t: map_v2t.excluded_queries,
            map_t2v: map_t2v.excluded_queries,
            ndcg_v2t: ndcg_v2t.excluded_queries,
            ndcg_t2v: ndcg_t2v.excluded_queries,
        },
        stratified_v2t,
        stratified_t2v,
    })
}

/// Writes per-cluster recall rows as TSV.
pub fn write_per_cluster_tsv<W: Write>(rows: &[ClusterRecall], mut w: W) -> Result<()> {
    let ks: Vec<usize> = rows
        .first()
        .map(|r| r.recall.keys().copied().collect())
        .unwrap_or_default();
    let header: Vec<String> = ks.iter().map(|k| format!("recall_at_{k}")).collect();
    writeln!(w, "cluster\tsize\tnum_queries\t{}", header.join("\t"))?;
    for row in rows {
        let cells: Vec<String> = ks
            .iter()
            .map(|k| format!("{:.8e}", row.recall.get(k).copied().unwrap_or(0.0)))
            .collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            row.cluster,
            row.size,
            row.num_queries,
            cells.join("\t")
        )?;
    }
    Ok(())
}
