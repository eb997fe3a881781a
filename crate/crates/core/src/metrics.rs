//! Cluster-quality metrics and the parameter sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingMatrix};
use crate::hdbscan::{hdbscan, ClusterLabels, HdbscanParams};
use crate::umap::{distance, reduce, Metric, UmapParams};
use crate::{Error, Result};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean silhouette over non-noise points, Euclidean in `coords`.
pub fn silhouette(coords: &[Vec<f64>], labels: &[Option<usize>]) -> Result<f64> {
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            clusters.entry(*c).or_default().push(i);
        }
    }
    if clusters.len() < 2 {
        return Err(Error::SilhouetteUndefined);
    }
    let points: Vec<(usize, usize)> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|c| (i, c)))
        .collect();
    let scores: Vec<f64> = points
        .par_iter()
        .map(|&(i, own)| {
            let members = &clusters[&own];
            if members.len() == 1 {
                return 0.0;
            }
            let a = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| euclid(&coords[i], &coords[j]))
                .sum::<f64>()
                / (members.len() - 1) as f64;
            let b = clusters
                .iter()
                .filter(|(&c, _)| c != own)
                .map(|(_, m)| {
                    m.iter().map(|&j| euclid(&coords[i], &coords[j])).sum::<f64>() / m.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean over clusters of the mean cosine between members and the
/// arithmetic-mean centroid, in embedding space.
pub fn global_cos_sim(x: &EmbeddingMatrix, labels: &[Option<usize>]) -> Result<f64> {
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            clusters.entry(*c).or_default().push(i);
        }
    }
    if clusters.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut total = 0.0;
    for (&c, members) in &clusters {
        let mut centroid = vec![0.0; x.dim];
        for &i in members {
            for (a, v) in centroid.iter_mut().zip(x.row(i)) {
                *a += v;
            }
        }
        centroid.iter_mut().for_each(|a| *a /= members.len() as f64);
        if centroid.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroCentroid(c));
        }
        let mut s = 0.0;
        for &i in members {
            s += cosine_similarity(x.row(i), &centroid)?;
        }
        total += s / members.len() as f64;
    }
    Ok(total / clusters.len() as f64)
}

/// Percentage of points not labelled noise.
pub fn clustered_fraction(labels: &[Option<usize>]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    100.0 * labels.iter().filter(|l| l.is_some()).count() as f64 / labels.len() as f64
}

/// Trustworthiness of `low` as an embedding of `high` for k neighbours.
/// `metric` applies to the high-dimensional side; the embedding is Euclidean.
pub fn trustworthiness(high: &[Vec<f64>], low: &[Vec<f64>], k: usize, metric: Metric) -> Result<f64> {
    let n = high.len();
    if low.len() != n {
        return Err(Error::DimensionMismatch(n, low.len()));
    }
    if k == 0 || 2 * k >= n {
        return Err(Error::InvalidParameter(format!(
            "trustworthiness needs 0 < k < n/2, got k={k}, n={n}"
        )));
    }
    let norms: Vec<f64> = high
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let penalty: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut by_high: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (distance(metric, &high[i], &high[j], norms[i], norms[j]), j))
                .collect();
            by_high.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut rank = vec![0usize; n];
            for (r, &(_, j)) in by_high.iter().enumerate() {
                rank[j] = r + 1;
            }
            let mut by_low: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclid(&low[i], &low[j]), j))
                .collect();
            by_low.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            by_low[..k]
                .iter()
                .map(|&(_, j)| rank[j])
                .filter(|&r| r > k)
                .map(|r| (r - k) as f64)
                .sum::<f64>()
        })
        .sum();
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty)
}

/// Adjusted Rand index; noise counts as one more label.
pub fn adjusted_rand_index(a: &[Option<usize>], b: &[Option<usize>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let mut table: BTreeMap<(Option<usize>, Option<usize>), u64> = BTreeMap::new();
    let mut rows: BTreeMap<Option<usize>, u64> = BTreeMap::new();
    let mut cols: BTreeMap<Option<usize>, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((*x, *y)).or_default() += 1;
        *rows.entry(*x).or_default() += 1;
        *cols.entry(*y).or_default() += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sa: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sb: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub clustered_pct: f64,
    /// `None` when fewer than two clusters were found.
    pub sil_score: Option<f64>,
    /// `None` when no cluster was found.
    pub global_cos_sim: Option<f64>,
    pub mean: Option<f64>,
    pub n_clusters: usize,
}

pub fn evaluate(coords: &[Vec<f64>], x: &EmbeddingMatrix, labels: &ClusterLabels) -> Result<EvalReport> {
    let sil = match silhouette(coords, &labels.labels) {
        Ok(s) => Some(s),
        Err(Error::SilhouetteUndefined) => None,
        Err(e) => return Err(e),
    };
    let gcs = match global_cos_sim(x, &labels.labels) {
        Ok(g) => Some(g),
        Err(Error::EmptyCluster) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        clustered_pct: clustered_fraction(&labels.labels),
        sil_score: sil,
        global_cos_sim: gcs,
        mean: sil.zip(gcs).map(|(s, g)| (s + g) / 2.0),
        n_clusters: labels.n_clusters,
    })
}

pub const GRID_NEIGHBORS: [usize; 5] = [10, 15, 20, 25, 30];
pub const GRID_MIN_CLUSTER: [usize; 5] = [5, 10, 15, 20, 25];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_neighbors: usize,
    pub min_cluster_size: usize,
    pub clustered_pct: f64,
    pub sil_score: Option<f64>,
    pub global_cos_sim: Option<f64>,
    pub mean: Option<f64>,
    /// Episodes left out of the silhouette average (fewer than 2 clusters).
    pub sil_excluded: usize,
    /// Episodes left out of the cosine average (no clusters).
    pub gcs_excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub n_episodes: usize,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str = "n_neighbors,min_cluster,clustered_pct,sil_score,global_cos_sim,mean";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{}",
                r.n_neighbors,
                r.min_cluster_size,
                r.clustered_pct,
                cell(r.sil_score),
                cell(r.global_cos_sim),
                cell(r.mean)
            );
        }
        out
    }

    /// Row with the highest mean; ties go to the earlier row.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().filter(|r| r.mean.is_some()).fold(None, |best: Option<&SweepRow>, r| {
            match best {
                Some(b) if b.mean >= r.mean => Some(b),
                _ => Some(r),
            }
        })
    }
}

fn average(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut missing = 0usize;
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => missing += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), missing)
}

/// Averages per-episode reports into one sweep row.
pub fn aggregate(n_neighbors: usize, min_cluster_size: usize, reports: &[EvalReport]) -> SweepRow {
    let clustered_pct = reports.iter().map(|r| r.clustered_pct).sum::<f64>() / reports.len().max(1) as f64;
    let (sil, sil_excluded) = average(reports.iter().map(|r| r.sil_score));
    let (gcs, gcs_excluded) = average(reports.iter().map(|r| r.global_cos_sim));
    SweepRow {
        n_neighbors,
        min_cluster_size,
        clustered_pct,
        sil_score: sil,
        global_cos_sim: gcs,
        mean: sil.zip(gcs).map(|(s, g)| (s + g) / 2.0),
        sil_excluded,
        gcs_excluded,
    }
}

/// Runs reduce → hdbscan → metrics for every grid cell and episode. The
/// reduction of each episode is computed once per `n_neighbors`.
pub fn sweep(
    episodes: &[EmbeddingMatrix],
    grid_neighbors: &[usize],
    grid_mcs: &[usize],
    umap: &UmapParams,
    hdb: &HdbscanParams,
) -> Result<SweepTable> {
    if episodes.is_empty() {
        return Err(Error::NoEpisodes);
    }
    let mut neighbors = grid_neighbors.to_vec();
    neighbors.sort_unstable();
    neighbors.dedup();
    let mut mcs = grid_mcs.to_vec();
    mcs.sort_unstable();
    mcs.dedup();

    let jobs: Vec<(usize, usize)> = neighbors
        .iter()
        .flat_map(|&nn| (0..episodes.len()).map(move |e| (nn, e)))
        .collect();
    let reductions: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(nn, e)| {
            let params = UmapParams {
                n_neighbors: nn,
                ..umap.clone()
            };
            reduce(&episodes[e].to_rows(), &params)
        })
        .collect::<Result<_>>()?;
    let coords_of = |nn: usize, e: usize| {
        let slot = neighbors.iter().position(|&v| v == nn).expect("grid value");
        &reductions[slot * episodes.len() + e]
    };

    let mut rows = Vec::with_capacity(neighbors.len() * mcs.len());
    for &nn in &neighbors {
        for &m in &mcs {
            let params = HdbscanParams {
                min_cluster_size: m,
                ..hdb.clone()
            };
            let reports: Vec<EvalReport> = (0..episodes.len())
                .into_par_iter()
                .map(|e| {
                    let coords = coords_of(nn, e);
                    let labels = hdbscan(coords, &params)?;
                    evaluate(coords, &episodes[e], &labels)
                })
                .collect::<Result<_>>()?;
            rows.push(aggregate(nn, m, &reports));
        }
    }
    Ok(SweepTable {
        n_episodes: episodes.len(),
        rows,
    })
}
