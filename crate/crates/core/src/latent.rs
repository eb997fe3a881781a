//! Clustering of per-step latent vectors and transition detection.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::read_vectors;
use crate::hdbscan::{hdbscan, ClusterLabels, HdbscanParams};
use crate::rng::{derive, seeded};
use crate::umap::{reduce, UmapParams};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentSource {
    File(String),
    Synthetic,
}

/// Latent vectors in step order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSeries {
    pub episode_ref: String,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    pub source: LatentSource,
}

impl LatentSeries {
    pub fn new(episode_ref: impl Into<String>, vectors: Vec<Vec<f64>>, source: LatentSource) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).ok_or(Error::EmptySeries)?;
        for (row, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch(dim, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row });
            }
        }
        Ok(Self {
            episode_ref: episode_ref.into(),
            dim,
            vectors,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads a latent file in either embedding file format. Rows are not normalized.
pub fn load_latents(path: &Path) -> Result<LatentSeries> {
    let raw = read_vectors(path)?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LatentSeries::new(stem, raw.rows, LatentSource::File(name))
}

fn gaussian_unit(rng: &mut crate::rng::Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Piecewise series: each segment is a random anchor plus per-step offsets of
/// norm `drift`. Anchors are rescaled so every pair is at least 20× drift apart.
pub fn synth_latents(n_segments: usize, steps_per_segment: usize, dim: usize, drift: f64, seed: u64) -> LatentSeries {
    let n_segments = n_segments.max(1);
    let steps_per_segment = steps_per_segment.max(1);
    let dim = dim.max(2);
    let drift = drift.abs();
    let mut rng = seeded(derive(seed, 0x1A7E));
    let mut anchors: Vec<Vec<f64>> = (0..n_segments).map(|_| gaussian_unit(&mut rng, dim)).collect();
    let closest = anchors
        .iter()
        .enumerate()
        .flat_map(|(i, a)| anchors[i + 1..].iter().map(move |b| dist(a, b)))
        .fold(f64::INFINITY, f64::min);
    if closest.is_finite() && closest > 0.0 && closest < 20.0 * drift {
        let scale = 20.0 * drift / closest;
        for a in &mut anchors {
            a.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let mut vectors = Vec::with_capacity(n_segments * steps_per_segment);
    for anchor in &anchors {
        for _ in 0..steps_per_segment {
            let offset = gaussian_unit(&mut rng, dim);
            vectors.push(anchor.iter().zip(&offset).map(|(a, o)| a + drift * o).collect());
        }
    }
    LatentSeries {
        episode_ref: format!("synthetic-{seed}"),
        dim,
        vectors,
        source: LatentSource::Synthetic,
    }
}

/// A label change between step `step` and `step + 1`. `None` is noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub step: usize,
    pub from: Option<usize>,
    pub to: Option<usize>,
}

impl Transition {
    pub fn involves_noise(&self) -> bool {
        self.from.is_none() || self.to.is_none()
    }
}

/// Every `t` with `labels[t] != labels[t + 1]`.
pub fn transitions(labels: &[Option<usize>]) -> Vec<Transition> {
    labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(step, w)| Transition {
            step,
            from: w[0],
            to: w[1],
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentResult {
    pub episode_ref: String,
    pub coords: Vec<Vec<f64>>,
    pub labels: ClusterLabels,
    pub transitions: Vec<Transition>,
}

impl LatentResult {
    pub fn unclusterable(&self) -> bool {
        self.labels.n_clusters == 0
    }

    /// Transitions between two clusters, skipping those into or out of noise.
    pub fn cluster_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| !t.involves_noise())
    }
}

fn label(l: Option<usize>) -> String {
    l.map_or_else(|| "noise".to_string(), |c| c.to_string())
}

impl fmt::Display for LatentResult {
    /// Header, cluster-to-cluster transitions, then noise transitions.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.labels.labels.len();
        if self.unclusterable() {
            return writeln!(f, "# {} steps={n} unclusterable", self.episode_ref);
        }
        writeln!(
            f,
            "# {} steps={n} clusters={} clustered={}",
            self.episode_ref,
            self.labels.n_clusters,
            self.labels.clustered_count()
        )?;
        for t in self.cluster_transitions() {
            writeln!(f, "step={} from={} to={}", t.step, label(t.from), label(t.to))?;
        }
        let noisy: Vec<&Transition> = self.transitions.iter().filter(|t| t.involves_noise()).collect();
        if !noisy.is_empty() {
            writeln!(f, "# noise")?;
            for t in noisy {
                writeln!(f, "step={} from={} to={}", t.step, label(t.from), label(t.to))?;
            }
        }
        Ok(())
    }
}

/// Reduces and clusters the series, then reads transitions off in step order.
pub fn cluster_latents(series: &LatentSeries, umap: &UmapParams, hdb: &HdbscanParams) -> Result<LatentResult> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let coords = reduce(&series.vectors, umap)?;
    let labels = hdbscan(&coords, hdb)?;
    let transitions = if labels.n_clusters == 0 {
        Vec::new()
    } else {
        transitions(&labels.labels)
    };
    Ok(LatentResult {
        episode_ref: series.episode_ref.clone(),
        coords,
        labels,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{vectors_to_binary, vectors_to_text};

    fn params(mcs: usize) -> (UmapParams, HdbscanParams) {
        (
            UmapParams {
                n_epochs: 200,
                ..UmapParams::default()
            },
            HdbscanParams {
                min_cluster_size: mcs,
                ..HdbscanParams::default()
            },
        )
    }

    #[test]
    fn synthetic_construction() {
        let s = synth_latents(3, 8, 2048, 0.01, 7);
        assert_eq!(s.len(), 24);
        assert!(s.vectors.iter().all(|v| v.len() == 2048));
        for a in 0..3 {
            for b in a + 1..3 {
                let d = dist(&s.vectors[a * 8], &s.vectors[b * 8]);
                assert!(d >= 20.0 * 0.01 - 2.0 * 0.01, "{d}");
            }
        }
        assert_eq!(s, synth_latents(3, 8, 2048, 0.01, 7));
        assert_ne!(s, synth_latents(3, 8, 2048, 0.01, 8));
    }

    #[test]
    fn anchors_rescale_for_large_drift() {
        let s = synth_latents(2, 1, 16, 1.0, 3);
        assert!(dist(&s.vectors[0], &s.vectors[1]) >= 18.0);
    }

    #[test]
    fn transitions_are_label_changes() {
        let labels = [Some(0), Some(0), None, Some(1), Some(1), Some(2)];
        let t = transitions(&labels);
        assert_eq!(t.iter().map(|t| t.step).collect::<Vec<_>>(), vec![1, 2, 4]);
        for t in &t {
            assert_ne!(labels[t.step], labels[t.step + 1]);
        }
        assert!(t[0].involves_noise() && t[1].involves_noise() && !t[2].involves_noise());
        assert!(transitions(&[Some(3); 5]).is_empty());
    }

    #[test]
    fn planted_segments_are_recovered() {
        let (u, h) = params(5);
        let r = cluster_latents(&synth_latents(3, 8, 2048, 0.01, 11), &u, &h).unwrap();
        assert_eq!(r.labels.n_clusters, 3);
        assert_eq!(r.labels.clustered_count(), 24);
        let steps: Vec<usize> = r.transitions.iter().map(|t| t.step).collect();
        assert_eq!(steps, vec![7, 15]);
        let text = r.to_string();
        assert!(text.starts_with("# synthetic-11 steps=24 clusters=3 clustered=24\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("step=")).count(), 2);
    }

    #[test]
    fn single_segment_has_no_cluster_transitions() {
        let (u, mut h) = params(5);
        h.selection = crate::hdbscan::Selection::ExcessOfMass;
        h.allow_single_cluster = true;
        for seed in 0..5 {
            let r = cluster_latents(&synth_latents(1, 24, 64, 0.01, seed), &u, &h).unwrap();
            assert!(r.labels.n_clusters <= 1, "seed {seed}: {}", r.labels.n_clusters);
            assert_eq!(r.cluster_transitions().count(), 0);
        }
    }

    #[test]
    fn all_noise_is_unclusterable() {
        let (u, h) = params(30);
        let r = cluster_latents(&synth_latents(3, 8, 64, 0.01, 2), &u, &h).unwrap();
        assert!(r.unclusterable());
        assert!(r.transitions.is_empty());
        assert!(r.to_string().trim_end().ends_with("unclusterable"));
    }

    #[test]
    fn load_text_and_binary() {
        let s = synth_latents(2, 3, 8, 0.1, 1);
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("ep.txt");
        std::fs::write(&t, vectors_to_text(8, &s.vectors)).unwrap();
        let loaded = load_latents(&t).unwrap();
        assert_eq!(loaded.vectors, s.vectors);
        assert_eq!(loaded.episode_ref, "ep");
        let b = dir.path().join("ep.bin");
        std::fs::write(&b, vectors_to_binary(8, &s.vectors)).unwrap();
        let loaded = load_latents(&b).unwrap();
        assert_eq!(loaded.len(), 6);
        for (x, y) in loaded.vectors.iter().flatten().zip(s.vectors.iter().flatten()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let nan = dir.path().join("nan.txt");
        std::fs::write(&nan, "dim=2 count=2\n1 2\nNaN 1\n").unwrap();
        assert!(matches!(load_latents(&nan), Err(Error::NonFinite { row: 1 })));
        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "").unwrap();
        assert!(load_latents(&empty).is_err());
        let zero = dir.path().join("zero.txt");
        std::fs::write(&zero, "dim=2 count=0\n").unwrap();
        assert!(matches!(load_latents(&zero), Err(Error::EmptySeries)));
    }
}
