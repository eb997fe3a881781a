//! End-to-end wiring: tag → embed → reduce → cluster → summarize → evaluate.

use serde::{Deserialize, Serialize};

use crate::embedding::{embed_builtin, EmbedConfig, EmbeddingMatrix};
use crate::episodes::Episode;
use crate::hdbscan::{hdbscan_with_embedding, ClusterLabels, HdbscanParams};
use crate::metrics::{evaluate, EvalReport};
use crate::summary::{build_summary, Summary, SummaryConfig};
use crate::tagging::{tag_episode, TagCorpus, TagOptions};
use crate::umap::{reduce, UmapParams};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tagging: TagOptions,
    pub embed: EmbedConfig,
    pub umap: UmapParams,
    pub hdbscan: HdbscanParams,
    pub summary: SummaryConfig,
}

impl PipelineConfig {
    /// Seeds every stochastic stage from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.umap.seed = seed;
        self.summary.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.umap.validate()?;
        self.hdbscan.validate()?;
        if !(0.0..=1.0).contains(&self.summary.sum_thresh) {
            return Err(Error::InvalidParameter(format!(
                "sum_thresh {} outside [0, 1]",
                self.summary.sum_thresh
            )));
        }
        if self.summary.n_topics == 0 {
            return Err(Error::InvalidParameter("n_topics must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub corpus: TagCorpus,
    pub coords: Vec<Vec<f64>>,
    pub labels: ClusterLabels,
    pub summary: Summary,
    pub report: EvalReport,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Runs every stage after embedding on an already embedded corpus.
pub fn run_embedded(corpus: TagCorpus, x: &EmbeddingMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    stage("config", cfg.validate())?;
    if x.len() != corpus.len() {
        return stage(
            "embed",
            Err(Error::CountMismatch {
                file_rows: x.len(),
                expected: corpus.len(),
            }),
        );
    }
    let coords = stage("reduce", reduce(&x.to_rows(), &cfg.umap))?;
    let labels = stage("cluster", hdbscan_with_embedding(&coords, x, &cfg.hdbscan))?;
    let summary = stage("summarize", build_summary(&labels, &corpus, x, &cfg.summary))?;
    let report = stage("evaluate", evaluate(&coords, x, &labels))?;
    Ok(PipelineOutput {
        corpus,
        coords,
        labels,
        summary,
        report,
    })
}

/// Embeds with the built-in embedder, then runs the remaining stages.
pub fn run_corpus(corpus: TagCorpus, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    if corpus.is_empty() {
        return stage("tag", Err(Error::EmptyCluster));
    }
    let x = stage("embed", embed_builtin(&corpus, &cfg.embed))?;
    run_embedded(corpus, &x, cfg)
}

pub fn run_episode(episode: &Episode, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let corpus = stage("tag", tag_episode(episode, cfg.tagging))?;
    run_corpus(corpus, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingSource;
    use crate::episodes::{generate_grid_episode, GridLayout};

    fn quick() -> PipelineConfig {
        let mut cfg = PipelineConfig::default().with_seed(3);
        cfg.umap.n_epochs = 100;
        cfg
    }

    #[test]
    fn grid_episode_end_to_end() {
        let e = generate_grid_episode(GridLayout::DoorKey, 8, 5).unwrap();
        let out = run_episode(&e, &quick()).unwrap();
        assert_eq!(out.coords.len(), out.corpus.len());
        assert_eq!(out.labels.labels.len(), out.corpus.len());
        let texts: Vec<&str> = out.corpus.texts().collect();
        for l in &out.summary.lines {
            assert!(texts.contains(&l.text.as_str()));
        }
        assert!(out.summary.lines.windows(2).all(|w| w[0].step_start <= w[1].step_start));
        assert_eq!(out.report.n_clusters, out.labels.n_clusters);
    }

    #[test]
    fn deterministic() {
        let e = generate_grid_episode(GridLayout::FourRooms, 9, 1).unwrap();
        let a = run_episode(&e, &quick()).unwrap();
        let b = run_episode(&e, &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_name_their_stage() {
        let e = generate_grid_episode(GridLayout::FourRooms, 9, 1).unwrap();
        let corpus = tag_episode(&e, TagOptions::default()).unwrap();
        let x = EmbeddingMatrix::from_rows(vec![vec![1.0, 0.0]; 2], EmbeddingSource::Builtin).unwrap();
        let err = run_embedded(corpus, &x, &quick()).unwrap_err();
        assert!(err.to_string().starts_with("embed stage:"), "{err}");
        assert!(matches!(err.root(), Error::CountMismatch { file_rows: 2, .. }));

        let mut bad = quick();
        bad.umap.n_neighbors = 1;
        let err = run_episode(&e, &bad).unwrap_err();
        assert!(err.to_string().starts_with("config stage:"), "{err}");
    }
}
