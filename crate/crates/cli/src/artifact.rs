//! Self-contained record of one pipeline run, replayable bit for bit.

use std::path::{Path, PathBuf};

use codex_core::embedding::{embed_builtin, load_embeddings, EmbeddingMatrix};
use codex_core::hdbscan::ClusterLabels;
use codex_core::metrics::EvalReport;
use codex_core::pipeline::{run_embedded, PipelineConfig};
use codex_core::summary::Summary;
use codex_core::tagging::TagCorpus;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::fsutil::read;

pub const ARTIFACT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingDescriptor {
    Builtin { dim: usize },
    External { path: String, sha256: String, dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub format: u32,
    pub seed: u64,
    pub config: PipelineConfig,
    pub embedding: EmbeddingDescriptor,
    pub corpus: TagCorpus,
    pub coords: Vec<Vec<f64>>,
    pub labels: ClusterLabels,
    pub summary: Summary,
    pub report: EvalReport,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Resolves the embedding source, returning the matrix and its descriptor.
pub fn embed(corpus: &TagCorpus, cfg: &PipelineConfig, external: Option<&Path>) -> CliResult<(EmbeddingMatrix, EmbeddingDescriptor)> {
    match external {
        None => {
            let x = embed_builtin(corpus, &cfg.embed)?;
            let dim = x.dim;
            Ok((x, EmbeddingDescriptor::Builtin { dim }))
        }
        Some(path) => {
            let digest = sha256_hex(&read(path)?);
            let x = load_embeddings(path, corpus)?;
            let dim = x.dim;
            Ok((
                x,
                EmbeddingDescriptor::External {
                    path: path.to_string_lossy().into_owned(),
                    sha256: digest,
                    dim,
                },
            ))
        }
    }
}

impl RunArtifact {
    pub fn run(corpus: TagCorpus, cfg: &PipelineConfig, seed: u64, external: Option<&Path>) -> CliResult<Self> {
        let (x, embedding) = embed(&corpus, cfg, external)?;
        let out = run_embedded(corpus, &x, cfg)?;
        Ok(RunArtifact {
            format: ARTIFACT_FORMAT,
            seed,
            config: cfg.clone(),
            embedding,
            corpus: out.corpus,
            coords: out.coords,
            labels: out.labels,
            summary: out.summary,
            report: out.report,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read(path)?;
        serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Re-runs from the embedded corpus and config. External vectors are
    /// looked up at their recorded path, then next to the artifact, and must
    /// match the recorded digest.
    pub fn replay(&self, artifact_path: &Path) -> CliResult<RunArtifact> {
        if self.format != ARTIFACT_FORMAT {
            return Err(CliError::Replay(format!("unsupported artifact format {}", self.format)));
        }
        let external = match &self.embedding {
            EmbeddingDescriptor::Builtin { .. } => None,
            EmbeddingDescriptor::External { path, sha256, .. } => {
                let recorded = PathBuf::from(path);
                let beside = artifact_path
                    .parent()
                    .map(|d| d.join(recorded.file_name().unwrap_or_default()));
                let found = std::iter::once(recorded.clone())
                    .chain(beside)
                    .find(|p| p.is_file())
                    .ok_or_else(|| CliError::Replay(format!("embedding file {path} not found")))?;
                let digest = sha256_hex(&read(&found)?);
                if &digest != sha256 {
                    return Err(CliError::Replay(format!(
                        "embedding file {} has digest {digest}, artifact records {sha256}",
                        found.display()
                    )));
                }
                Some(found)
            }
        };
        let mut again = RunArtifact::run(self.corpus.clone(), &self.config, self.seed, external.as_deref())?;
        again.embedding = self.embedding.clone();
        Ok(again)
    }
}
