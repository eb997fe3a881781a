//! Run settings: flags override a `key=value` config file, which overrides
//! the library defaults.

use std::path::Path;
use std::str::FromStr;

use codex_core::hdbscan::Selection;
use codex_core::pipeline::PipelineConfig;
use codex_core::umap::Metric;

use crate::error::{CliError, CliResult};
use crate::fsutil::read_string;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub seed: Option<u64>,
    pub n_neighbors: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub selection: Option<Selection>,
    pub allow_single_cluster: Option<bool>,
    pub n_epochs: Option<usize>,
    pub min_dist: Option<f64>,
    pub metric: Option<Metric>,
    pub sum_thresh: Option<f64>,
    pub n_topics: Option<usize>,
    pub lda_iters: Option<usize>,
    pub embed_dim: Option<usize>,
    pub timestamps: Option<bool>,
}

fn value<T: FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{raw}` for `{key}`")))
}

fn flag(key: &str, raw: &str) -> CliResult<bool> {
    match raw {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid boolean `{raw}` for `{key}`"))),
    }
}

impl Settings {
    /// Parses `key=value` lines. Blank lines and `#` comments are skipped;
    /// dashes in keys are read as underscores.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut s = Settings::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", no + 1)))?;
            let key = key.trim().replace('-', "_");
            let raw = raw.trim();
            match key.as_str() {
                "seed" => s.seed = Some(value(&key, raw)?),
                "n_neighbors" => s.n_neighbors = Some(value(&key, raw)?),
                "min_cluster_size" => s.min_cluster_size = Some(value(&key, raw)?),
                "min_samples" => s.min_samples = Some(value(&key, raw)?),
                "selection" => s.selection = Some(value(&key, raw)?),
                "allow_single_cluster" => s.allow_single_cluster = Some(flag(&key, raw)?),
                "n_epochs" => s.n_epochs = Some(value(&key, raw)?),
                "min_dist" => s.min_dist = Some(value(&key, raw)?),
                "metric" => s.metric = Some(value(&key, raw)?),
                "sum_thresh" => s.sum_thresh = Some(value(&key, raw)?),
                "n_topics" => s.n_topics = Some(value(&key, raw)?),
                "lda_iters" => s.lda_iters = Some(value(&key, raw)?),
                "embed_dim" => s.embed_dim = Some(value(&key, raw)?),
                "timestamps" => s.timestamps = Some(flag(&key, raw)?),
                other => {
                    return Err(CliError::Usage(format!(
                        "config line {}: unknown key `{other}`",
                        no + 1
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&read_string(path)?)
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            seed: self.seed.or(base.seed),
            n_neighbors: self.n_neighbors.or(base.n_neighbors),
            min_cluster_size: self.min_cluster_size.or(base.min_cluster_size),
            min_samples: self.min_samples.or(base.min_samples),
            selection: self.selection.or(base.selection),
            allow_single_cluster: self.allow_single_cluster.or(base.allow_single_cluster),
            n_epochs: self.n_epochs.or(base.n_epochs),
            min_dist: self.min_dist.or(base.min_dist),
            metric: self.metric.or(base.metric),
            sum_thresh: self.sum_thresh.or(base.sum_thresh),
            n_topics: self.n_topics.or(base.n_topics),
            lda_iters: self.lda_iters.or(base.lda_iters),
            embed_dim: self.embed_dim.or(base.embed_dim),
            timestamps: self.timestamps.or(base.timestamps),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Applies the settings to the default config and validates the result.
    pub fn pipeline_config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::default().with_seed(self.seed());
        if let Some(v) = self.n_neighbors {
            cfg.umap.n_neighbors = v;
        }
        if let Some(v) = self.n_epochs {
            cfg.umap.n_epochs = v;
        }
        if let Some(v) = self.min_dist {
            cfg.umap.min_dist = v;
        }
        if let Some(v) = self.metric {
            cfg.umap.metric = v;
        }
        if let Some(v) = self.min_cluster_size {
            cfg.hdbscan.min_cluster_size = v;
        }
        if let Some(v) = self.min_samples {
            cfg.hdbscan.min_samples = v;
        }
        if let Some(v) = self.selection {
            cfg.hdbscan.selection = v;
        }
        if let Some(v) = self.allow_single_cluster {
            cfg.hdbscan.allow_single_cluster = v;
        }
        if let Some(v) = self.sum_thresh {
            cfg.summary.sum_thresh = v;
        }
        if let Some(v) = self.n_topics {
            cfg.summary.n_topics = v;
        }
        if let Some(v) = self.lda_iters {
            cfg.summary.iters = v;
        }
        if let Some(v) = self.embed_dim {
            cfg.embed.dim = v;
        }
        if let Some(v) = self.timestamps {
            cfg.tagging.with_timestamps = v;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}
