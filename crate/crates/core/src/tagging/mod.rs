//! Template-driven natural-language tags for episodes.
//!
//! Grid episodes get state tags every step, event tags on the step an
//! action takes effect and, when frames are attached, visual-anomaly tags.
//! Multi-entity episodes get movement, collection, relational and group tags;
//! relational predicates that hold on consecutive steps are coalesced into a
//! single interval tag.

mod entities;
mod grid;
mod templates;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episodes::{EnvKind, Episode};
use crate::{Error, Result};

pub use entities::tag_multientity_episode;
pub use grid::{tag_grid_anomalies, tag_grid_episode, tag_grid_step};
pub use templates::{parse_tag_text, split_timestamp, ParsedTag, TagKind, TemplateId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub text: String,
    pub step_start: u32,
    pub step_end: u32,
    pub kind: TagKind,
    pub template: TemplateId,
}

impl Tag {
    pub fn at(step: u32, template: TemplateId, text: String) -> Self {
        Tag::span(step, step, template, text)
    }

    pub fn span(step_start: u32, step_end: u32, template: TemplateId, text: String) -> Self {
        Tag {
            text,
            step_start,
            step_end,
            kind: template.kind(),
            template,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCorpus {
    pub episode_ref: String,
    pub tags: Vec<Tag>,
}

impl TagCorpus {
    /// Builds a corpus, ordering tags by `(step_start, template, text)`.
    pub fn new(episode_ref: impl Into<String>, mut tags: Vec<Tag>) -> Self {
        tags.sort_by(|a, b| {
            (a.step_start, a.template, &a.text, a.step_end).cmp(&(
                b.step_start,
                b.template,
                &b.text,
                b.step_end,
            ))
        });
        TagCorpus {
            episode_ref: episode_ref.into(),
            tags,
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tags.iter().map(|t| t.text.as_str())
    }

    /// Line format: `step_start<TAB>step_end<TAB>text`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.tags {
            let _ = writeln!(out, "{}\t{}\t{}", t.step_start, t.step_end, t.text);
        }
        out
    }

    pub fn from_tsv(episode_ref: impl Into<String>, text: &str) -> Result<Self> {
        let mut tags = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let start_offset = offset;
            offset += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            let err = |field: &str, message: String| Error::Parse {
                offset: start_offset,
                field: field.to_string(),
                message,
            };
            let mut parts = line.splitn(3, '\t');
            let (Some(a), Some(b), Some(body)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("line", "expected three tab-separated fields".into()));
            };
            let step_start: u32 = a
                .parse()
                .map_err(|e| err("step_start", format!("{e}")))?;
            let step_end: u32 = b.parse().map_err(|e| err("step_end", format!("{e}")))?;
            if step_start > step_end {
                return Err(err("step_end", format!("{step_end} < step_start {step_start}")));
            }
            let parsed = parse_tag_text(body)
                .ok_or_else(|| err("text", format!("`{body}` matches no tag template")))?;
            tags.push(Tag::span(step_start, step_end, parsed.template, body.to_string()));
        }
        Ok(TagCorpus::new(episode_ref, tags))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        TagCorpus::from_tsv(name, &text)
    }
}

/// Options controlling how an episode is tagged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagOptions {
    /// Prefix multi-entity tag text with `t1 -- t2 `.
    pub with_timestamps: bool,
    /// Emit visual-anomaly tags when the episode carries frames.
    pub anomalies: bool,
}

impl Default for TagOptions {
    fn default() -> Self {
        TagOptions {
            with_timestamps: true,
            anomalies: true,
        }
    }
}

pub fn episode_ref(e: &Episode) -> String {
    match e.env_kind {
        EnvKind::Grid => format!("grid-{}", e.seed),
        EnvKind::MultiEntity => format!("multi_entity-{}", e.seed),
    }
}

/// Tags any episode according to its kind.
pub fn tag_episode(e: &Episode, options: TagOptions) -> Result<TagCorpus> {
    match e.env_kind {
        EnvKind::Grid => tag_grid_episode(e, options.anomalies),
        EnvKind::MultiEntity => tag_multientity_episode(e, options.with_timestamps),
    }
}
