//! Episode files: one JSON document per episode.
//!
//! ```text
//! {
//!   "version": 1,
//!   "env_kind": "grid" | "multi_entity",
//!   "seed": <u64>,
//!   "steps": [ { "step_no": 0, "state": { "grid": {...} }, "action": null }, ... ],
//!   "frames": [ { "width": W, "height": H, "intensities": [...] }, ... ]   (optional)
//! }
//! ```
//!
//! Positions are `[x, y]` pairs. See `docs/formats.md` for every field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnvKind, Episode, Raster, Step};
use crate::{Error, Result};

pub const EPISODE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a> {
    version: u32,
    env_kind: EnvKind,
    seed: u64,
    steps: &'a [Step],
    #[serde(skip_serializing_if = "Option::is_none")]
    frames: Option<&'a [Raster]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OwnedEnvelope {
    version: u32,
    env_kind: EnvKind,
    seed: u64,
    steps: Vec<Step>,
    #[serde(default)]
    frames: Option<Vec<Raster>>,
}

pub fn to_json(e: &Episode) -> String {
    let mut out = serde_json::to_string_pretty(&Envelope {
        version: EPISODE_FORMAT_VERSION,
        env_kind: e.env_kind,
        seed: e.seed,
        steps: &e.steps,
        frames: e.frames.as_deref(),
    })
    .expect("episodes always serialize");
    out.push('\n');
    out
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses and validates an episode document.
pub fn parse_episode(text: &str) -> Result<Episode> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let env: OwnedEnvelope = serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        Error::Parse {
            offset: byte_offset(text, inner.line(), inner.column()),
            field,
            message: inner.to_string(),
        }
    })?;
    if env.version != EPISODE_FORMAT_VERSION {
        return Err(Error::Parse {
            offset: 0,
            field: "version".into(),
            message: format!("unsupported version {}", env.version),
        });
    }
    let episode = Episode {
        env_kind: env.env_kind,
        seed: env.seed,
        steps: env.steps,
        frames: env.frames,
    };
    episode.validate()?;
    Ok(episode)
}

/// Writes the episode next to its destination and renames it into place.
pub fn save_episode(e: &Episode, path: &Path) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, to_json(e)).map_err(|err| Error::io(&tmp, err))?;
    std::fs::rename(&tmp, path).map_err(|err| Error::io(path, err))
}

pub fn load_episode(path: &Path) -> Result<Episode> {
    let text = std::fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    parse_episode(&text)
}
