//! Tag-to-vector embedding.
//!
//! The built-in embedder hashes character and word n-grams into a fixed
//! number of signed buckets, weights them by term frequency and normalizes
//! each row. Vectors produced elsewhere can be ingested from a file in
//! either of the two formats described in `docs/formats.md`.

use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twox_hash::XxHash64;

use crate::tagging::TagCorpus;
use crate::text::tokenize;
use crate::{Error, Result};

pub const DEFAULT_DIM: usize = 384;
pub const MIN_BUILTIN_DIM: usize = 64;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Builtin,
    External(String),
}

/// Row-major matrix of unit-norm vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    data: Vec<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingMatrix {
    /// Normalizes and validates `rows`.
    pub fn from_rows(rows: Vec<Vec<f64>>, source: EmbeddingSource) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("embedding dim {dim} < 2")));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, mut row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(dim, row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
            normalize(&mut row)?;
            data.extend(row);
        }
        Ok(EmbeddingMatrix { dim, data, source })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Copies the listed rows into a new matrix.
    pub fn select(&self, indices: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            dim: self.dim,
            data,
            source: self.source.clone(),
        }
    }
}

/// Settings of the built-in hashing embedder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub char_ngrams: RangeInclusive<usize>,
    pub word_ngrams: RangeInclusive<usize>,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: DEFAULT_DIM,
            char_ngrams: 3..=5,
            word_ngrams: 1..=3,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    fn validate(&self) -> Result<()> {
        if self.dim < MIN_BUILTIN_DIM {
            return Err(Error::InvalidParameter(format!(
                "dim {} < {MIN_BUILTIN_DIM}",
                self.dim
            )));
        }
        for (name, r) in [("char_ngrams", &self.char_ngrams), ("word_ngrams", &self.word_ngrams)] {
            if *r.start() == 0 || r.start() > r.end() {
                return Err(Error::InvalidParameter(format!("{name} range {r:?} is empty")));
            }
        }
        Ok(())
    }
}

fn add_feature(v: &mut [f64], seed: u64, kind: u8, gram: &[u8]) {
    let mut bytes = Vec::with_capacity(gram.len() + 1);
    bytes.push(kind);
    bytes.extend_from_slice(gram);
    let h = XxHash64::oneshot(seed, &bytes);
    let idx = (h % v.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    v[idx] += sign;
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Unnormalized hashed term-frequency vector of one text.
fn hashed_counts(text: &str, cfg: &EmbedConfig) -> Vec<f64> {
    let mut v = vec![0.0; cfg.dim];
    let tokens = tokenize(text);

    let padded: Vec<char> = format!(" {} ", tokens.join(" ")).chars().collect();
    let mut buf = String::new();
    for n in cfg.char_ngrams.clone() {
        for w in padded.windows(n) {
            buf.clear();
            buf.extend(w);
            add_feature(&mut v, cfg.seed, b'c', buf.as_bytes());
        }
    }
    for n in cfg.word_ngrams.clone() {
        for w in tokens.windows(n) {
            add_feature(&mut v, cfg.seed, b'w', w.join("\x1f").as_bytes());
        }
    }
    v
}

/// Embeds one text with the built-in hasher.
pub fn embed_text(text: &str, cfg: &EmbedConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if text.trim().is_empty() {
        return Err(Error::EmptyTag(0));
    }
    let mut v = hashed_counts(text, cfg);
    normalize(&mut v)?;
    Ok(v)
}

/// Embeds a list of texts, one row each, in parallel.
pub fn embed_texts<S: AsRef<str> + Sync>(texts: &[S], cfg: &EmbedConfig) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    if let Some(i) = texts.iter().position(|t| t.as_ref().trim().is_empty()) {
        return Err(Error::EmptyTag(i));
    }
    let rows = texts
        .par_iter()
        .map(|t| {
            let mut v = hashed_counts(t.as_ref(), cfg);
            normalize(&mut v).map(|_| v)
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = cfg.dim;
    let data = rows.into_iter().flatten().collect();
    Ok(EmbeddingMatrix {
        dim,
        data,
        source: EmbeddingSource::Builtin,
    })
}

/// Embeds every tag of `corpus`, aligned by index.
pub fn embed_builtin(corpus: &TagCorpus, cfg: &EmbedConfig) -> Result<EmbeddingMatrix> {
    let texts: Vec<&str> = corpus.texts().collect();
    embed_texts(&texts, cfg)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Raw vectors read from an embedding file, before normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawVectors {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

fn parse_err(offset: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_text(text: &str) -> Result<RawVectors> {
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("").trim_end();
    let fields: Vec<&str> = header.split_whitespace().collect();
    let value = |i: usize, key: &str| -> Result<usize> {
        fields
            .get(i)
            .and_then(|f| f.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(0, "header", format!("expected `dim=<D> count=<N>`, got `{header}`")))
    };
    let dim = value(0, "dim=")?;
    let count = value(1, "count=")?;
    if fields.len() != 2 {
        return Err(parse_err(0, "header", "trailing fields after count"));
    }
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("embedding dim {dim} < 2")));
    }
    let mut offset = header.len() + 1;
    let mut rows = Vec::with_capacity(count);
    for line in lines {
        let line_start = offset;
        offset += line.len();
        let body = line.trim_end();
        if body.is_empty() {
            continue;
        }
        let row_no = rows.len();
        let row: Vec<f64> = body
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(line_start, &format!("row {row_no}"), format!("`{tok}` is not a number")))
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(parse_err(
                line_start,
                &format!("row {row_no}"),
                format!("{} values, expected {dim}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.len() != count {
        return Err(parse_err(
            offset,
            "count",
            format!("header declares {count} rows, file has {}", rows.len()),
        ));
    }
    Ok(RawVectors { dim, rows })
}

fn parse_binary(bytes: &[u8]) -> Result<RawVectors> {
    if bytes.len() < 8 {
        return Err(parse_err(0, "header", "binary file shorter than its 8-byte header"));
    }
    let dim = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("embedding dim {dim} < 2")));
    }
    let expected = dim
        .checked_mul(count)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(8))
        .ok_or_else(|| parse_err(0, "header", "header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(parse_err(
            bytes.len().min(expected),
            "data",
            format!("expected {expected} bytes for {count}x{dim} floats, got {}", bytes.len()),
        ));
    }
    let rows = bytes[8..]
        .chunks_exact(dim * 4)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
                .collect()
        })
        .collect();
    Ok(RawVectors { dim, rows })
}

/// Parses either embedding file format. Text files start with `dim=`.
pub fn parse_vectors(bytes: &[u8]) -> Result<RawVectors> {
    if bytes.starts_with(b"dim=") {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| parse_err(e.valid_up_to(), "text", "file is not valid UTF-8"))?;
        parse_text(text)
    } else {
        parse_binary(bytes)
    }
}

pub fn read_vectors(path: &Path) -> Result<RawVectors> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_vectors(&bytes)
}

/// Loads externally produced vectors for `corpus`, normalizing each row.
pub fn load_embeddings(path: &Path, corpus: &TagCorpus) -> Result<EmbeddingMatrix> {
    let raw = read_vectors(path)?;
    if raw.rows.len() != corpus.len() {
        return Err(Error::CountMismatch {
            file_rows: raw.rows.len(),
            expected: corpus.len(),
        });
    }
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingMatrix::from_rows(raw.rows, EmbeddingSource::External(name))
}

/// Text format, shortest round-trip float formatting.
pub fn vectors_to_text(dim: usize, rows: &[Vec<f64>]) -> String {
    use std::fmt::Write as _;
    let mut out = format!("dim={dim} count={}\n", rows.len());
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Binary format: `u32 dim`, `u32 count`, then `f32` values, all little-endian.
pub fn vectors_to_binary(dim: usize, rows: &[Vec<f64>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + rows.len() * dim * 4);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    for row in rows {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// True when every row has unit norm.
pub fn rows_are_unit(m: &EmbeddingMatrix) -> bool {
    m.rows()
        .all(|r| (r.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= NORM_TOLERANCE)
}
