//! Extractive cluster summaries.
//!
//! Each cluster gets a one-topic LDA model over word n-grams whose lengths
//! span the cluster's shortest and longest tag. The top n-gram picks the
//! exemplar: the centroid-nearest tag that contains it. Tags far from the
//! exemplar are appended as well, and all selected tags are sorted by step.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingMatrix};
use crate::hdbscan::ClusterLabels;
use crate::rng::{derive, seeded};
use crate::tagging::{Tag, TagCorpus};
use crate::text::{contains_subsequence, tokenize};
use crate::{Error, Result};

pub const DEFAULT_SUM_THRESH: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub sum_thresh: f64,
    pub n_topics: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            sum_thresh: DEFAULT_SUM_THRESH,
            n_topics: 1,
            iters: 200,
            seed: 0,
        }
    }
}

/// Word-token counts of the shortest and longest text.
pub fn ngram_range_for<S: AsRef<str>>(texts: &[S]) -> Result<(usize, usize)> {
    let lens: Vec<usize> = texts.iter().map(|t| tokenize(t.as_ref()).len()).collect();
    match (lens.iter().min(), lens.iter().max()) {
        (Some(&lo), Some(&hi)) if lo > 0 => Ok((lo, hi)),
        (Some(_), Some(_)) => Err(Error::EmptyVocabulary),
        _ => Err(Error::EmptyCluster),
    }
}

/// Fitted topic model over n-gram terms.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    /// Terms in order of first occurrence.
    pub vocab: Vec<Vec<String>>,
    /// Occurrences of each term across all documents.
    pub counts: Vec<usize>,
    /// Normalized topic-term distributions, `n_topics × vocab.len()`.
    pub topic_term: Vec<Vec<f64>>,
    /// Tokens assigned to each topic after the final sweep.
    pub topic_sizes: Vec<usize>,
}

impl TopicModel {
    /// Term indices of `topic` ranked by weight, then count, then length,
    /// then first occurrence.
    pub fn ranking(&self, topic: usize) -> Vec<usize> {
        let w = &self.topic_term[topic];
        let mut idx: Vec<usize> = (0..self.vocab.len()).collect();
        idx.sort_by(|&a, &b| {
            w[b].total_cmp(&w[a])
                .then(self.counts[b].cmp(&self.counts[a]))
                .then(self.vocab[b].len().cmp(&self.vocab[a].len()))
                .then(a.cmp(&b))
        });
        idx
    }

    /// Top term of the most populated topic.
    pub fn top_ngram(&self) -> &[String] {
        let topic = (0..self.topic_sizes.len())
            .max_by(|&a, &b| self.topic_sizes[a].cmp(&self.topic_sizes[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        &self.vocab[self.ranking(topic)[0]]
    }
}

/// Word n-grams of `tokens` with lengths in `lo..=hi`, ordered by start
/// position then length.
pub fn ngrams(tokens: &[String], lo: usize, hi: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for start in 0..tokens.len() {
        for len in lo..=hi {
            if start + len <= tokens.len() {
                out.push(tokens[start..start + len].to_vec());
            }
        }
    }
    out
}

/// Collapsed Gibbs LDA with `alpha = 50 / n_topics` and `beta = 0.01`.
pub fn fit_lda<S: AsRef<str>>(
    texts: &[S],
    range: (usize, usize),
    n_topics: usize,
    iters: usize,
    seed: u64,
) -> Result<TopicModel> {
    if n_topics == 0 {
        return Err(Error::InvalidParameter("n_topics must be ≥ 1".into()));
    }
    let (lo, hi) = range;
    if lo == 0 || lo > hi {
        return Err(Error::InvalidParameter(format!("bad n-gram range {range:?}")));
    }
    let mut index: HashMap<Vec<String>, usize> = HashMap::new();
    let mut vocab = Vec::new();
    let mut docs: Vec<Vec<usize>> = Vec::with_capacity(texts.len());
    for t in texts {
        let doc = ngrams(&tokenize(t.as_ref()), lo, hi)
            .into_iter()
            .map(|g| {
                *index.entry(g.clone()).or_insert_with(|| {
                    vocab.push(g);
                    vocab.len() - 1
                })
            })
            .collect();
        docs.push(doc);
    }
    let v = vocab.len();
    if v == 0 {
        return Err(Error::EmptyVocabulary);
    }
    let k = n_topics;
    let alpha = 50.0 / k as f64;
    let beta = 0.01;

    let mut counts = vec![0usize; v];
    for &w in docs.iter().flatten() {
        counts[w] += 1;
    }
    let mut rng = seeded(derive(seed, 0x1DA));
    let mut n_dk = vec![vec![0usize; k]; docs.len()];
    let mut n_kw = vec![vec![0usize; v]; k];
    let mut n_k = vec![0usize; k];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&w| {
                    let t = rng.gen_range(0..k);
                    n_dk[d][t] += 1;
                    n_kw[t][w] += 1;
                    n_k[t] += 1;
                    t
                })
                .collect()
        })
        .collect();
    let mut p = vec![0.0; k];
    for _ in 0..iters {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                n_dk[d][old] -= 1;
                n_kw[old][w] -= 1;
                n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (n_dk[d][t] as f64 + alpha) * (n_kw[t][w] as f64 + beta)
                        / (n_k[t] as f64 + v as f64 * beta);
                    p[t] = total;
                }
                let u = rng.gen::<f64>() * total;
                let new = p.iter().position(|&c| u < c).unwrap_or(k - 1);
                z[d][i] = new;
                n_dk[d][new] += 1;
                n_kw[new][w] += 1;
                n_k[new] += 1;
            }
        }
    }
    let topic_term = (0..k)
        .map(|t| {
            let denom = n_k[t] as f64 + v as f64 * beta;
            n_kw[t].iter().map(|&c| (c as f64 + beta) / denom).collect()
        })
        .collect();
    Ok(TopicModel {
        vocab,
        counts,
        topic_term,
        topic_sizes: n_k,
    })
}

/// How the exemplar was matched to the top n-gram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemplarRule {
    FullTag,
    Contains,
    /// No tag contained the n-gram; the centroid-nearest tag was used.
    Fallback,
}

fn nearest(candidates: &[usize], x: &EmbeddingMatrix, centroid: &[f64]) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in candidates {
        let c = cosine_similarity(x.row(i), centroid)?;
        if best.is_none_or(|(b, _)| c > b) {
            best = Some((c, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::EmptyCluster)
}

/// Picks the exemplar among `members` (corpus indices).
pub fn select_exemplar(
    members: &[usize],
    corpus: &TagCorpus,
    top_ngram: &[String],
    x: &EmbeddingMatrix,
    centroid: &[f64],
) -> Result<(usize, ExemplarRule)> {
    let tokens: Vec<Vec<String>> = members
        .iter()
        .map(|&i| tokenize(&corpus.tags[i].text))
        .collect();
    let full: Vec<usize> = members
        .iter()
        .zip(&tokens)
        .filter(|(_, t)| t.as_slice() == top_ngram)
        .map(|(&i, _)| i)
        .collect();
    if !full.is_empty() {
        return Ok((nearest(&full, x, centroid)?, ExemplarRule::FullTag));
    }
    let containing: Vec<usize> = members
        .iter()
        .zip(&tokens)
        .filter(|(_, t)| contains_subsequence(t, top_ngram))
        .map(|(&i, _)| i)
        .collect();
    if !containing.is_empty() {
        return Ok((nearest(&containing, x, centroid)?, ExemplarRule::Contains));
    }
    Ok((nearest(members, x, centroid)?, ExemplarRule::Fallback))
}

/// Cluster tags whose cosine to the exemplar is below `sum_thresh`,
/// one per distinct text (earliest step kept), exemplar text excluded.
pub fn augment(
    members: &[usize],
    corpus: &TagCorpus,
    exemplar: usize,
    x: &EmbeddingMatrix,
    sum_thresh: f64,
) -> Result<Vec<(usize, f64)>> {
    let ex_text = &corpus.tags[exemplar].text;
    let mut picked: Vec<(usize, f64)> = Vec::new();
    for &i in members {
        let tag = &corpus.tags[i];
        if i == exemplar || &tag.text == ex_text {
            continue;
        }
        let c = cosine_similarity(x.row(i), x.row(exemplar))?;
        if c >= sum_thresh {
            continue;
        }
        match picked.iter_mut().find(|(j, _)| corpus.tags[*j].text == tag.text) {
            Some(slot) => {
                let held = &corpus.tags[slot.0];
                if (tag.step_start, i) < (held.step_start, slot.0) {
                    *slot = (i, c);
                }
            }
            None => picked.push((i, c)),
        }
    }
    picked.sort_by_key(|&(i, _)| (corpus.tags[i].step_start, i));
    Ok(picked)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicResult {
    pub cluster_id: usize,
    pub top_ngram: Vec<String>,
    pub is_full_tag: bool,
    pub rule: ExemplarRule,
    pub exemplar: Tag,
    pub augmented: Vec<(Tag, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub text: String,
    pub cluster_id: usize,
    pub below_threshold: bool,
    pub step_start: u32,
    /// Index of the tag in the corpus.
    pub tag_index: usize,
}

impl SummaryLine {
    pub fn render(&self) -> String {
        if self.below_threshold {
            format!("{} *[{}]*", self.text, self.cluster_id)
        } else {
            format!("{} [{}]", self.text, self.cluster_id)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_tags: usize,
    pub n_clusters: usize,
    pub lines: Vec<SummaryLine>,
    pub compression: f64,
    pub topics: Vec<TopicResult>,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "tags={} clusters={} compression={:.3}\n",
            self.n_tags, self.n_clusters, self.compression
        );
        for l in &self.lines {
            let _ = writeln!(out, "{}", l.render());
        }
        out
    }
}

fn centroid(members: &[usize], x: &EmbeddingMatrix) -> Vec<f64> {
    let mut c = vec![0.0; x.dim];
    for &i in members {
        for (a, v) in c.iter_mut().zip(x.row(i)) {
            *a += v;
        }
    }
    c.iter_mut().for_each(|a| *a /= members.len() as f64);
    c
}

fn summarize_cluster(
    cluster_id: usize,
    members: &[usize],
    corpus: &TagCorpus,
    x: &EmbeddingMatrix,
    cfg: &SummaryConfig,
) -> Result<(TopicResult, usize, Vec<usize>)> {
    let texts: Vec<&str> = members.iter().map(|&i| corpus.tags[i].text.as_str()).collect();
    let range = ngram_range_for(&texts)?;
    let model = fit_lda(
        &texts,
        range,
        cfg.n_topics,
        cfg.iters,
        derive(cfg.seed, cluster_id as u64),
    )?;
    let top = model.top_ngram().to_vec();
    let c = centroid(members, x);
    if c.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroCentroid(cluster_id));
    }
    let (exemplar, rule) = select_exemplar(members, corpus, &top, x, &c)?;
    let picked = augment(members, corpus, exemplar, x, cfg.sum_thresh)?;
    let result = TopicResult {
        cluster_id,
        is_full_tag: rule == ExemplarRule::FullTag,
        top_ngram: top,
        rule,
        exemplar: corpus.tags[exemplar].clone(),
        augmented: picked
            .iter()
            .map(|&(i, cos)| (corpus.tags[i].clone(), cos))
            .collect(),
    };
    Ok((result, exemplar, picked.into_iter().map(|(i, _)| i).collect()))
}

/// Builds the step-sorted extractive summary of one clustered corpus.
pub fn build_summary(
    labels: &ClusterLabels,
    corpus: &TagCorpus,
    x: &EmbeddingMatrix,
    cfg: &SummaryConfig,
) -> Result<Summary> {
    if labels.labels.len() != corpus.len() || x.len() != corpus.len() {
        return Err(Error::CountMismatch {
            file_rows: labels.labels.len().min(x.len()),
            expected: corpus.len(),
        });
    }
    let results: Vec<(TopicResult, usize, Vec<usize>)> = labels
        .members
        .par_iter()
        .enumerate()
        .map(|(c, members)| summarize_cluster(c, members, corpus, x, cfg))
        .collect::<Result<_>>()?;

    let mut lines = Vec::new();
    let mut topics = Vec::with_capacity(results.len());
    for (r, ex, aug) in results {
        let line = |i: usize, below: bool| SummaryLine {
            text: corpus.tags[i].text.clone(),
            cluster_id: r.cluster_id,
            below_threshold: below,
            step_start: corpus.tags[i].step_start,
            tag_index: i,
        };
        lines.push(line(ex, false));
        lines.extend(aug.into_iter().map(|i| line(i, true)));
        topics.push(r);
    }
    lines.sort_by_key(|l| (l.step_start, l.cluster_id, l.below_threshold, l.tag_index));
    let compression = if corpus.is_empty() {
        0.0
    } else {
        lines.len() as f64 / corpus.len() as f64
    };
    Ok(Summary {
        n_tags: corpus.len(),
        n_clusters: labels.n_clusters,
        lines,
        compression,
        topics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_builtin, EmbedConfig, EmbeddingSource};
    use crate::tagging::TemplateId;

    fn corpus(texts: &[&str]) -> TagCorpus {
        TagCorpus {
            episode_ref: "t".into(),
            tags: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Tag::at(i as u32, TemplateId::ObjectAt, t.to_string()))
                .collect(),
        }
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn range_rule() {
        assert_eq!(ngram_range_for(&["a b c d e", "v w x y z"]).unwrap(), (5, 5));
        assert_eq!(ngram_range_for(&["a b c d", "a b c d e f g h i"]).unwrap(), (4, 9));
        assert_eq!(ngram_range_for(&["The door is open."]).unwrap(), (5, 5));
        assert!(matches!(ngram_range_for::<&str>(&[]), Err(Error::EmptyCluster)));
    }

    #[test]
    fn identical_tags_give_full_text() {
        let texts = ["The door is open."; 6];
        let range = ngram_range_for(&texts).unwrap();
        let m = fit_lda(&texts, range, 1, 200, 3).unwrap();
        assert_eq!(m.top_ngram(), toks("The door is open.").as_slice());
    }

    #[test]
    fn one_topic_matches_frequency_ranking() {
        let texts = [
            "Marine 1 moves closer to beacon 7",
            "Marine 2 moves closer to beacon 9",
            "Marine 1 moves farther from beacon 7",
            "Marine 3 moves closer to beacon 9",
        ];
        let range = ngram_range_for(&texts).unwrap();
        let m = fit_lda(&texts, range, 1, 50, 0).unwrap();
        let mut freq: HashMap<Vec<String>, usize> = HashMap::new();
        for t in &texts {
            for g in ngrams(&toks(t), range.0, range.1) {
                *freq.entry(g).or_default() += 1;
            }
        }
        let best = freq.values().copied().max().unwrap();
        assert_eq!(freq[m.top_ngram()], best);
        // all four are 7 tokens, each seen once: first occurrence wins the tie
        assert_eq!(m.top_ngram(), toks(texts[0]).as_slice());
    }

    #[test]
    fn lda_is_deterministic() {
        let texts = ["a b c d", "a b c e", "x y z w", "x y a b"];
        let a = fit_lda(&texts, (1, 2), 3, 100, 11).unwrap();
        let b = fit_lda(&texts, (1, 2), 3, 100, 11).unwrap();
        assert_eq!(a, b);
        for row in &a.topic_term {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(matches!(
            fit_lda(&["a b"], (3, 3), 1, 10, 0),
            Err(Error::EmptyVocabulary)
        ));
    }

    fn unit_rows(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows, EmbeddingSource::External("test".into())).unwrap()
    }

    #[test]
    fn exemplar_rules() {
        let c = corpus(&[
            "Marine 11 moves closer to beacon 5",
            "Marine 12 moves closer to beacon 6",
            "Marine 13 moves farther from beacon 6",
        ]);
        let x = unit_rows(vec![vec![1.0, 0.2], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let centroid = [1.0, 0.05];
        let (i, rule) = select_exemplar(&[0, 1, 2], &c, &toks("moves closer to beacon"), &x, &centroid).unwrap();
        assert_eq!((i, rule), (1, ExemplarRule::Contains));
        let (i, rule) = select_exemplar(&[0, 1, 2], &c, &toks("Marine 13 moves farther from beacon 6"), &x, &centroid).unwrap();
        assert_eq!((i, rule), (2, ExemplarRule::FullTag));
        let (i, rule) = select_exemplar(&[0, 1, 2], &c, &toks("group 9"), &x, &centroid).unwrap();
        assert_eq!((i, rule), (1, ExemplarRule::Fallback));
    }

    #[test]
    fn augmentation_cases() {
        let c = corpus(&["a", "b", "c", "d", "a"]);
        let x = unit_rows(vec![
            vec![1.0, 0.0],
            vec![0.9, 0.1],
            vec![0.0, 1.0],
            vec![0.95, 0.05],
            vec![1.0, 0.0],
        ]);
        let members = [0, 1, 2, 3, 4];
        let picked: Vec<usize> = augment(&members, &c, 0, &x, 0.6).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(picked, vec![2]);
        assert!(augment(&[0, 1, 3], &c, 0, &x, 0.6).unwrap().is_empty());
        let all: Vec<usize> = augment(&members, &c, 0, &x, 1.0).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(all, vec![1, 2, 3]);
    }

    #[test]
    fn summary_is_extractive_sorted_and_covers_clusters() {
        let texts = [
            "The player is at (1, 1).",
            "The door is open.",
            "The player is at (2, 1).",
            "The door is open.",
            "The player is at (3, 1).",
            "The door is closed.",
            "The player turns left.",
        ];
        let c = corpus(&texts);
        let x = embed_builtin(&c, &EmbedConfig::default()).unwrap();
        let assign = [Some(0), Some(1), Some(0), Some(1), Some(0), Some(1), None];
        let coords: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, 0.0]).collect();
        let labels = ClusterLabels::from_assignment(&assign, &coords);
        let s = build_summary(&labels, &c, &x, &SummaryConfig::default()).unwrap();
        let regular = s.lines.iter().filter(|l| !l.below_threshold).count();
        assert_eq!(regular, 2);
        for w in s.lines.windows(2) {
            assert!(w[0].step_start <= w[1].step_start);
        }
        for l in &s.lines {
            assert!(texts.contains(&l.text.as_str()));
            assert_ne!(l.text, "The player turns left.");
        }
        let rendered = s.render();
        assert!(rendered.starts_with(&format!("tags=7 clusters=2 compression={:.3}\n", s.compression)));
    }

    #[test]
    fn no_clusters_gives_empty_summary() {
        let c = corpus(&["a b", "c d"]);
        let x = embed_builtin(&c, &EmbedConfig::default()).unwrap();
        let labels = ClusterLabels::from_assignment(&[None, None], &[vec![0.0], vec![1.0]]);
        let s = build_summary(&labels, &c, &x, &SummaryConfig::default()).unwrap();
        assert!(s.lines.is_empty());
        assert_eq!(s.compression, 0.0);
    }

    #[test]
    fn raising_threshold_never_removes_lines() {
        let texts: Vec<String> = (0..12)
            .map(|i| match i % 3 {
                0 => format!("The player is at ({i}, 2)."),
                1 => "The player moves forward.".to_string(),
                _ => format!("The key is at ({}, {}).", i % 5, i % 4),
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let c = corpus(&refs);
        let x = embed_builtin(&c, &EmbedConfig::default()).unwrap();
        let assign: Vec<Option<usize>> = (0..12).map(|i| Some(i % 3)).collect();
        let coords: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let labels = ClusterLabels::from_assignment(&assign, &coords);
        let mut prev: Vec<(String, usize)> = Vec::new();
        for t in [0.0, 0.3, 0.6, 0.9, 1.0] {
            let cfg = SummaryConfig {
                sum_thresh: t,
                ..SummaryConfig::default()
            };
            let s = build_summary(&labels, &c, &x, &cfg).unwrap();
            let cur: Vec<(String, usize)> = s.lines.iter().map(|l| (l.text.clone(), l.cluster_id)).collect();
            for p in &prev {
                assert!(cur.contains(p), "{p:?} dropped at {t}");
            }
            prev = cur;
        }
    }
}
