//! UMAP dimensionality reduction.
//!
//! Exact k-nearest neighbours, smoothed-kNN membership strengths, fuzzy
//! union, a fitted low-dimensional kernel and the usual stochastic layout
//! optimization with negative sampling. Every random draw comes from one
//! seeded stream consumed in a fixed order, so results are bit-identical
//! for identical inputs regardless of thread count.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{derive, seeded};
use crate::{Error, Result};

/// Above this many points the spectral initialization is skipped.
pub const SPECTRAL_INIT_MAX_N: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_components: usize,
    pub metric: Metric,
    pub n_epochs: usize,
    pub seed: u64,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    pub repulsion_strength: f64,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 10,
            min_dist: 0.0,
            spread: 1.0,
            n_components: 2,
            metric: Metric::Cosine,
            n_epochs: 500,
            seed: 0,
            negative_sample_rate: 5,
            learning_rate: 1.0,
            repulsion_strength: 1.0,
        }
    }
}

impl UmapParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_neighbors < 2 {
            return bad(format!("n_neighbors {} < 2", self.n_neighbors));
        }
        if self.n_components < 1 {
            return bad("n_components must be ≥ 1".into());
        }
        if !(self.min_dist >= 0.0) || !(self.spread > 0.0) || self.min_dist > self.spread {
            return bad(format!(
                "need 0 ≤ min_dist ≤ spread, got min_dist {} spread {}",
                self.min_dist, self.spread
            ));
        }
        if self.n_epochs < 1 {
            return bad("n_epochs must be ≥ 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Distance between two points; `nu`, `nv` are their norms (cosine only).
pub fn distance(metric: Metric, u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    match metric {
        Metric::Euclidean => u
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        Metric::Cosine => {
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            (1.0 - dot / (nu * nv)).max(0.0)
        }
    }
}

fn check_points(points: &[Vec<f64>], metric: Metric) -> Result<Vec<f64>> {
    let dim = points.first().map_or(0, Vec::len);
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch(dim, p.len()));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
    }
    let norms: Vec<f64> = points.iter().map(|p| norm(p)).collect();
    if metric == Metric::Cosine && norms.contains(&0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(norms)
}

/// Exact k nearest neighbours of every point, self excluded, sorted by
/// distance with ties broken by lower index.
pub fn knn(points: &[Vec<f64>], k: usize, metric: Metric) -> Result<Vec<Vec<Neighbor>>> {
    let n = points.len();
    if n <= k || k == 0 {
        return Err(Error::TooFewPoints { n, k });
    }
    let norms = check_points(points, metric)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Neighbor {
                    index: j,
                    dist: distance(metric, &points[i], &points[j], norms[i], norms[j]),
                })
                .collect();
            let cmp = |a: &Neighbor, b: &Neighbor| {
                a.dist.total_cmp(&b.dist).then(a.index.cmp(&b.index))
            };
            if k < row.len() {
                row.select_nth_unstable_by(k - 1, cmp);
                row.truncate(k);
            }
            row.sort_by(cmp);
            row
        })
        .collect())
}

/// Weighted graph over `n` points. Edges are `(from, to, weight)` sorted by
/// `(from, to)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

const SIGMA_LO: f64 = 1e-8;
const SIGMA_HI: f64 = 1e4;
const SIGMA_ITERS: usize = 64;

fn membership_sum(dists: &[f64], rho: f64, sigma: f64) -> f64 {
    dists
        .iter()
        .map(|d| (-(d - rho).max(0.0) / sigma).exp())
        .sum()
}

/// Per-point calibration: `rho` is the nearest-neighbour distance and
/// `sigma` solves `Σ exp(−max(0, d − rho)/sigma) = log2(k)` by bisection.
pub fn smooth_weights(neighbors: &[Vec<Neighbor>], k: usize) -> FuzzyGraph {
    let target = (k as f64).log2();
    let n = neighbors.len();
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for (i, row) in neighbors.iter().enumerate() {
        let dists: Vec<f64> = row.iter().map(|nb| nb.dist).collect();
        let r = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let r = if r.is_finite() { r } else { 0.0 };
        let (mut lo, mut hi) = (SIGMA_LO, SIGMA_HI);
        for _ in 0..SIGMA_ITERS {
            let mid = 0.5 * (lo + hi);
            if membership_sum(&dists, r, mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let mut out: Vec<(usize, usize, f64)> = row
            .iter()
            .map(|nb| (i, nb.index, (-(nb.dist - r).max(0.0) / s).exp()))
            .filter(|e| e.2 > 0.0)
            .collect();
        out.sort_by_key(|e| e.1);
        edges.extend(out);
        rho.push(r);
        sigma.push(s);
    }
    FuzzyGraph {
        n,
        edges,
        rho,
        sigma,
    }
}

/// Probabilistic t-conorm `a + b − a·b`.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Fuzzy union of a directed graph with its transpose. Both directions of
/// every undirected edge are kept.
pub fn symmetrize(g: &FuzzyGraph) -> FuzzyGraph {
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for &(i, j, w) in &g.edges {
        if i == j {
            continue;
        }
        let key = (i.min(j), i.max(j));
        let slot = pairs.entry(key).or_insert((0.0, 0.0));
        if i < j {
            slot.0 = fuzzy_union(slot.0, w);
        } else {
            slot.1 = fuzzy_union(slot.1, w);
        }
    }
    let mut edges = Vec::with_capacity(2 * pairs.len());
    for ((i, j), (a, b)) in pairs {
        let w = fuzzy_union(a, b);
        if w > 0.0 {
            edges.push((i, j, w));
            edges.push((j, i, w));
        }
    }
    edges.sort_by_key(|e| (e.0, e.1));
    FuzzyGraph {
        n: g.n,
        edges,
        rho: g.rho.clone(),
        sigma: g.sigma.clone(),
    }
}

pub const CURVE_SAMPLES: usize = 300;

/// Low-dimensional similarity kernel `1 / (1 + a·d^(2b))`.
pub fn kernel(d: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * d.powf(2.0 * b))
}

/// Target membership curve that [`fit_curve`] approximates.
pub fn curve_target(d: f64, min_dist: f64, spread: f64) -> f64 {
    if d <= min_dist {
        1.0
    } else {
        (-(d - min_dist) / spread).exp()
    }
}

/// Sample abscissae shared by the fit and its checks.
pub fn curve_samples(spread: f64) -> Vec<f64> {
    let hi = 3.0 * spread;
    (0..CURVE_SAMPLES)
        .map(|i| hi * i as f64 / (CURVE_SAMPLES - 1) as f64)
        .collect()
}

/// Root-mean-square error of the kernel against the target curve.
pub fn curve_rmse(a: f64, b: f64, min_dist: f64, spread: f64) -> f64 {
    let xs = curve_samples(spread);
    let sse: f64 = xs
        .iter()
        .map(|&x| (kernel(x, a, b) - curve_target(x, min_dist, spread)).powi(2))
        .sum();
    (sse / xs.len() as f64).sqrt()
}

/// Least-squares `(a, b)` for the kernel by Levenberg–Marquardt.
pub fn fit_curve(min_dist: f64, spread: f64) -> Result<(f64, f64)> {
    if !(spread > 0.0) || !(min_dist >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "curve fit needs spread > 0 and min_dist ≥ 0, got {spread}, {min_dist}"
        )));
    }
    let xs = curve_samples(spread);
    let ys: Vec<f64> = xs.iter().map(|&x| curve_target(x, min_dist, spread)).collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (kernel(x, a, b) - y).powi(2))
            .sum()
    };

    let (mut a, mut b) = (1.0, 1.0);
    let mut cost = sse(a, b);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..2000 {
        // normal equations J^T J and gradient J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                // kernel is 1 at the origin for any (a, b)
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let f = 1.0 / den;
            let r = f - y;
            let da = -p / (den * den);
            let db = -a * p * 2.0 * x.ln() / (den * den);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        if ga.abs().max(gb.abs()) < 1e-14 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let m00 = jaa * (1.0 + lambda);
            let m11 = jbb * (1.0 + lambda);
            let det = m00 * m11 - jab * jab;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m11 * ga - jab * gb) / det;
            let step_b = -(-jab * ga + m00 * gb) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let c = sse(na, nb);
                if c.is_finite() && c <= cost {
                    let small = (step_a.abs() <= 1e-12 * (1.0 + a.abs()))
                        && (step_b.abs() <= 1e-12 * (1.0 + b.abs()));
                    let gain = cost - c;
                    a = na;
                    b = nb;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if small || gain <= 1e-16 * cost.max(f64::MIN_POSITIVE) {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    let residual = (cost / xs.len() as f64).sqrt();
    if !converged || !a.is_finite() || !b.is_finite() || a <= 0.0 || b <= 0.0 {
        return Err(Error::CurveFit { residual });
    }
    Ok((a, b))
}

fn degrees(g: &FuzzyGraph) -> Vec<f64> {
    let mut d = vec![0.0; g.n];
    for &(i, _, w) in &g.edges {
        d[i] += w;
    }
    d
}

/// Eigenvectors 1..=dim of the symmetric normalized Laplacian, or `None`
/// when the decomposition is unusable.
fn spectral_layout(g: &FuzzyGraph, dim: usize) -> Option<Vec<Vec<f64>>> {
    let n = g.n;
    if n <= dim + 1 || n > SPECTRAL_INIT_MAX_N {
        return None;
    }
    let deg = degrees(g);
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut l = DMatrix::<f64>::identity(n, n);
    for &(i, j, w) in &g.edges {
        l[(i, j)] -= w * inv_sqrt[i] * inv_sqrt[j];
    }
    let eig = SymmetricEigen::try_new(l, f64::EPSILON, 10_000)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[x]
            .total_cmp(&eig.eigenvalues[y])
            .then(x.cmp(&y))
    });
    let cols = &order[1..=dim];
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|i| cols.iter().map(|&c| eig.eigenvectors[(i, c)]).collect())
        .collect();
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    Some(coords)
}

/// Spectral initialization scaled to a max absolute coordinate of 10 plus
/// small seeded noise; seeded uniform `[−10, 10]` when unavailable.
pub fn initial_layout(g: &FuzzyGraph, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(derive(seed, 0x1417));
    match spectral_layout(g, dim) {
        Some(mut coords) => {
            let max = coords
                .iter()
                .flatten()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if max > 0.0 { 10.0 / max } else { 1.0 };
            let noise = Normal::new(0.0, 1e-4).expect("valid normal");
            for row in &mut coords {
                for v in row.iter_mut() {
                    *v = *v * scale + noise.sample(&mut rng);
                }
            }
            coords
        }
        None => (0..g.n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-10.0..=10.0)).collect())
            .collect(),
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Stochastic layout optimization of a symmetric fuzzy graph.
pub fn optimize_layout(g: &FuzzyGraph, params: &UmapParams) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    if g.n == 0 {
        return Err(Error::TooFewPoints { n: 0, k: 0 });
    }
    let (a, b) = fit_curve(params.min_dist, params.spread)?;
    let init = initial_layout(g, params.n_components, params.seed);
    optimize_from(g, params, a, b, init)
}

/// Layout optimization from explicit initial coordinates.
pub fn optimize_from(
    g: &FuzzyGraph,
    params: &UmapParams,
    a: f64,
    b: f64,
    init: Vec<Vec<f64>>,
) -> Result<Vec<Vec<f64>>> {
    let n = g.n;
    let dim = params.n_components;
    let n_epochs = params.n_epochs;
    let mut emb = init;

    // rescale every axis to [0, 10]
    for d in 0..dim {
        let (lo, hi) = emb
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[d]), hi.max(p[d]))
            });
        let span = hi - lo;
        for p in &mut emb {
            p[d] = if span > 0.0 { 10.0 * (p[d] - lo) / span } else { 0.0 };
        }
    }

    let max_w = g.edges.iter().fold(0.0f64, |m, e| m.max(e.2));
    let edges: Vec<(usize, usize, f64)> = g
        .edges
        .iter()
        .copied()
        .filter(|e| e.2 >= max_w / n_epochs as f64)
        .collect();
    let eps: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let neg_rate = params.negative_sample_rate as f64;
    let eps_neg: Vec<f64> = eps
        .iter()
        .map(|&e| if neg_rate > 0.0 { e / neg_rate } else { f64::INFINITY })
        .collect();
    let mut next = eps.clone();
    let mut next_neg = eps_neg.clone();
    let mut rng = seeded(derive(params.seed, 0x0E90));
    let gamma = params.repulsion_strength;
    let mut cur = vec![0.0; dim];

    for epoch in 0..n_epochs {
        let alpha = params.learning_rate * (1.0 - epoch as f64 / n_epochs as f64);
        let e = epoch as f64;
        for (idx, &(j, k, _)) in edges.iter().enumerate() {
            if next[idx] > e {
                continue;
            }
            let d2 = sq_dist(&emb[j], &emb[k]);
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..dim {
                let grad = clip(coeff * (emb[j][d] - emb[k][d]));
                emb[j][d] += grad * alpha;
                emb[k][d] -= grad * alpha;
            }
            next[idx] += eps[idx];

            let n_neg = ((e - next_neg[idx]) / eps_neg[idx]).floor().max(0.0) as usize;
            cur.copy_from_slice(&emb[j]);
            for _ in 0..n_neg {
                let other = rng.gen_range(0..n);
                if other == j {
                    continue;
                }
                let d2 = sq_dist(&cur, &emb[other]);
                if d2 <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * gamma * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                for d in 0..dim {
                    cur[d] += clip(coeff * (cur[d] - emb[other][d])) * alpha;
                }
            }
            emb[j].copy_from_slice(&cur);
            next_neg[idx] += n_neg as f64 * eps_neg[idx];
        }
        if emb.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLayout { epoch });
        }
    }
    Ok(emb)
}

/// Indices of the first occurrence of each distinct row, and for every row
/// the position of its representative in that list.
pub fn unique_rows(points: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>) {
    let mut first: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut reps = Vec::new();
    let mut map = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
        let slot = *first.entry(key).or_insert_with(|| {
            reps.push(i);
            reps.len() - 1
        });
        map.push(slot);
    }
    (reps, map)
}

/// Full reduction: kNN, calibration, union and layout. Exact duplicate
/// rows are laid out once and share coordinates. `n_neighbors` is clamped
/// to one less than the number of distinct rows.
pub fn reduce(points: &[Vec<f64>], params: &UmapParams) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints { n, k: 1 });
    }
    check_points(points, params.metric)?;
    let (reps, map) = unique_rows(points);
    let coords = if reps.len() < 2 {
        vec![vec![0.0; params.n_components]]
    } else {
        let distinct: Vec<Vec<f64>> = reps.iter().map(|&i| points[i].clone()).collect();
        let k = params.n_neighbors.min(distinct.len() - 1);
        let neighbors = knn(&distinct, k, params.metric)?;
        let graph = symmetrize(&smooth_weights(&neighbors, k));
        optimize_layout(&graph, params)?
    };
    Ok(map.into_iter().map(|slot| coords[slot].clone()).collect())
}
