//! HDBSCAN density clustering.
//!
//! Core distances, a Prim minimum spanning tree under mutual reachability,
//! the single-linkage dendrogram, the condensed cluster tree and leaf or
//! excess-of-mass selection. All steps are exact and deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Leaf,
    ExcessOfMass,
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaf" => Ok(Selection::Leaf),
            "eom" | "excess_of_mass" => Ok(Selection::ExcessOfMass),
            other => Err(Error::InvalidParameter(format!("unknown selection `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub selection: Selection,
    /// Allow the root of the condensed tree to be returned as a cluster.
    pub allow_single_cluster: bool,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 10,
            min_samples: 1,
            selection: Selection::Leaf,
            allow_single_cluster: false,
        }
    }
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "min_cluster_size {} < 2",
                self.min_cluster_size
            )));
        }
        if self.min_samples < 1 {
            return Err(Error::InvalidParameter("min_samples must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabels {
    /// Cluster id per point; `None` is noise.
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
    pub members: Vec<Vec<usize>>,
    pub centroids: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_centroids: Option<Vec<Vec<f64>>>,
}

impl ClusterLabels {
    /// Builds labels from arbitrary cluster keys, numbering clusters by
    /// the first point that carries each key.
    pub fn from_assignment(assign: &[Option<usize>], coords: &[Vec<f64>]) -> Self {
        let mut remap: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(assign.len());
        for a in assign {
            labels.push(a.map(|key| match remap.iter().find(|(k, _)| *k == key) {
                Some(&(_, id)) => id,
                None => {
                    remap.push((key, remap.len()));
                    remap.len() - 1
                }
            }));
        }
        let n_clusters = remap.len();
        let mut members = vec![Vec::new(); n_clusters];
        for (i, l) in labels.iter().enumerate() {
            if let Some(c) = l {
                members[*c].push(i);
            }
        }
        let centroids = members.iter().map(|m| mean_of(m, |i| &coords[i])).collect();
        ClusterLabels {
            labels,
            n_clusters,
            members,
            centroids,
            embedding_centroids: None,
        }
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn clustered_count(&self) -> usize {
        self.labels.len() - self.noise_count()
    }

    /// Adds per-cluster means of the aligned embedding rows.
    pub fn attach_embedding_centroids(&mut self, x: &EmbeddingMatrix) -> Result<()> {
        if x.len() != self.labels.len() {
            return Err(Error::CountMismatch {
                file_rows: x.len(),
                expected: self.labels.len(),
            });
        }
        self.embedding_centroids = Some(
            self.members
                .iter()
                .map(|m| mean_of(m, |i| x.row(i)))
                .collect(),
        );
        Ok(())
    }
}

fn mean_of<'a>(idx: &[usize], row: impl Fn(usize) -> &'a [f64]) -> Vec<f64> {
    let Some(&first) = idx.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; row(first).len()];
    for &i in idx {
        for (a, v) in acc.iter_mut().zip(row(i)) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= idx.len() as f64);
    acc
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance to the `min_samples`-th nearest other point.
pub fn core_distances(coords: &[Vec<f64>], min_samples: usize) -> Result<Vec<f64>> {
    let n = coords.len();
    if min_samples == 0 || n <= min_samples {
        return Err(Error::TooFewPoints { n, k: min_samples });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclid(&coords[i], &coords[j]))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm from point 0 under mutual-reachability distance.
pub fn mutual_reachability_mst(coords: &[Vec<f64>], cores: &[f64]) -> Vec<MstEdge> {
    let n = coords.len();
    if n < 2 {
        return Vec::new();
    }
    let mreach = |i: usize, j: usize| cores[i].max(cores[j]).max(euclid(&coords[i], &coords[j]));
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    in_tree[0] = true;
    for j in 1..n {
        best[j] = mreach(0, j);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: parent[next].min(next),
            b: parent[next].max(next),
            weight: best[next],
        });
        for k in 0..n {
            if in_tree[k] {
                continue;
            }
            let d = mreach(next, k);
            if d < best[k] || (d == best[k] && next < parent[k]) {
                best[k] = d;
                parent[k] = next;
            }
        }
    }
    edges
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Merge {
    left: usize,
    right: usize,
    dist: f64,
    size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merges; merge `i` creates node `n + i`.
fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<Merge> {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    let mut uf = UnionFind::new(2 * n);
    let mut size = vec![1usize; 2 * n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let node = n + merges.len();
        let (left, right) = (ra.min(rb), ra.max(rb));
        size[node] = size[left] + size[right];
        uf.parent[ra] = node;
        uf.parent[rb] = node;
        merges.push(Merge {
            left,
            right,
            dist: e.weight,
            size: size[node],
        });
    }
    merges
}

/// One edge of the condensed tree. Clusters are numbered from `n_points`
/// (the root); children below `n_points` are single points falling out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub edges: Vec<CondensedEdge>,
}

impl CondensedTree {
    pub fn root(&self) -> usize {
        self.n_points
    }

    pub fn cluster_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = std::iter::once(self.root())
            .chain(self.edges.iter().filter(|e| e.size > 1).map(|e| e.child))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn child_clusters(&self, c: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.parent == c && e.child >= self.n_points)
            .map(|e| e.child)
            .collect()
    }
}

fn lambda_of(dist: f64) -> f64 {
    if dist > 0.0 {
        1.0 / dist
    } else {
        f64::INFINITY
    }
}

/// Condenses the dendrogram: splits count only when both sides keep at
/// least `min_cluster_size` points.
fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> CondensedTree {
    let mut edges = Vec::new();
    if n == 0 {
        return CondensedTree { n_points: 0, edges };
    }
    if merges.is_empty() {
        return CondensedTree { n_points: n, edges };
    }
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves_under = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = merges[x - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    };

    let root = 2 * n - 2;
    let mut next_label = n + 1;
    // (dendrogram node, condensed cluster label)
    let mut queue = std::collections::VecDeque::from([(root, n)]);
    while let Some((node, label)) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        let lambda = lambda_of(m.dist);
        let (ls, rs) = (size_of(m.left), size_of(m.right));
        let big_left = ls >= min_cluster_size;
        let big_right = rs >= min_cluster_size;
        if big_left && big_right {
            for (child, size) in [(m.left, ls), (m.right, rs)] {
                edges.push(CondensedEdge {
                    parent: label,
                    child: next_label,
                    lambda,
                    size,
                });
                queue.push_back((child, next_label));
                next_label += 1;
            }
            continue;
        }
        for (child, big) in [(m.left, big_left), (m.right, big_right)] {
            if big {
                queue.push_back((child, label));
            } else {
                for p in leaves_under(child) {
                    edges.push(CondensedEdge {
                        parent: label,
                        child: p,
                        lambda,
                        size: 1,
                    });
                }
            }
        }
    }
    CondensedTree { n_points: n, edges }
}

/// Builds the condensed tree for `coords`.
pub fn condensed_tree(coords: &[Vec<f64>], params: &HdbscanParams) -> Result<CondensedTree> {
    params.validate()?;
    let cores = core_distances(coords, params.min_samples)?;
    let mst = mutual_reachability_mst(coords, &cores);
    let merges = single_linkage(coords.len(), &mst);
    Ok(condense(coords.len(), &merges, params.min_cluster_size))
}

fn birth_lambda(tree: &CondensedTree, c: usize) -> f64 {
    tree.edges
        .iter()
        .find(|e| e.child == c)
        .map_or(0.0, |e| e.lambda)
}

/// Cluster stabilities; infinite lambdas are capped at the largest finite one.
pub fn stabilities(tree: &CondensedTree) -> Vec<(usize, f64)> {
    let cap = tree
        .edges
        .iter()
        .map(|e| e.lambda)
        .filter(|l| l.is_finite())
        .fold(1.0f64, f64::max);
    tree.cluster_ids()
        .into_iter()
        .map(|c| {
            let birth = birth_lambda(tree, c).min(cap);
            let s = tree
                .edges
                .iter()
                .filter(|e| e.parent == c)
                .map(|e| (e.lambda.min(cap) - birth) * e.size as f64)
                .sum();
            (c, s)
        })
        .collect()
}

/// Selected condensed-tree clusters.
pub fn select_clusters(tree: &CondensedTree, params: &HdbscanParams) -> Vec<usize> {
    let root = tree.root();
    let ids = tree.cluster_ids();
    match params.selection {
        Selection::Leaf => {
            let leaves: Vec<usize> = ids
                .iter()
                .copied()
                .filter(|&c| tree.child_clusters(c).is_empty())
                .collect();
            if leaves == [root] && !params.allow_single_cluster {
                Vec::new()
            } else {
                leaves
            }
        }
        Selection::ExcessOfMass => {
            let stab: std::collections::BTreeMap<usize, f64> =
                stabilities(tree).into_iter().collect();
            let mut subtree = stab.clone();
            let mut selected: std::collections::BTreeSet<usize> = Default::default();
            // children carry larger ids than parents, so descending order is bottom-up
            for &c in ids.iter().rev() {
                if c == root && !params.allow_single_cluster {
                    continue;
                }
                let children = tree.child_clusters(c);
                let child_sum: f64 = children.iter().map(|k| subtree[k]).sum();
                if children.is_empty() || stab[&c] >= child_sum {
                    let mut stack = children;
                    while let Some(k) = stack.pop() {
                        selected.remove(&k);
                        stack.extend(tree.child_clusters(k));
                    }
                    selected.insert(c);
                    subtree.insert(c, stab[&c]);
                } else {
                    subtree.insert(c, child_sum);
                }
            }
            selected.into_iter().collect()
        }
    }
}

/// Per-point selected cluster: the nearest selected ancestor of the
/// cluster each point falls out of.
fn assign_points(tree: &CondensedTree, selected: &[usize]) -> Vec<Option<usize>> {
    let n = tree.n_points;
    let mut parent_of = std::collections::BTreeMap::new();
    for e in tree.edges.iter().filter(|e| e.child >= n) {
        parent_of.insert(e.child, e.parent);
    }
    let mut out = vec![None; n];
    for e in tree.edges.iter().filter(|e| e.child < n) {
        let mut c = Some(e.parent);
        while let Some(x) = c {
            if selected.contains(&x) {
                out[e.child] = Some(x);
                break;
            }
            c = parent_of.get(&x).copied();
        }
    }
    out
}

/// Runs the full clustering on low-dimensional coordinates.
pub fn hdbscan(coords: &[Vec<f64>], params: &HdbscanParams) -> Result<ClusterLabels> {
    params.validate()?;
    let n = coords.len();
    if n <= params.min_samples {
        return Err(Error::TooFewPoints {
            n,
            k: params.min_samples,
        });
    }
    if let Some(i) = coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { row: i });
    }
    let tree = condensed_tree(coords, params)?;
    let selected = select_clusters(&tree, params);
    let assign = assign_points(&tree, &selected);
    Ok(ClusterLabels::from_assignment(&assign, coords))
}

/// [`hdbscan`] plus embedding-space centroids from the aligned matrix.
pub fn hdbscan_with_embedding(
    coords: &[Vec<f64>],
    x: &EmbeddingMatrix,
    params: &HdbscanParams,
) -> Result<ClusterLabels> {
    let mut labels = hdbscan(coords, params)?;
    labels.attach_embedding_centroids(x)?;
    Ok(labels)
}
