//! HDBSCAN hierarchy and GLOSH outlier scores.
//!
//! Pipeline: core distances, mutual-reachability graph, minimum spanning
//! tree, single-linkage hierarchy, condensed tree, excess-of-mass cluster
//! selection and GLOSH scores.
//!
//! Edges of equal weight are merged in one step, so a level where several
//! components join becomes a single multi-way node. The condensed tree is
//! then a function of the distances alone and does not depend on point order.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("points have inconsistent dimensions")]
    RaggedPoints,
    #[error("min_cluster_size must be at least 2")]
    MinClusterSize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterParams {
    pub min_samples: usize,
    pub min_cluster_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { min_samples: 1, min_cluster_size: 2 }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(points: &[Vec<f64>], min_samples: usize) -> Result<Vec<f64>, ClusterError> {
    let n = points.len();
    if n < min_samples + 1 {
        return Err(ClusterError::TooFewPoints { needed: min_samples + 1, found: n });
    }
    if points.iter().any(|p| p.len() != points[0].len()) {
        return Err(ClusterError::RaggedPoints);
    }
    if min_samples == 0 {
        return Ok(vec![0.0; n]);
    }
    Ok((0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| euclidean(&points[i], &points[j])).collect();
            d.sort_by(f64::total_cmp);
            d[min_samples - 1]
        })
        .collect())
}

/// Dense symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// `mrd(a, b) = max(core(a), core(b), d(a, b))`, zero on the diagonal.
pub fn mutual_reachability(points: &[Vec<f64>], core: &[f64]) -> DistanceMatrix {
    let n = points.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&points[i], &points[j]).max(core[i]).max(core[j]);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { n, values }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Kruskal over the complete graph; candidate edges are ordered by
/// `(weight, a, b)` with `a < b`, which fixes the tree under ties.
pub fn build_mst(mrd: &DistanceMatrix) -> Result<Vec<MstEdge>, ClusterError> {
    let n = mrd.n;
    if n < 2 {
        return Err(ClusterError::TooFewPoints { needed: 2, found: n });
    }
    let mut edges: Vec<MstEdge> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .map(|(a, b)| MstEdge { a, b, weight: mrd.get(a, b) })
        .collect();
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    let mut sets = DisjointSet::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    for e in edges {
        if sets.union(e.a, e.b) {
            tree.push(e);
            if tree.len() == n - 1 {
                break;
            }
        }
    }
    Ok(tree)
}

/// One edge of the condensed tree. Ids below `n` are points; `n` is the
/// root cluster and later ids are clusters in creation order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CondensedNode {
    pub parent: usize,
    pub child: usize,
    /// `1 / distance` at which the child leaves `parent`; infinite at distance 0.
    pub lambda: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    pub n_points: usize,
    pub condensed: Vec<CondensedNode>,
    /// Cluster label per point, `-1` for noise.
    pub labels: Vec<i64>,
    pub glosh: Vec<f64>,
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// `a - b` with `inf - inf = 0`.
fn excess(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

/// Single-linkage node: merges `children` at `distance`.
struct LinkNode {
    children: Vec<usize>,
    distance: f64,
    size: usize,
    /// Smallest point index below, for a canonical child order.
    min_point: usize,
}

struct Linkage {
    n: usize,
    nodes: Vec<LinkNode>,
}

impl Linkage {
    fn size(&self, id: usize) -> usize {
        if id < self.n {
            1
        } else {
            self.nodes[id - self.n].size
        }
    }

    fn min_point(&self, id: usize) -> usize {
        if id < self.n {
            id
        } else {
            self.nodes[id - self.n].min_point
        }
    }

    fn points(&self, id: usize, out: &mut Vec<usize>) {
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            if v < self.n {
                out.push(v);
            } else {
                stack.extend(self.nodes[v - self.n].children.iter().copied());
            }
        }
    }

    fn root(&self) -> usize {
        self.n + self.nodes.len() - 1
    }
}

fn single_linkage(n: usize, mst: &[MstEdge]) -> Linkage {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    let mut sets = DisjointSet::new(n);
    // Linkage node currently representing each disjoint-set root.
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut linkage = Linkage { n, nodes: Vec::new() };

    let mut start = 0;
    while start < edges.len() {
        let weight = edges[start].weight;
        let mut end = start;
        while end < edges.len() && edges[end].weight == weight {
            end += 1;
        }
        // Components touched by this level, before merging.
        let mut before: Vec<(usize, usize)> = Vec::new();
        for e in &edges[start..end] {
            for p in [e.a, e.b] {
                let r = sets.find(p);
                before.push((r, node_of[r]));
            }
        }
        before.sort_unstable();
        before.dedup();
        for e in &edges[start..end] {
            sets.union(e.a, e.b);
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (old_root, node) in before {
            let root = sets.find(old_root);
            match groups.iter_mut().find(|(r, _)| *r == root) {
                Some((_, members)) => members.push(node),
                None => groups.push((root, vec![node])),
            }
        }
        for (root, mut children) in groups {
            children.sort_by_key(|&c| linkage.min_point(c));
            let size = children.iter().map(|&c| linkage.size(c)).sum();
            let min_point = linkage.min_point(children[0]);
            linkage.nodes.push(LinkNode { children, distance: weight, size, min_point });
            node_of[root] = n + linkage.nodes.len() - 1;
        }
        start = end;
    }
    linkage
}

fn condense(linkage: &Linkage, min_cluster_size: usize) -> Vec<CondensedNode> {
    let n = linkage.n;
    let mut out = Vec::new();
    let mut next_cluster = n + 1;
    let mut stack = vec![(linkage.root(), n)];
    let mut scratch = Vec::new();
    while let Some((node, cluster)) = stack.pop() {
        let link = &linkage.nodes[node - n];
        let lambda = lambda_of(link.distance);
        let big: Vec<usize> = link.children.iter().copied().filter(|&c| linkage.size(c) >= min_cluster_size).collect();
        for &child in &link.children {
            if big.contains(&child) {
                continue;
            }
            scratch.clear();
            linkage.points(child, &mut scratch);
            scratch.sort_unstable();
            out.extend(scratch.iter().map(|&p| CondensedNode { parent: cluster, child: p, lambda, size: 1 }));
        }
        match big.len() {
            0 => {}
            1 => stack.push((big[0], cluster)),
            _ => {
                // Pushed in reverse so clusters are numbered in child order.
                let ids: Vec<usize> = big
                    .iter()
                    .map(|_| {
                        next_cluster += 1;
                        next_cluster - 1
                    })
                    .collect();
                for (&child, &id) in big.iter().zip(&ids) {
                    out.push(CondensedNode { parent: cluster, child: id, lambda, size: linkage.size(child) });
                }
                for (&child, &id) in big.iter().zip(&ids).rev() {
                    stack.push((child, id));
                }
            }
        }
    }
    out
}

/// Excess-of-mass selection with the root excluded; returns selected ids.
fn select_clusters(condensed: &[CondensedNode], n: usize) -> Vec<usize> {
    let cluster_count = condensed.iter().map(|c| c.parent.max(c.child)).max().map_or(1, |m| m + 1 - n).max(1);
    let mut birth = vec![0.0; cluster_count];
    let mut children = vec![Vec::new(); cluster_count];
    for c in condensed.iter().filter(|c| c.child >= n) {
        birth[c.child - n] = c.lambda;
        children[c.parent - n].push(c.child - n);
    }
    let mut stability = vec![0.0; cluster_count];
    for c in condensed {
        let k = c.parent - n;
        stability[k] += excess(c.lambda, birth[k]) * c.size as f64;
    }
    let mut selected = vec![false; cluster_count];
    // Children always have larger ids than their parent.
    for k in (1..cluster_count).rev() {
        let subtree: f64 = children[k].iter().map(|&c| stability[c]).sum();
        if subtree > stability[k] {
            stability[k] = subtree;
        } else {
            selected[k] = true;
            let mut stack = children[k].clone();
            while let Some(c) = stack.pop() {
                selected[c] = false;
                stack.extend(children[c].iter().copied());
            }
        }
    }
    (1..cluster_count).filter(|&k| selected[k]).map(|k| k + n).collect()
}

/// GLOSH: `1 - lambda(x) / lambda_max`, with `lambda_max` the largest
/// fall-out lambda in the subtree of the cluster `x` leaves from.
///
/// A point leaving at infinite lambda scores 0; a finite point under an
/// infinite `lambda_max` scores 1.
fn glosh_scores(condensed: &[CondensedNode], n: usize) -> Vec<f64> {
    let cluster_count = condensed.iter().map(|c| c.parent.max(c.child)).max().map_or(1, |m| m + 1 - n).max(1);
    let mut max_lambda = vec![0.0f64; cluster_count];
    let mut parent_of = vec![usize::MAX; cluster_count];
    for c in condensed {
        if c.child < n {
            let k = c.parent - n;
            max_lambda[k] = max_lambda[k].max(c.lambda);
        } else {
            parent_of[c.child - n] = c.parent - n;
        }
    }
    for k in (1..cluster_count).rev() {
        let p = parent_of[k];
        max_lambda[p] = max_lambda[p].max(max_lambda[k]);
    }
    let mut scores = vec![0.0; n];
    for c in condensed.iter().filter(|c| c.child < n) {
        let lambda_max = max_lambda[c.parent - n];
        scores[c.child] = if c.lambda.is_infinite() || lambda_max == 0.0 {
            0.0
        } else if lambda_max.is_infinite() {
            1.0
        } else {
            1.0 - c.lambda / lambda_max
        };
    }
    scores
}

/// Builds the condensed hierarchy from an MST over `n` points and returns
/// labels and GLOSH scores.
pub fn condense_and_score(n: usize, mst: &[MstEdge], min_cluster_size: usize) -> Result<Hierarchy, ClusterError> {
    if min_cluster_size < 2 {
        return Err(ClusterError::MinClusterSize);
    }
    if n < 2 || mst.len() != n - 1 {
        return Err(ClusterError::TooFewPoints { needed: 2, found: n });
    }
    let linkage = single_linkage(n, mst);
    let condensed = condense(&linkage, min_cluster_size);
    let selected = select_clusters(&condensed, n);

    let mut labels = vec![-1i64; n];
    let mut cluster_parent = std::collections::HashMap::new();
    for c in condensed.iter().filter(|c| c.child >= n) {
        cluster_parent.insert(c.child, c.parent);
    }
    // Selected clusters numbered by their smallest member point.
    let mut order: Vec<(usize, usize)> = Vec::new();
    for c in condensed.iter().filter(|c| c.child < n) {
        let mut k = c.parent;
        loop {
            if selected.contains(&k) {
                labels[c.child] = k as i64;
                break;
            }
            match cluster_parent.get(&k) {
                Some(&p) => k = p,
                None => break,
            }
        }
    }
    for &k in &selected {
        let first = (0..n).find(|&p| labels[p] == k as i64);
        if let Some(first) = first {
            order.push((first, k));
        }
    }
    order.sort_unstable();
    let renumber: std::collections::HashMap<i64, i64> =
        order.iter().enumerate().map(|(i, &(_, k))| (k as i64, i as i64)).collect();
    for l in labels.iter_mut().filter(|l| **l >= 0) {
        *l = renumber[l];
    }

    let glosh = glosh_scores(&condensed, n);
    Ok(Hierarchy { n_points: n, condensed, labels, glosh })
}

/// Full pipeline from raw points.
pub fn hdbscan(points: &[Vec<f64>], params: ClusterParams) -> Result<Hierarchy, ClusterError> {
    let core = core_distances(points, params.min_samples)?;
    let mrd = mutual_reachability(points, &core);
    let mst = build_mst(&mrd)?;
    condense_and_score(points.len(), &mst, params.min_cluster_size)
}
