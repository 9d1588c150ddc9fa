//! Ward agglomerative clustering with cannot-link constraints.
//!
//! The merge cost between clusters `c` and `c'` is
//! `m_c m_c' / (m_c + m_c') * |g_c - g_c'|^2` with masses `m` and mass
//! centers `g`. It becomes `+inf` as soon as one instance of `c` is
//! cannot-linked to one instance of `c'`, so merged clusters inherit the
//! constraints of both parents. When no finite cost remains the
//! agglomeration stops and leaves a forest of dendrograms, each of which is
//! cut independently at its best silhouette.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding_space::euclidean;
use crate::union_find::UnionFind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub vector: Vec<f64>,
    pub mass: f64,
}

impl Instance {
    pub fn new(vector: Vec<f64>) -> Self {
        Instance { vector, mass: 1.0 }
    }

    pub fn with_mass(vector: Vec<f64>, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "instance mass must be positive, got {mass}"
            )));
        }
        Ok(Instance { vector, mass })
    }
}

/// Unordered cannot-link pairs of instance indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::new();
        for (a, b) in pairs {
            set.insert(a, b)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, a: usize, b: usize) -> Result<bool> {
        if a == b {
            return Err(Error::InvalidConfig(format!(
                "instance {a} cannot be cannot-linked to itself"
            )));
        }
        Ok(self.pairs.insert((a.min(b), a.max(b))))
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// Whether any pair across the two member lists is cannot-linked.
    pub fn blocks(&self, left: &[usize], right: &[usize]) -> bool {
        !self.is_empty()
            && left
                .iter()
                .any(|&a| right.iter().any(|&b| self.contains(a, b)))
    }
}

/// A cluster as seen by the merge criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub mass: f64,
    pub center: Vec<f64>,
}

impl Cluster {
    pub fn from_members(instances: &[Instance], members: Vec<usize>) -> Self {
        let d = instances[members[0]].vector.len();
        let mass: f64 = members.iter().map(|&i| instances[i].mass).sum();
        let mut center = vec![0.0; d];
        for &i in &members {
            for (c, x) in center.iter_mut().zip(&instances[i].vector) {
                *c += instances[i].mass * x;
            }
        }
        center.iter_mut().for_each(|c| *c /= mass);
        Cluster {
            members,
            mass,
            center,
        }
    }
}

#[inline]
pub fn ward_cost(mass_a: f64, center_a: &[f64], mass_b: f64, center_b: &[f64]) -> f64 {
    let d2: f64 = center_a
        .iter()
        .zip(center_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    mass_a * mass_b / (mass_a + mass_b) * d2
}

/// Ward merge cost, `+inf` when the clusters are cannot-linked.
pub fn ward_delta(a: &Cluster, b: &Cluster, constraints: &ConstraintSet) -> f64 {
    if constraints.blocks(&a.members, &b.members) {
        f64::INFINITY
    } else {
        ward_cost(a.mass, &a.center, b.mass, &b.center)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub children: Option<(usize, usize)>,
    pub height: f64,
    pub mass: f64,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller node id.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Id of the created node.
    pub node: usize,
}

/// Result of agglomeration: leaves `0..n`, internal node `n + k` created by merge `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramForest {
    pub num_leaves: usize,
    pub nodes: Vec<Node>,
    pub merges: Vec<Merge>,
}

/// One dendrogram of a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub root: usize,
    pub leaves: Vec<usize>,
    /// Indices into [`DendrogramForest::merges`], in merge order.
    pub merges: Vec<usize>,
}

impl DendrogramForest {
    pub fn roots(&self) -> Vec<usize> {
        let mut has_parent = vec![false; self.nodes.len()];
        for m in &self.merges {
            has_parent[m.left] = true;
            has_parent[m.right] = true;
        }
        let mut roots: Vec<usize> = (0..self.nodes.len()).filter(|&i| !has_parent[i]).collect();
        roots.sort_by_key(|&r| self.leaves_under(r)[0]);
        roots
    }

    pub fn num_trees(&self) -> usize {
        self.num_leaves - self.merges.len()
    }

    pub fn leaves_under(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            match self.nodes[n].children {
                Some((a, b)) => {
                    stack.push(a);
                    stack.push(b);
                }
                None => out.push(n),
            }
        }
        out.sort_unstable();
        out
    }

    /// Trees ordered by their smallest leaf.
    pub fn trees(&self) -> Vec<Tree> {
        let mut uf = UnionFind::new(self.num_leaves);
        for m in &self.merges {
            let (a, b) = (self.leaves_under(m.left)[0], self.leaves_under(m.right)[0]);
            uf.union(a, b);
        }
        let comp = uf.components();
        let num = comp.iter().copied().max().map_or(0, |c| c + 1);
        let mut trees: Vec<Tree> = (0..num)
            .map(|_| Tree {
                root: usize::MAX,
                leaves: Vec::new(),
                merges: Vec::new(),
            })
            .collect();
        for (leaf, &c) in comp.iter().enumerate() {
            trees[c].leaves.push(leaf);
            trees[c].root = leaf;
        }
        for (k, m) in self.merges.iter().enumerate() {
            let c = comp[self.leaves_under(m.left)[0]];
            trees[c].merges.push(k);
            trees[c].root = m.node;
        }
        trees
    }

    /// Nested-record view for plotting.
    pub fn export(&self) -> Vec<ExportNode> {
        self.trees()
            .iter()
            .map(|t| self.export_node(t.root))
            .collect()
    }

    fn export_node(&self, id: usize) -> ExportNode {
        let node = &self.nodes[id];
        ExportNode {
            node_id: id,
            height: node.height,
            member_ids: self.leaves_under(id),
            children: node
                .children
                .map(|(a, b)| vec![self.export_node(a), self.export_node(b)])
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub node_id: usize,
    pub children: Vec<ExportNode>,
    pub height: f64,
    pub member_ids: Vec<usize>,
}

/// Greedy Ward agglomeration under cannot-link constraints.
///
/// At each step the pair with the smallest finite cost is merged, ties going
/// to the lexicographically smallest `(min id, max id)` node pair. Stops when
/// every remaining pair is blocked, so the result may hold several trees.
pub fn agglomerate(
    instances: &[Instance],
    constraints: &ConstraintSet,
) -> Result<DendrogramForest> {
    let n = instances.len();
    if n == 0 {
        return Err(Error::EmptyInput("no instances to cluster"));
    }
    let d = instances[0].vector.len();
    for inst in instances {
        if inst.vector.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: inst.vector.len(),
            });
        }
        if inst.vector.iter().any(|x| !x.is_finite()) || !(inst.mass > 0.0) {
            return Err(Error::InvalidConfig(
                "instances need finite vectors and positive mass".into(),
            ));
        }
    }
    for (a, b) in constraints.iter() {
        if b >= n {
            return Err(Error::InvalidConfig(format!(
                "constraint ({a}, {b}) refers to a missing instance"
            )));
        }
    }

    let mut nodes: Vec<Node> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| Node {
            id: i,
            children: None,
            height: 0.0,
            mass: inst.mass,
            center: inst.vector.clone(),
        })
        .collect();
    let mut merges = Vec::new();

    // Slot-indexed state; a merged cluster reuses the slot of its left child.
    let mut slot_node: Vec<usize> = (0..n).collect();
    let mut active: Vec<bool> = vec![true; n];
    let mut blocked: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for (a, b) in constraints.iter() {
        blocked[a].insert(b);
        blocked[b].insert(a);
    }
    let mut cost = vec![f64::INFINITY; n * n];
    for a in 0..n {
        for b in a + 1..n {
            if !blocked[a].contains(&b) {
                let c = ward_cost(
                    nodes[a].mass,
                    &nodes[a].center,
                    nodes[b].mass,
                    &nodes[b].center,
                );
                cost[a * n + b] = c;
                cost[b * n + a] = c;
            }
        }
    }

    // Best partner per slot among active slots holding a larger node id.
    let best_partner = |s: usize, slot_node: &[usize], active: &[bool], cost: &[f64]| {
        let mut best: Option<(f64, usize, usize)> = None;
        for t in 0..n {
            if !active[t] || slot_node[t] <= slot_node[s] {
                continue;
            }
            let c = cost[s * n + t];
            if c.is_finite() && best.is_none_or(|(bc, bid, _)| (c, slot_node[t]) < (bc, bid)) {
                best = Some((c, slot_node[t], t));
            }
        }
        best
    };
    let mut nn: Vec<Option<(f64, usize, usize)>> = (0..n)
        .map(|s| best_partner(s, &slot_node, &active, &cost))
        .collect();

    loop {
        let mut pick: Option<(f64, usize, usize, usize, usize)> = None;
        for s in 0..n {
            if !active[s] {
                continue;
            }
            if let Some((c, other_id, t)) = nn[s] {
                let key = (c, slot_node[s], other_id);
                if pick.is_none_or(|(pc, pa, pb, _, _)| key < (pc, pa, pb)) {
                    pick = Some((c, slot_node[s], other_id, s, t));
                }
            }
        }
        let Some((height, left, right, sa, sb)) = pick else {
            break;
        };

        let new_id = nodes.len();
        let (ma, mb) = (nodes[left].mass, nodes[right].mass);
        let mass = ma + mb;
        let center: Vec<f64> = nodes[left]
            .center
            .iter()
            .zip(&nodes[right].center)
            .map(|(x, y)| (ma * x + mb * y) / mass)
            .collect();
        nodes.push(Node {
            id: new_id,
            children: Some((left, right)),
            height,
            mass,
            center,
        });
        merges.push(Merge {
            left,
            right,
            height,
            node: new_id,
        });

        active[sb] = false;
        slot_node[sa] = new_id;
        nn[sb] = None;
        nn[sa] = None;

        let merged_block: HashSet<usize> = blocked[sa]
            .union(&blocked[sb])
            .copied()
            .filter(|&s| s != sa && s != sb)
            .collect();
        for &x in &merged_block {
            blocked[x].remove(&sb);
            blocked[x].insert(sa);
        }
        blocked[sa] = merged_block;
        blocked[sb].clear();

        for x in 0..n {
            if !active[x] || x == sa {
                continue;
            }
            let c = if blocked[sa].contains(&x) {
                f64::INFINITY
            } else {
                let (node_x, node_new) = (&nodes[slot_node[x]], &nodes[new_id]);
                ward_cost(node_x.mass, &node_x.center, node_new.mass, &node_new.center)
            };
            cost[sa * n + x] = c;
            cost[x * n + sa] = c;
        }
        for s in 0..n {
            if !active[s] || s == sa {
                continue;
            }
            let stale = matches!(nn[s], Some((_, id, _)) if id == left || id == right);
            if stale {
                nn[s] = best_partner(s, &slot_node, &active, &cost);
            } else {
                let c = cost[s * n + sa];
                if c.is_finite() && nn[s].is_none_or(|(bc, bid, _)| (c, new_id) < (bc, bid)) {
                    nn[s] = Some((c, new_id, sa));
                }
            }
        }
    }

    Ok(DendrogramForest {
        num_leaves: n,
        nodes,
        merges,
    })
}

/// Dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn euclidean(vectors: &[Vec<f64>]) -> Self {
        Self::from_fn(vectors.len(), |i, j| euclidean(&vectors[i], &vectors[j]))
    }

    pub fn of_instances(instances: &[Instance]) -> Self {
        Self::from_fn(instances.len(), |i, j| {
            euclidean(&instances[i].vector, &instances[j].vector)
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self::from_fn(indices.len(), |i, j| self.get(indices[i], indices[j]))
    }
}

/// Mean silhouette of a labeling. Singleton clusters score 0 and a single
/// cluster scores 0 overall.
pub fn silhouette_score(labels: &[usize], distances: &DistanceMatrix) -> Result<f64> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::TooFewInstances(n));
    }
    if distances.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: distances.len(),
        });
    }
    let k = labels.iter().copied().max().unwrap() + 1;
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += distances.get(i, j);
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Flat clustering: contiguous cluster ids numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|r| {
                let next = remap.len();
                *remap.entry(*r).or_insert(next)
            })
            .collect();
        Partition { labels }
    }

    pub fn num_clusters(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Whether some cluster holds both ends of a cannot-link pair.
    pub fn violates(&self, constraints: &ConstraintSet) -> bool {
        constraints
            .iter()
            .any(|(a, b)| self.labels[a] == self.labels[b])
    }
}

/// Per-tree choice made by [`cut_forest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCut {
    pub root: usize,
    pub leaves: Vec<usize>,
    pub num_clusters: usize,
    pub silhouette: f64,
}

/// Cuts every tree at the nested partition with the highest silhouette
/// (ties go to fewer clusters) and unions the results.
pub fn cut_forest(forest: &DendrogramForest, distances: &DistanceMatrix) -> Result<Partition> {
    cut_forest_detailed(forest, distances).map(|(p, _)| p)
}

pub fn cut_forest_detailed(
    forest: &DendrogramForest,
    distances: &DistanceMatrix,
) -> Result<(Partition, Vec<TreeCut>)> {
    if distances.len() != forest.num_leaves {
        return Err(Error::DimensionMismatch {
            expected: forest.num_leaves,
            got: distances.len(),
        });
    }
    let mut raw = vec![usize::MAX; forest.num_leaves];
    let mut cuts = Vec::new();
    let mut next_cluster = 0;
    for tree in forest.trees() {
        let m = tree.leaves.len();
        if m == 1 {
            raw[tree.leaves[0]] = next_cluster;
            next_cluster += 1;
            cuts.push(TreeCut {
                root: tree.root,
                leaves: tree.leaves.clone(),
                num_clusters: 1,
                silhouette: 0.0,
            });
            continue;
        }
        let local: std::collections::HashMap<usize, usize> = tree
            .leaves
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i))
            .collect();
        let sub = distances.restrict(&tree.leaves);
        let first_leaf = |node: usize| local[&forest.leaves_under(node)[0]];

        let mut uf = UnionFind::new(m);
        let mut best_labels = uf.components();
        let mut best_score = silhouette_score(&best_labels, &sub)?;
        let mut best_k = m;
        for (step, &mk) in tree.merges.iter().enumerate() {
            let merge = forest.merges[mk];
            uf.union(first_leaf(merge.left), first_leaf(merge.right));
            let labels = uf.components();
            let score = silhouette_score(&labels, &sub)?;
            if score >= best_score {
                best_score = score;
                best_labels = labels;
                best_k = m - step - 1;
            }
        }
        for (i, &leaf) in tree.leaves.iter().enumerate() {
            raw[leaf] = next_cluster + best_labels[i];
        }
        next_cluster += best_k;
        cuts.push(TreeCut {
            root: tree.root,
            leaves: tree.leaves.clone(),
            num_clusters: best_k,
            silhouette: best_score,
        });
    }
    Ok((Partition::from_labels(&raw), cuts))
}
