//! Sparse undirected graphs, node partitions and partition-driven coarsening.
//!
//! Graphs are stored as compressed adjacency lists with every neighbor list
//! sorted ascending. Unweighted graphs are simple (no loops, no multi-edges).
//! Weighted graphs may carry self-loops; a self-loop of weight `w` appears
//! once in its node's list and contributes `2w` to that node's degree, so
//! `A_ii = 2w` in matrix terms and `sum(degrees) == 2 * total_weight()`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    weights: Option<Vec<f64>>,
}

/// What `from_edge_list` silently discarded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeListStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    /// Builds a simple graph from unordered pairs. Both orientations of an
    /// edge collapse to one edge; self-loops are dropped.
    pub fn from_edge_list(pairs: &[(usize, usize)], n_hint: Option<usize>) -> Result<Graph> {
        Self::from_edge_list_counted(pairs, n_hint).map(|(g, _)| g)
    }

    pub fn from_edge_list_counted(
        pairs: &[(usize, usize)],
        n_hint: Option<usize>,
    ) -> Result<(Graph, EdgeListStats)> {
        let n = resolve_node_count(pairs.iter().map(|&(u, v)| u.max(v)), n_hint)?;
        let mut stats = EdgeListStats::default();
        let mut directed = Vec::with_capacity(pairs.len() * 2);
        for &(u, v) in pairs {
            if u == v {
                stats.self_loops += 1;
                continue;
            }
            directed.push((u as NodeId, v as NodeId));
            directed.push((v as NodeId, u as NodeId));
        }
        directed.sort_unstable();
        directed.dedup();
        let kept = directed.len() / 2;
        stats.duplicates = pairs.len() - stats.self_loops - kept;

        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &directed {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = directed.into_iter().map(|(_, v)| v).collect();
        Ok((
            Graph {
                offsets,
                targets,
                weights: None,
            },
            stats,
        ))
    }

    /// Builds a weighted graph. Repeated pairs have their weights summed;
    /// self-loops are kept. Zero-weight entries are dropped.
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph> {
        let mut directed = Vec::with_capacity(edges.len() * 2);
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::input(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::input(format!("edge ({u}, {v}) has weight {w}")));
            }
            if w == 0.0 {
                continue;
            }
            directed.push((u as NodeId, v as NodeId, w));
            if u != v {
                directed.push((v as NodeId, u as NodeId, w));
            }
        }
        directed.sort_unstable_by_key(|&(u, v, _)| (u, v));

        let mut offsets = vec![0usize; n + 1];
        let mut targets: Vec<NodeId> = Vec::with_capacity(directed.len());
        let mut weights: Vec<f64> = Vec::with_capacity(directed.len());
        let mut last: Option<(NodeId, NodeId)> = None;
        for (u, v, w) in directed {
            if last == Some((u, v)) {
                *weights.last_mut().unwrap() += w;
                continue;
            }
            last = Some((u, v));
            offsets[u as usize + 1] += 1;
            targets.push(v);
            weights.push(w);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Ok(Graph {
            offsets,
            targets,
            weights: Some(weights),
        })
    }

    /// Assembles a graph from CSR arrays that are already sorted and symmetric.
    pub(crate) fn from_csr_unchecked(
        offsets: Vec<usize>,
        targets: Vec<NodeId>,
        weights: Option<Vec<f64>>,
    ) -> Graph {
        debug_assert_eq!(*offsets.last().unwrap(), targets.len());
        Graph {
            offsets,
            targets,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Number of distinct edges, self-loops included.
    pub fn num_edges(&self) -> usize {
        let loops = self.num_self_loops();
        (self.targets.len() - loops) / 2 + loops
    }

    pub fn num_self_loops(&self) -> usize {
        if self.weights.is_none() {
            return 0;
        }
        (0..self.n())
            .filter(|&i| self.neighbors(i).binary_search(&(i as NodeId)).is_ok())
            .count()
    }

    pub fn neighbors(&self, i: usize) -> &[NodeId] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Weights aligned with `neighbors(i)`, or `None` for unweighted graphs.
    pub fn neighbor_weights(&self, i: usize) -> Option<&[f64]> {
        self.weights
            .as_ref()
            .map(|w| &w[self.offsets[i]..self.offsets[i + 1]])
    }

    /// Iterates `(neighbor, weight)` for node `i`.
    pub fn weighted_neighbors(&self, i: usize) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        let w = self.weights.as_ref().map(|w| &w[range.clone()]);
        self.targets[range]
            .iter()
            .enumerate()
            .map(move |(k, &j)| (j, w.map_or(1.0, |w| w[k])))
    }

    /// Weight of edge `(i, j)`, 0 when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.neighbors(i).binary_search(&(j as NodeId)) {
            Ok(pos) => self
                .weights
                .as_ref()
                .map_or(1.0, |w| w[self.offsets[i] + pos]),
            Err(_) => 0.0,
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as NodeId)).is_ok()
    }

    pub fn self_loop(&self, i: usize) -> f64 {
        if self.weights.is_none() {
            0.0
        } else {
            self.weight(i, i)
        }
    }

    /// Each edge once as `(i, j, w)` with `i <= j`, in adjacency order. This
    /// is the canonical edge order used for per-edge scores.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.weighted_neighbors(i)
                .filter(move |&(j, _)| j as usize >= i)
                .map(move |(j, w)| (i as NodeId, j, w))
        })
    }

    /// Canonical edge list without weights.
    pub fn edge_pairs(&self) -> Vec<(NodeId, NodeId)> {
        self.edges().map(|(i, j, _)| (i, j)).collect()
    }

    /// Sum of edge weights, each edge (and self-loop) counted once.
    pub fn total_weight(&self) -> f64 {
        match &self.weights {
            None => (self.targets.len() / 2) as f64,
            Some(_) => self.edges().map(|(_, _, w)| w).sum(),
        }
    }

    /// Weighted degrees; self-loops count twice.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                self.weighted_neighbors(i)
                    .map(|(j, w)| if j as usize == i { 2.0 * w } else { w })
                    .sum()
            })
            .collect()
    }

    /// Subgraph induced by `nodes` (strictly ascending ids). Local id `t`
    /// corresponds to `nodes[t]`.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> Result<Graph> {
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("induced subgraph nodes must be strictly ascending"));
        }
        if nodes.last().is_some_and(|&v| v as usize >= self.n()) {
            return Err(Error::input("induced subgraph node out of range"));
        }
        let mut local = vec![NodeId::MAX; self.n()];
        for (t, &v) in nodes.iter().enumerate() {
            local[v as usize] = t as NodeId;
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut weights = self.weights.as_ref().map(|_| Vec::new());
        for &v in nodes {
            for (j, w) in self.weighted_neighbors(v as usize) {
                let lj = local[j as usize];
                if lj != NodeId::MAX {
                    targets.push(lj);
                    if let Some(ws) = weights.as_mut() {
                        ws.push(w);
                    }
                }
            }
            offsets.push(targets.len());
        }
        Ok(Graph {
            offsets,
            targets,
            weights,
        })
    }
}

fn resolve_node_count(ids: impl Iterator<Item = usize>, n_hint: Option<usize>) -> Result<usize> {
    let max_id = ids.max();
    match (max_id, n_hint) {
        (None, None) => Err(Error::input("empty edge list and no node count given")),
        (None, Some(n)) => Ok(n),
        (Some(m), None) => Ok(m + 1),
        (Some(m), Some(n)) if n > m => Ok(n),
        (Some(m), Some(n)) => Err(Error::input(format!(
            "node count {n} does not cover node id {m}"
        ))),
    }
}

/// Disjoint blocks covering `0..n`. Every id in `0..k` is occupied.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    assign: Vec<u32>,
    k: usize,
}

impl Partition {
    pub fn new(assign: Vec<u32>, k: usize) -> Result<Partition> {
        if k == 0 && !assign.is_empty() {
            return Err(Error::input("partition with nodes must have k >= 1"));
        }
        let mut seen = vec![false; k];
        for (v, &b) in assign.iter().enumerate() {
            if b as usize >= k {
                return Err(Error::input(format!("node {v} in block {b} >= k = {k}")));
            }
            seen[b as usize] = true;
        }
        if let Some(b) = seen.iter().position(|&s| !s) {
            return Err(Error::input(format!("block {b} is empty")));
        }
        Ok(Partition { assign, k })
    }

    /// Compacts arbitrary labels to `0..k`, preserving their sorted order.
    pub fn from_labels<L: Copy + Ord>(labels: &[L]) -> Partition {
        let mut uniq: Vec<L> = labels.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        let assign = labels
            .iter()
            .map(|l| uniq.binary_search(l).unwrap() as u32)
            .collect();
        Partition {
            assign,
            k: uniq.len(),
        }
    }

    /// Compacts labels to `0..k` in order of first appearance.
    pub fn from_labels_first_seen(labels: &[u32]) -> Partition {
        let cap = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut map = vec![u32::MAX; cap];
        let mut k = 0u32;
        let assign = labels
            .iter()
            .map(|&l| {
                let slot = &mut map[l as usize];
                if *slot == u32::MAX {
                    *slot = k;
                    k += 1;
                }
                *slot
            })
            .collect();
        Partition {
            assign,
            k: k as usize,
        }
    }

    pub fn singletons(n: usize) -> Partition {
        Partition {
            assign: (0..n as u32).collect(),
            k: n,
        }
    }

    pub fn single_block(n: usize) -> Partition {
        Partition {
            assign: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    pub fn n(&self) -> usize {
        self.assign.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assign(&self) -> &[u32] {
        &self.assign
    }

    pub fn block(&self, v: usize) -> u32 {
        self.assign[v]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &b in &self.assign {
            sizes[b as usize] += 1;
        }
        sizes
    }

    pub fn members(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.k];
        for (v, &b) in self.assign.iter().enumerate() {
            out[b as usize].push(v as NodeId);
        }
        out
    }

    /// Same blocks, relabeled in order of first appearance.
    pub fn normalized(&self) -> Partition {
        Partition::from_labels_first_seen(&self.assign)
    }

    /// True when every block of `self` lies inside a single block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.n() != coarser.n() {
            return false;
        }
        let mut image = vec![u32::MAX; self.k];
        for (&b, &c) in self.assign.iter().zip(&coarser.assign) {
            let slot = &mut image[b as usize];
            if *slot == u32::MAX {
                *slot = c;
            } else if *slot != c {
                return false;
            }
        }
        true
    }

    /// Restriction to `nodes`, with surviving block ids compacted in
    /// ascending order.
    pub fn restrict(&self, nodes: &[NodeId]) -> Partition {
        let labels: Vec<u32> = nodes.iter().map(|&v| self.assign[v as usize]).collect();
        Partition::from_labels(&labels)
    }
}

/// Connected components by breadth-first search from node 0 upward; block
/// ids follow first-visit order.
pub fn connected_components(g: &Graph) -> Partition {
    let n = g.n();
    let mut assign = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    let mut k = 0u32;
    for root in 0..n {
        if assign[root] != u32::MAX {
            continue;
        }
        assign[root] = k;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                if assign[v as usize] == u32::MAX {
                    assign[v as usize] = k;
                    queue.push_back(v as usize);
                }
            }
        }
        k += 1;
    }
    Partition {
        assign,
        k: k as usize,
    }
}

/// Components of the graph on `0..n` spanned by `edges`. Labels match what
/// `connected_components` would produce on that edge set (ordered by each
/// component's smallest node).
pub fn components_of_edges(
    n: usize,
    edges: impl IntoIterator<Item = (NodeId, NodeId)>,
) -> Partition {
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            let up = parent[parent[x as usize] as usize];
            parent[x as usize] = up;
            x = up;
        }
        x
    }
    for (u, v) in edges {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            // smaller id stays root so roots are component minima
            let (lo, hi) = if ru < rv { (ru, rv) } else { (rv, ru) };
            parent[hi as usize] = lo;
        }
    }
    let roots: Vec<u32> = (0..n as u32).map(|v| find(&mut parent, v)).collect();
    Partition::from_labels_first_seen(&roots)
}

/// Weighted coarse graph with one super-node per block.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperGraph {
    pub coarse: Graph,
    /// Fine node -> super-node.
    pub block_of: Vec<u32>,
}

impl SuperGraph {
    pub fn n_super(&self) -> usize {
        self.coarse.n()
    }

    /// Total weight of edges inside block `r`.
    pub fn self_loop(&self, r: usize) -> f64 {
        self.coarse.self_loop(r)
    }

    /// Total weight of edges between blocks `r != s`.
    pub fn weight(&self, r: usize, s: usize) -> f64 {
        self.coarse.weight(r, s)
    }
}

/// Merges each block of `p` into a super-node. Between-block edge weights
/// are summed onto super-edges; within-block weight becomes a self-loop, so
/// modularity of any coarse partition equals that of its projection.
pub fn coarsen(g: &Graph, p: &Partition) -> Result<SuperGraph> {
    if p.n() != g.n() {
        return Err(Error::input(format!(
            "partition covers {} nodes, graph has {}",
            p.n(),
            g.n()
        )));
    }
    let k = p.k();
    let members = p.members();
    let mut acc = vec![0.0f64; k];
    let mut touched: Vec<u32> = Vec::new();
    let mut offsets = Vec::with_capacity(k + 1);
    offsets.push(0usize);
    let mut targets: Vec<NodeId> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();

    for (r, block) in members.iter().enumerate() {
        let mut internal = 0.0;
        let mut loops = 0.0;
        for &u in block {
            for (v, w) in g.weighted_neighbors(u as usize) {
                let s = p.block(v as usize);
                if s as usize == r {
                    if v == u {
                        loops += w;
                    } else {
                        internal += w;
                    }
                    continue;
                }
                if acc[s as usize] == 0.0 {
                    touched.push(s);
                }
                acc[s as usize] += w;
            }
        }
        let self_w = internal / 2.0 + loops;
        if self_w > 0.0 {
            touched.push(r as u32);
            acc[r] = self_w;
        }
        touched.sort_unstable();
        for &s in &touched {
            targets.push(s);
            weights.push(acc[s as usize]);
            acc[s as usize] = 0.0;
        }
        touched.clear();
        offsets.push(targets.len());
    }
    Ok(SuperGraph {
        coarse: Graph::from_csr_unchecked(offsets, targets, Some(weights)),
        block_of: p.assign().to_vec(),
    })
}

/// Lifts a partition of super-nodes back to the fine nodes.
pub fn project_partition(sp: &SuperGraph, coarse_p: &Partition) -> Result<Partition> {
    if coarse_p.n() != sp.n_super() {
        return Err(Error::input(format!(
            "coarse partition covers {} nodes, super-graph has {}",
            coarse_p.n(),
            sp.n_super()
        )));
    }
    let assign = sp
        .block_of
        .iter()
        .map(|&b| coarse_p.block(b as usize))
        .collect();
    Ok(Partition {
        assign,
        k: coarse_p.k(),
    })
}
