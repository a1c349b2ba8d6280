//! Brute-force oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use gpart::{Graph, Partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// G(n, p) with at least one edge.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    assert!(n >= 2);
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1));
    }
    Graph::from_edge_list(&edges, Some(n)).unwrap()
}

/// A graph with planted blocks, so that partitions have some structure.
pub fn planted_graph(n: usize, k: usize, p_in: f64, p_out: f64, seed: u64) -> (Graph, Partition) {
    let mut r = rng(seed);
    let labels: Vec<u32> = (0..n).map(|_| r.random_range(0..k as u32)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if r.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1));
    }
    let g = Graph::from_edge_list(&edges, Some(n)).unwrap();
    (g, Partition::from_labels(&labels))
}

pub fn random_partition(n: usize, k: usize, seed: u64) -> Partition {
    let mut r = rng(seed);
    let labels: Vec<u32> = (0..n).map(|_| r.random_range(0..k as u32)).collect();
    Partition::from_labels(&labels)
}

/// Dense adjacency with `A_ii` equal to twice the self-loop weight.
pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.n();
    let mut a = vec![vec![0.0; n]; n];
    for (i, j, w) in g.edges() {
        let (i, j) = (i as usize, j as usize);
        if i == j {
            a[i][i] += 2.0 * w;
        } else {
            a[i][j] += w;
            a[j][i] += w;
        }
    }
    a
}

pub fn dense_modularity_matrix(g: &Graph) -> Vec<Vec<f64>> {
    let a = dense_adjacency(g);
    let d: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = d.iter().sum();
    a.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, &x)| x - d[i] * d[j] / two_m).collect())
        .collect()
}

/// Double loop over all node pairs.
pub fn brute_modularity(g: &Graph, p: &Partition) -> f64 {
    let a = dense_adjacency(g);
    let d: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = d.iter().sum();
    let mut q = 0.0;
    for i in 0..g.n() {
        for j in 0..g.n() {
            if p.block(i) == p.block(j) {
                q += a[i][j] - d[i] * d[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Counts of node pairs (same in both, same only in pred, same only in
/// truth, different in both).
pub fn pair_counts(pred: &Partition, truth: &Partition) -> (u64, u64, u64, u64) {
    let (mut n11, mut n10, mut n01, mut n00) = (0, 0, 0, 0);
    for i in 0..pred.n() {
        for j in i + 1..pred.n() {
            match (pred.block(i) == pred.block(j), truth.block(i) == truth.block(j)) {
                (true, true) => n11 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
                (false, false) => n00 += 1,
            }
        }
    }
    (n11, n10, n01, n00)
}

pub fn brute_prf(pred: &Partition, truth: &Partition) -> (f64, f64, f64) {
    let (n11, n10, n01, _) = pair_counts(pred, truth);
    let precision = if n11 + n10 == 0 { 1.0 } else { n11 as f64 / (n11 + n10) as f64 };
    let recall = n11 as f64 / (n11 + n01) as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Pair-counting form of the adjusted Rand index.
pub fn brute_ari(pred: &Partition, truth: &Partition) -> f64 {
    let (n11, n10, n01, n00) = pair_counts(pred, truth);
    let (a, b, c, d) = (n11 as f64, n10 as f64, n01 as f64, n00 as f64);
    let den = (d + c) * (c + a) + (d + b) * (b + a);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (d * a - c * b) / den
}

/// Best matched node count over every injective map from the smaller block
/// set into the larger one.
pub fn brute_accuracy(pred: &Partition, truth: &Partition) -> f64 {
    let (small, large) = if pred.k() <= truth.k() { (pred, truth) } else { (truth, pred) };
    let mut table = vec![vec![0u64; large.k()]; small.k()];
    for v in 0..pred.n() {
        table[small.block(v) as usize][large.block(v) as usize] += 1;
    }
    fn go(row: usize, table: &[Vec<u64>], used: &mut Vec<bool>) -> u64 {
        if row == table.len() {
            return 0;
        }
        let mut best = 0;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(table[row][c] + go(row + 1, table, used));
                used[c] = false;
            }
        }
        best
    }
    let mut used = vec![false; large.k()];
    go(0, &table, &mut used) as f64 / pred.n() as f64
}

/// Every set partition of `0..n` as restricted-growth label strings.
pub fn all_set_partitions(n: usize) -> Vec<Vec<u32>> {
    fn go(i: usize, n: usize, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            go(i + 1, n, max.max(l), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut cur = vec![0];
    go(1, n, 0, &mut cur, &mut out);
    out
}

pub fn best_modularity(g: &Graph) -> f64 {
    all_set_partitions(g.n())
        .iter()
        .map(|l| brute_modularity(g, &Partition::from_labels(l)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The hand-built running example: 11 nodes, two dense groups
/// {v1..v4} and {v5, v6, v7}, and two smaller groups {v8, v9} and
/// {v10, v11}. Ids are 0-based, so v1 is node 0.
pub struct RunningExample {
    pub graph: Graph,
    /// Edge scores that pass exactly the within-group edges.
    pub scores: Vec<f64>,
    pub edges: Vec<(u32, u32)>,
}

pub fn running_example() -> RunningExample {
    let within = [
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
        (4, 5), (4, 6), (5, 6),
        (7, 8),
        (9, 10),
    ];
    // Three edges between the first two groups.
    let between = [(0, 4), (2, 5), (3, 6), (6, 7), (8, 9), (3, 10)];
    let mut all: Vec<(usize, usize)> = within.to_vec();
    all.extend_from_slice(&between);
    let graph = Graph::from_edge_list(&all, Some(11)).unwrap();
    let edges = graph.edge_pairs();
    let scores = edges
        .iter()
        .map(|&(i, j)| {
            let e = (i.min(j) as usize, i.max(j) as usize);
            if within.contains(&e) { 0.9 } else { 0.1 }
        })
        .collect();
    RunningExample { graph, scores, edges }
}
