//! Degree-corrected stochastic block model benchmark graphs, randomized
//! parameter sampling for training corpora, and the snowball stream split.
//!
//! Generation:
//! 1. block sizes: one block at relative weight 1, one at the configured
//!    heterogeneity `h`, the rest log-uniform in `[1, h]`; nodes are shuffled
//!    into blocks;
//! 2. degree propensities follow a truncated power law on
//!    `[1, PROPENSITY_SPAN]`;
//! 3. the edge budget `avg_degree * n / 2` is split into within- and
//!    between-block counts by `within_between_ratio`; within-block edges pick
//!    block `r` with probability proportional to the squared propensity mass of
//!    `r`, endpoints proportional to propensity; between-block edges pick both
//!    endpoints by propensity and reject same-block pairs. Duplicates are
//!    rejected, so the realized counts hit the targets exactly.

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Partition};

/// Ratio between the largest and smallest degree propensity.
pub const PROPENSITY_SPAN: f64 = 8.0;

/// Block-count exponent: `K = round(n^0.35)` gives 25 blocks at 10K nodes,
/// 44 at 50K, 56 at 100K and 125 at 1M.
pub const BLOCK_COUNT_EXPONENT: f64 = 0.35;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    /// `None` derives the count from `n`.
    pub k_target: Option<usize>,
    pub within_between_ratio: f64,
    /// Max/min expected block size.
    pub size_heterogeneity: f64,
    pub avg_degree: f64,
    pub degree_exponent: f64,
    pub seed: u64,
}

impl GeneratorParams {
    /// Within/between ratio 2.5 and size heterogeneity 3, about 81 edges per
    /// node.
    pub fn hardest(n: usize, seed: u64) -> Self {
        GeneratorParams {
            n,
            k_target: None,
            within_between_ratio: 2.5,
            size_heterogeneity: 3.0,
            avg_degree: 81.0,
            degree_exponent: 1.5,
            seed,
        }
    }

    pub fn block_count(&self) -> usize {
        self.k_target.unwrap_or_else(|| auto_block_count(self.n))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.block_count();
        if self.n == 0 || k == 0 || k > self.n {
            return Err(Error::input(format!(
                "need n >= k >= 1 (n = {}, k = {k})",
                self.n
            )));
        }
        if !(self.within_between_ratio > 0.0 && self.within_between_ratio.is_finite()) {
            return Err(Error::input("within_between_ratio must be positive"));
        }
        if !(self.size_heterogeneity >= 1.0 && self.size_heterogeneity.is_finite()) {
            return Err(Error::input("size_heterogeneity must be >= 1"));
        }
        if !(self.avg_degree >= 0.0 && self.avg_degree.is_finite()) {
            return Err(Error::input("avg_degree must be non-negative"));
        }
        if self.avg_degree > (self.n - 1) as f64 {
            return Err(Error::input(format!(
                "infeasible density: average degree {} with {} nodes",
                self.avg_degree, self.n
            )));
        }
        if !self.degree_exponent.is_finite() {
            return Err(Error::input("degree_exponent must be finite"));
        }
        Ok(())
    }
}

pub fn auto_block_count(n: usize) -> usize {
    ((n as f64).powf(BLOCK_COUNT_EXPONENT).round() as usize).clamp(1, n.max(1))
}

fn block_sizes(n: usize, k: usize, heterogeneity: f64, rng: &mut impl Rng) -> Vec<usize> {
    let mut weights = vec![1.0f64; k];
    if k >= 2 {
        weights[1] = heterogeneity;
        let ln_h = heterogeneity.ln();
        for w in weights.iter_mut().skip(2) {
            *w = (rng.random::<f64>() * ln_h).exp();
        }
    }
    // every block gets one node, the rest by largest remainder
    let spare = (n - k) as f64;
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| spare * w / total).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| 1 + q.floor() as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &r in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[r] += 1;
        left -= 1;
    }
    sizes
}

fn propensity(exponent: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    let g = 1.0 - exponent;
    if g.abs() < 1e-9 {
        PROPENSITY_SPAN.powf(u)
    } else {
        (1.0 + u * (PROPENSITY_SPAN.powf(g) - 1.0)).powf(1.0 / g)
    }
}

fn edge_key(u: NodeId, v: NodeId) -> u64 {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    ((a as u64) << 32) | b as u64
}

fn choose2(x: usize) -> usize {
    x * x.saturating_sub(1) / 2
}

/// Draws a simple graph and its ground-truth partition. Deterministic in
/// `params.seed`.
pub fn generate(params: &GeneratorParams) -> Result<(Graph, Partition)> {
    params.validate()?;
    let n = params.n;
    let k = params.block_count();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let sizes = block_sizes(n, k, params.size_heterogeneity, &mut rng);
    let mut labels: Vec<u32> = sizes
        .iter()
        .enumerate()
        .flat_map(|(r, &s)| std::iter::repeat_n(r as u32, s))
        .collect();
    labels.shuffle(&mut rng);
    let theta: Vec<f64> = (0..n)
        .map(|_| propensity(params.degree_exponent, &mut rng))
        .collect();

    let total = (params.avg_degree * n as f64 / 2.0).round() as usize;
    let (within, between) = if k == 1 {
        (total, 0)
    } else {
        let r = params.within_between_ratio;
        let w = (total as f64 * r / (1.0 + r)).round() as usize;
        (w, total - w)
    };
    let within_cap: usize = sizes.iter().map(|&s| choose2(s)).sum();
    let between_cap = choose2(n) - within_cap;
    if within > within_cap || between > between_cap {
        return Err(Error::input(format!(
            "infeasible density: {within} within-block edges (capacity {within_cap}), \
             {between} between-block edges (capacity {between_cap})"
        )));
    }

    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); k];
    for (v, &b) in labels.iter().enumerate() {
        members[b as usize].push(v as NodeId);
    }
    let mut edges: HashSet<u64> = HashSet::with_capacity(total);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(total);
    let budget = |target: usize| 200 * target + 10_000;

    if within > 0 {
        let eligible: Vec<usize> = (0..k).filter(|&r| sizes[r] >= 2).collect();
        let block_mass: Vec<f64> = eligible
            .iter()
            .map(|&r| {
                let s: f64 = members[r].iter().map(|&v| theta[v as usize]).sum();
                s * s
            })
            .collect();
        let pick_block = WeightedAliasIndex::new(block_mass).map_err(|e| Error::input(e.to_string()))?;
        let pick_member: Vec<WeightedAliasIndex<f64>> = eligible
            .iter()
            .map(|&r| {
                WeightedAliasIndex::new(members[r].iter().map(|&v| theta[v as usize]).collect())
                    .map_err(|e| Error::input(e.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut placed = 0;
        let mut tries = 0;
        while placed < within {
            tries += 1;
            if tries > budget(within) {
                return Err(Error::input("infeasible density: within-block edges saturated"));
            }
            let slot = pick_block.sample(&mut rng);
            let m = &members[eligible[slot]];
            let u = m[pick_member[slot].sample(&mut rng)];
            let v = m[pick_member[slot].sample(&mut rng)];
            if u != v && edges.insert(edge_key(u, v)) {
                pairs.push((u as usize, v as usize));
                placed += 1;
            }
        }
    }
    if between > 0 {
        let pick = WeightedAliasIndex::new(theta.clone()).map_err(|e| Error::input(e.to_string()))?;
        let mut placed = 0;
        let mut tries = 0;
        while placed < between {
            tries += 1;
            if tries > budget(between) {
                return Err(Error::input("infeasible density: between-block edges saturated"));
            }
            let u = pick.sample(&mut rng);
            let v = pick.sample(&mut rng);
            if labels[u] != labels[v] && edges.insert(edge_key(u as NodeId, v as NodeId)) {
                pairs.push((u, v));
                placed += 1;
            }
        }
    }

    let graph = Graph::from_edge_list(&pairs, Some(n))?;
    let truth = Partition::new(labels, k)?;
    Ok((graph, truth))
}

/// Closed intervals for randomized generator parameters. `n` and
/// `avg_degree` are drawn log-uniformly, the rest uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub n: (usize, usize),
    pub within_between_ratio: (f64, f64),
    pub size_heterogeneity: (f64, f64),
    pub avg_degree: (f64, f64),
    pub degree_exponent: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            n: (1000, 5000),
            within_between_ratio: (2.0, 5.0),
            size_heterogeneity: (1.0, 4.0),
            avg_degree: (40.0, 100.0),
            degree_exponent: (1.0, 2.5),
        }
    }
}

/// Expected within-block edge density never exceeds this in sampled params;
/// the average degree is capped to respect it.
const MAX_WITHIN_DENSITY: f64 = 0.3;

fn check_interval(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::input(format!("{name}: bad interval [{lo}, {hi}]")));
    }
    Ok(())
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
    }
}

pub fn sample_params(ranges: &ParamRanges, seed: u64) -> Result<GeneratorParams> {
    check_interval("n", ranges.n.0 as f64, ranges.n.1 as f64)?;
    check_interval("within_between_ratio", ranges.within_between_ratio.0, ranges.within_between_ratio.1)?;
    check_interval("size_heterogeneity", ranges.size_heterogeneity.0, ranges.size_heterogeneity.1)?;
    check_interval("avg_degree", ranges.avg_degree.0, ranges.avg_degree.1)?;
    check_interval("degree_exponent", ranges.degree_exponent.0, ranges.degree_exponent.1)?;
    if ranges.n.0 == 0 || ranges.avg_degree.0 <= 0.0 {
        return Err(Error::input("n and avg_degree ranges must be positive"));
    }
    if ranges.within_between_ratio.0 <= 0.0 || ranges.size_heterogeneity.0 < 1.0 {
        return Err(Error::input("ratio must be positive and heterogeneity >= 1"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_range = (ranges.n.0 as f64, ranges.n.1 as f64);
    let n = (log_uniform(&mut rng, n_range).round() as usize).clamp(ranges.n.0, ranges.n.1);
    let within_between_ratio = uniform(&mut rng, ranges.within_between_ratio);
    let size_heterogeneity = uniform(&mut rng, ranges.size_heterogeneity);
    let mut avg_degree = log_uniform(&mut rng, ranges.avg_degree);
    let degree_exponent = uniform(&mut rng, ranges.degree_exponent);
    let graph_seed = rng.random::<u64>();

    // keep within-block blocks well below saturation for small n
    let k = auto_block_count(n) as f64;
    let r = within_between_ratio;
    let cap = MAX_WITHIN_DENSITY * (n as f64 / k - 1.0) * (1.0 + r) / r;
    avg_degree = avg_degree.min(cap);

    Ok(GeneratorParams {
        n,
        k_target: None,
        within_between_ratio,
        size_heterogeneity,
        avg_degree,
        degree_exponent,
        seed: graph_seed,
    })
}

/// Node arrival batches `V_1..V_T` of a snowball stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSchedule {
    pub batches: Vec<Vec<NodeId>>,
}

/// Cumulative state after step `t` (1-based): the graph induced by all nodes
/// arrived so far, relabeled `0..nodes.len()` in ascending original id.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamStep {
    pub t: usize,
    /// Original ids of the cumulative node set, ascending.
    pub nodes: Vec<NodeId>,
    pub graph: Graph,
    pub truth: Partition,
}

/// Splits `g` into `steps` cumulative snapshots. Arrival order is a
/// breadth-first snowball from a seeded random root, restarting from a
/// random unvisited node whenever the frontier empties; batch `t` brings the
/// cumulative count to `floor(t * N / T)`.
pub fn snowball_split(
    g: &Graph,
    truth: &Partition,
    steps: usize,
    seed: u64,
) -> Result<(StreamSchedule, Vec<StreamStep>)> {
    let n = g.n();
    if truth.n() != n {
        return Err(Error::input("truth does not cover the graph"));
    }
    if steps == 0 || steps > n {
        return Err(Error::input(format!(
            "step count {steps} must be in 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots: Vec<NodeId> = (0..n as NodeId).collect();
    roots.shuffle(&mut rng);

    let mut visited = vec![false; n];
    let mut order: Vec<NodeId> = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for &root in &roots {
        if visited[root as usize] {
            continue;
        }
        visited[root as usize] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in g.neighbors(u as usize) {
                if !visited[v as usize] {
                    visited[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
    }

    let bounds: Vec<usize> = (0..=steps).map(|t| t * n / steps).collect();
    let batches: Vec<Vec<NodeId>> = bounds
        .windows(2)
        .map(|w| order[w[0]..w[1]].to_vec())
        .collect();

    let mut cumulative: Vec<NodeId> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(steps);
    for (t, batch) in batches.iter().enumerate() {
        cumulative.extend_from_slice(batch);
        cumulative.sort_unstable();
        let graph = g.induced_subgraph(&cumulative)?;
        let step_truth = truth.restrict(&cumulative);
        out.push(StreamStep {
            t: t + 1,
            nodes: cumulative.clone(),
            graph,
            truth: step_truth,
        });
    }
    Ok((StreamSchedule { batches }, out))
}
