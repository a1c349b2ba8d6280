//! Online inference with a frozen checkpoint: derive an initial partition
//! from one forward pass, coarsen by it, refine the super-graph.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{coarsen, components_of_edges, project_partition, Graph, NodeId, Partition};
use crate::metrics::QualityMetrics;
use crate::model::{forward_edges, EdgeScores, ModelCheckpoint};
use crate::refine::{refine_weighted, RefinerConfig};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Blocks are the connected components of the edges scoring strictly above
/// `threshold`.
pub fn derive_partition_from_scores(
    n: usize,
    edges: &[(NodeId, NodeId)],
    scores: &[f64],
    threshold: f64,
) -> Result<Partition> {
    if edges.len() != scores.len() {
        return Err(Error::input("one score per edge required"));
    }
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i as usize >= n || j as usize >= n) {
        return Err(Error::input(format!("edge ({i}, {j}) out of range")));
    }
    let kept = edges
        .iter()
        .zip(scores)
        .filter(|(_, &y)| y > threshold)
        .map(|(&e, _)| e);
    Ok(components_of_edges(n, kept))
}

pub fn derive_partition(g: &Graph, ckpt: &ModelCheckpoint, threshold: f64) -> Result<Partition> {
    let fwd = forward_edges(g, ckpt)?;
    derive_partition_from_scores(g.n(), &fwd.edges, &fwd.scores, threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Phase {
    Static,
    Stream { step: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Random projection and feature MLP.
    pub feat_s: f64,
    /// Propagation and pair classification.
    pub ffp_s: f64,
    /// Thresholding, components and coarsening.
    pub init_s: f64,
    pub refine_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub projection: u64,
    pub refiner: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    /// Nodes of the graph handed to the refiner.
    pub n_super: usize,
    pub k_init: usize,
    pub k_final: usize,
    /// Nodes whose embedding was all zero.
    pub zero_rows: usize,
    pub timings: Timings,
    pub metrics: Option<QualityMetrics>,
    pub phase: Phase,
    pub seeds: RunSeeds,
}

pub fn generalize_and_refine(
    g: &Graph,
    ckpt: &ModelCheckpoint,
    cfg: &RefinerConfig,
) -> Result<(Partition, RunReport)> {
    let start = Instant::now();
    let fwd = forward_edges(g, ckpt)?;
    finish_pipeline(g, fwd, ckpt.config.projection_seed, cfg, start)
}

/// The pipeline after the forward pass, for callers that supply their own
/// edge scores.
pub fn generalize_and_refine_with_scores(
    g: &Graph,
    scores: EdgeScores,
    cfg: &RefinerConfig,
) -> Result<(Partition, RunReport)> {
    finish_pipeline(g, scores, 0, cfg, Instant::now())
}

fn finish_pipeline(
    g: &Graph,
    fwd: EdgeScores,
    projection_seed: u64,
    cfg: &RefinerConfig,
    start: Instant,
) -> Result<(Partition, RunReport)> {
    cfg.validate()?;
    let t = Instant::now();
    let init = derive_partition_from_scores(g.n(), &fwd.edges, &fwd.scores, DEFAULT_THRESHOLD)?;
    let sp = coarsen(g, &init)?;
    let init_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let coarse = refine_weighted(&sp.coarse, &Partition::singletons(sp.n_super()), cfg)?;
    let result = project_partition(&sp, &coarse)?;
    let refine_s = t.elapsed().as_secs_f64();

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n: g.n(),
        m: g.num_edges(),
        n_super: sp.n_super(),
        k_init: init.k(),
        k_final: result.k(),
        zero_rows: fwd.zero_rows,
        timings: Timings {
            feat_s: fwd.feat_s,
            ffp_s: fwd.ffp_s,
            init_s,
            refine_s,
            total_s: start.elapsed().as_secs_f64().max(fwd.feat_s + fwd.ffp_s + init_s + refine_s),
        },
        metrics: None,
        phase: Phase::Static,
        seeds: RunSeeds {
            projection: projection_seed,
            refiner: cfg.seed,
        },
    };
    Ok((result, report))
}

/// Results of a streaming run. On failure, `results` holds every step
/// completed before `error`.
#[derive(Debug)]
pub struct StreamOutcome {
    pub results: Vec<(Partition, RunReport)>,
    pub error: Option<(usize, Error)>,
}

/// Runs the full pipeline from scratch on every cumulative step graph.
pub fn stream_partition(steps: &[Graph], ckpt: &ModelCheckpoint, cfg: &RefinerConfig) -> StreamOutcome {
    let mut results = Vec::with_capacity(steps.len());
    for (idx, g) in steps.iter().enumerate() {
        match generalize_and_refine(g, ckpt, cfg) {
            Ok((p, mut report)) => {
                report.phase = Phase::Stream { step: idx + 1 };
                results.push((p, report));
            }
            Err(e) => {
                return StreamOutcome {
                    results,
                    error: Some((idx + 1, e)),
                }
            }
        }
    }
    StreamOutcome { results, error: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::connected_components;
    use crate::refine::refine_from_scratch;

    fn two_triangles_bridged() -> Graph {
        Graph::from_edge_list(
            &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)],
            None,
        )
        .unwrap()
    }

    fn fixed_scores(g: &Graph, y: f64) -> EdgeScores {
        let edges = g.edge_pairs();
        EdgeScores {
            scores: vec![y; edges.len()],
            edges,
            zero_rows: 0,
            feat_s: 0.0,
            ffp_s: 0.0,
        }
    }

    #[test]
    fn all_pass_gives_components() {
        let g = Graph::from_edge_list(&[(0, 1), (2, 3)], Some(5)).unwrap();
        let s = fixed_scores(&g, 1.0);
        let p = derive_partition_from_scores(5, &s.edges, &s.scores, 0.5).unwrap();
        assert_eq!(p, connected_components(&g));
    }

    #[test]
    fn none_pass_gives_singletons() {
        let g = two_triangles_bridged();
        let s = fixed_scores(&g, 0.0);
        let p = derive_partition_from_scores(6, &s.edges, &s.scores, 0.5).unwrap();
        assert_eq!(p.k(), 6);
        // the threshold itself does not pass
        let s = fixed_scores(&g, 0.5);
        let p = derive_partition_from_scores(6, &s.edges, &s.scores, 0.5).unwrap();
        assert_eq!(p.k(), 6);
    }

    #[test]
    fn zero_scores_match_scratch() {
        let g = two_triangles_bridged();
        let cfg = RefinerConfig::default();
        let (p, report) = generalize_and_refine_with_scores(&g, fixed_scores(&g, 0.0), &cfg).unwrap();
        assert_eq!(report.n_super, g.n());
        assert_eq!(p, refine_from_scratch(&g, &cfg).unwrap());
    }

    #[test]
    fn stream_keeps_partial_results() {
        let good = two_triangles_bridged();
        let bad = Graph::from_edge_list(&[], Some(3)).unwrap();
        let ckpt = ModelCheckpoint::init(Default::default(), 0).unwrap();
        let out = stream_partition(&[good, bad], &ckpt, &RefinerConfig::default());
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.results[0].1.phase, Phase::Stream { step: 1 });
        assert_eq!(out.error.as_ref().unwrap().0, 2);
    }
}
