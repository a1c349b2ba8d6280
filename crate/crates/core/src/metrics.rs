//! Partition quality: modularity, pairwise precision/recall/F1, adjusted
//! Rand index and matched accuracy.
//!
//! Pair counts are exact `u128` arithmetic built from the contingency table,
//! so nothing enumerates node pairs.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};

/// Newman modularity. Weighted graphs use weighted degrees; a self-loop of
/// weight `w` contributes `2w` to its block's internal mass.
pub fn modularity(g: &Graph, p: &Partition) -> Result<f64> {
    if p.n() != g.n() {
        return Err(Error::input("partition and graph sizes differ"));
    }
    let two_m = 2.0 * g.total_weight();
    if two_m <= 0.0 {
        return Err(Error::Domain("modularity of a graph without edges".into()));
    }
    let k = p.k();
    let mut internal = vec![0.0f64; k];
    let mut total = vec![0.0f64; k];
    for i in 0..g.n() {
        let bi = p.block(i) as usize;
        for (j, w) in g.weighted_neighbors(i) {
            let w = if j as usize == i { 2.0 * w } else { w };
            total[bi] += w;
            if p.block(j as usize) as usize == bi {
                internal[bi] += w;
            }
        }
    }
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(&a, &d)| a / two_m - (d / two_m) * (d / two_m))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Nonzero cells `(pred_block, truth_block, count)` of the contingency table.
pub fn contingency(pred: &Partition, truth: &Partition) -> Result<Vec<(u32, u32, u64)>> {
    if pred.n() != truth.n() {
        return Err(Error::input(format!(
            "partitions cover {} and {} nodes",
            pred.n(),
            truth.n()
        )));
    }
    let mut keys: Vec<u64> = pred
        .assign()
        .iter()
        .zip(truth.assign())
        .map(|(&a, &b)| ((a as u64) << 32) | b as u64)
        .collect();
    keys.sort_unstable();
    let mut cells: Vec<(u32, u32, u64)> = Vec::new();
    for key in keys {
        let (a, b) = ((key >> 32) as u32, key as u32);
        match cells.last_mut() {
            Some(c) if c.0 == a && c.1 == b => c.2 += 1,
            _ => cells.push((a, b, 1)),
        }
    }
    Ok(cells)
}

fn choose2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

struct PairSums {
    both: u128,
    pred: u128,
    truth: u128,
    all: u128,
}

fn pair_sums(pred: &Partition, truth: &Partition) -> Result<PairSums> {
    let cells = contingency(pred, truth)?;
    Ok(PairSums {
        both: cells.iter().map(|c| choose2(c.2)).sum(),
        pred: pred.block_sizes().iter().map(|&s| choose2(s as u64)).sum(),
        truth: truth.block_sizes().iter().map(|&s| choose2(s as u64)).sum(),
        all: choose2(pred.n() as u64),
    })
}

/// Precision and recall over unordered node pairs, "same block" being the
/// positive class. A prediction with no same-block pairs has precision 1
/// (it asserts nothing false).
pub fn pairwise_prf(pred: &Partition, truth: &Partition) -> Result<PairwiseScores> {
    let s = pair_sums(pred, truth)?;
    if s.truth == 0 {
        return Err(Error::Domain(
            "recall undefined: truth has no same-block pairs".into(),
        ));
    }
    let precision = if s.pred == 0 {
        1.0
    } else {
        s.both as f64 / s.pred as f64
    };
    let recall = s.both as f64 / s.truth as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PairwiseScores {
        precision,
        recall,
        f1,
    })
}

/// Adjusted Rand index. When the adjustment denominator vanishes (both
/// partitions all-singletons, or both a single block) the partitions are
/// identical and the index is 1.
pub fn ari(pred: &Partition, truth: &Partition) -> Result<f64> {
    let s = pair_sums(pred, truth)?;
    if s.all == 0 {
        return Ok(1.0);
    }
    let expected = (s.pred as f64) * (s.truth as f64) / s.all as f64;
    let max = 0.5 * (s.pred as f64 + s.truth as f64);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((s.both as f64 - expected) / denom)
}

/// Fraction of nodes covered by the best one-to-one matching between
/// predicted and true blocks.
pub fn matched_accuracy(pred: &Partition, truth: &Partition) -> Result<f64> {
    let cells = contingency(pred, truth)?;
    if pred.n() == 0 {
        return Ok(1.0);
    }
    // Put the side with fewer blocks on the rows.
    let transpose = pred.k() > truth.k();
    let rows = if transpose { truth.k() } else { pred.k() };
    let mut by_row: Vec<Vec<(u32, u64)>> = vec![Vec::new(); rows];
    for &(a, b, c) in &cells {
        let (r, col) = if transpose { (b, a) } else { (a, b) };
        by_row[r as usize].push((col, c));
    }
    // An optimal matching never needs a column outside each row's `rows`
    // heaviest cells: any such pick can be swapped for a free heavier one.
    let mut cols: Vec<u32> = Vec::new();
    for row in &mut by_row {
        row.sort_unstable_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
        cols.extend(row.iter().take(rows).map(|&(c, _)| c));
    }
    cols.sort_unstable();
    cols.dedup();
    let width = cols.len().max(rows);
    let mut weights = Matrix::new(rows, width, 0i64);
    for (r, row) in by_row.iter().enumerate() {
        for &(c, count) in row {
            if let Ok(pos) = cols.binary_search(&c) {
                weights[(r, pos)] = count as i64;
            }
        }
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.n() as f64)
}

/// All quality numbers reported by the `eval` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub ac: f64,
    pub ari: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub modularity: Option<f64>,
    pub k_pred: usize,
    pub k_true: usize,
}

pub fn evaluate(pred: &Partition, truth: &Partition, g: Option<&Graph>) -> Result<QualityMetrics> {
    let prf = pairwise_prf(pred, truth)?;
    Ok(QualityMetrics {
        ac: matched_accuracy(pred, truth)?,
        ari: ari(pred, truth)?,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        modularity: g.map(|g| modularity(g, pred)).transpose()?,
        k_pred: pred.k(),
        k_true: truth.k(),
    })
}
