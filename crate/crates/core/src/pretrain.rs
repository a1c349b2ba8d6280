//! Offline pre-training on a corpus of small graphs with known blocks.
//!
//! Each graph contributes a labeled batch of node pairs. The loss is the
//! mean binary cross-entropy of the pair scores plus a modularity reward
//! `-lambda * sum_s Q_s y_s / 2m` over the same pairs. Gradients are computed
//! by hand through the classifier nets, the row normalization, the
//! (parameter-free, symmetric) propagation and the feature MLP, and applied
//! with Adam, one step per graph.

use std::collections::HashSet;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Partition};
use crate::model::{
    feature_input, normalize_rows, scaled_projection, pair_score, propagate_raw, sigmoid, softplus, LayerGrad,
    ModelCheckpoint, ModelConfig,
};
use crate::sbmgen::{generate, sample_params, ParamRanges};

/// Scores are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the log terms.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub pairs: Vec<(NodeId, NodeId)>,
    /// 1 when both endpoints share a true block.
    pub labels: Vec<u8>,
    /// Modularity matrix entry `A_ij - d_i d_j / 2m` of each pair.
    pub q_vals: Vec<f64>,
    pub two_m: f64,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Negative pairs per positive pair.
    pub neg_ratio: f64,
    pub lambda_mod: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Seeds pair sampling and the per-epoch projections.
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 20,
            learning_rate: 2e-3,
            neg_ratio: 4.0,
            lambda_mod: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.learning_rate, self.neg_ratio, self.lambda_mod]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if self.epochs == 0 || !finite {
            return Err(Error::input(
                "epochs must be positive; rates and weights finite and non-negative",
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::input("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn canon(i: usize, j: usize) -> (NodeId, NodeId) {
    (i.min(j) as NodeId, i.max(j) as NodeId)
}

/// Labeled pairs for one graph.
///
/// Positives: every within-block edge plus as many random within-block
/// non-edges. Negatives: `neg_ratio` times the positive count, taken first
/// from the between-block edges (a random subset if there are too many),
/// then from random cross-block pairs. Sampling gives up on a category after
/// a bounded number of rejections, so tiny or saturated blocks can yield
/// fewer pairs than requested.
pub fn sample_training_pairs(
    g: &Graph,
    truth: &Partition,
    neg_ratio: f64,
    seed: u64,
) -> Result<TrainBatch> {
    if truth.n() != g.n() {
        return Err(Error::input("truth does not cover the graph"));
    }
    if !(neg_ratio.is_finite() && neg_ratio >= 0.0) {
        return Err(Error::input("neg_ratio must be finite and non-negative"));
    }
    if truth.k() == 1 && neg_ratio > 0.0 {
        return Err(Error::Sampling(
            "single-block truth has no cross-block pairs".into(),
        ));
    }
    let two_m = 2.0 * g.total_weight();
    if two_m <= 0.0 {
        return Err(Error::Sampling("graph has no edges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.n();
    let block = |v: usize| truth.block(v);

    let mut within = Vec::new();
    let mut between = Vec::new();
    for (i, j) in g.edge_pairs() {
        if i == j {
            continue;
        }
        if block(i as usize) == block(j as usize) {
            within.push((i, j));
        } else {
            between.push((i, j));
        }
    }

    let mut seen: HashSet<(NodeId, NodeId)> = within.iter().chain(&between).copied().collect();
    let mut pairs = within.clone();

    // within-block non-edges, nodes drawn uniformly
    let members = truth.members();
    let target = within.len();
    let mut added = 0;
    let mut attempts = 0;
    let budget = 20 * target + 1000;
    while added < target && attempts < budget {
        attempts += 1;
        let i = rng.random_range(0..n);
        let &j = members[block(i) as usize].choose(&mut rng).unwrap();
        if i == j as usize {
            continue;
        }
        let p = canon(i, j as usize);
        if seen.insert(p) {
            pairs.push(p);
            added += 1;
        }
    }
    let n_pos = pairs.len();
    let n_neg = (neg_ratio * n_pos as f64).round() as usize;

    between.shuffle(&mut rng);
    between.truncate(n_neg);
    pairs.extend_from_slice(&between);
    let mut remaining = n_neg - between.len();
    let mut attempts = 0;
    let budget = 20 * remaining + 1000;
    while remaining > 0 && attempts < budget {
        attempts += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if block(i) == block(j) {
            continue;
        }
        let p = canon(i, j);
        if seen.insert(p) {
            pairs.push(p);
            remaining -= 1;
        }
    }
    if pairs.is_empty() {
        return Err(Error::Sampling("no training pairs available".into()));
    }

    let d = g.degrees();
    let labels = pairs
        .iter()
        .map(|&(i, j)| u8::from(block(i as usize) == block(j as usize)))
        .collect();
    let q_vals = pairs
        .iter()
        .map(|&(i, j)| {
            let (i, j) = (i as usize, j as usize);
            g.weight(i, j) - d[i] * d[j] / two_m
        })
        .collect();
    Ok(TrainBatch {
        pairs,
        labels,
        q_vals,
        two_m,
    })
}

fn bce_term(y: f64, label: u8) -> f64 {
    let y = y.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label == 1 {
        -y.ln()
    } else {
        -(1.0 - y).ln()
    }
}

/// Mean cross-entropy minus `lambda * sum_s Q_s y_s / 2m`.
pub fn loss(y_hat: &[f64], batch: &TrainBatch, lambda_mod: f64) -> Result<f64> {
    if y_hat.len() != batch.len() {
        return Err(Error::input("score and batch lengths differ"));
    }
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let bce: f64 = y_hat
        .iter()
        .zip(&batch.labels)
        .map(|(&y, &l)| bce_term(y, l))
        .sum::<f64>()
        / batch.len() as f64;
    let reward: f64 = y_hat.iter().zip(&batch.q_vals).map(|(y, q)| y * q).sum();
    Ok(bce - lambda_mod * reward / batch.two_m)
}

/// Parameter gradients, one entry per layer of each net.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub feature: Vec<LayerGrad>,
    pub g_s: Vec<LayerGrad>,
    pub g_d: Vec<LayerGrad>,
}

impl Gradients {
    pub fn named(&self) -> impl Iterator<Item = (String, &LayerGrad)> {
        [("feature", &self.feature), ("g_s", &self.g_s), ("g_d", &self.g_d)]
            .into_iter()
            .flat_map(|(name, v)| {
                v.iter()
                    .enumerate()
                    .map(move |(i, l)| (format!("{name}.{i}"), l))
            })
    }

    fn check_finite(&self) -> Result<()> {
        for (name, l) in self.named() {
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric { layer: name });
            }
        }
        Ok(())
    }
}

/// Loss and its gradient for one graph, with the feature-MLP input `x`
/// supplied by the caller (it does not depend on the parameters).
pub fn loss_and_gradients(
    ckpt: &ModelCheckpoint,
    g: &Graph,
    x: &Array2<f64>,
    batch: &TrainBatch,
    lambda_mod: f64,
) -> Result<(f64, Gradients)> {
    if x.nrows() != g.n() || x.ncols() != ckpt.config.k {
        return Err(Error::input("projection shape does not match graph and model"));
    }
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let depth = ckpt.config.propagation_depth;
    let ft = ckpt.feature_mlp.forward_trace(x);
    let (emb, norms) = normalize_rows(propagate_raw(g, &ft.output, depth));
    let z = &emb.z;
    let st = ckpt.g_s.forward_trace(z);
    let dt = ckpt.g_d.forward_trace(z);
    let (s, d) = (&st.output, &dt.output);

    let count = batch.len() as f64;
    let mut total = 0.0;
    let mut dz = Array2::<f64>::zeros(z.dim());
    let mut ds = Array2::<f64>::zeros(s.dim());
    let mut dd = Array2::<f64>::zeros(d.dim());
    for ((&(i, j), &label), &q) in batch.pairs.iter().zip(&batch.labels).zip(&batch.q_vals) {
        let (i, j) = (i as usize, j as usize);
        let cos = z.row(i).dot(&z.row(j));
        let u = s.row(i).dot(&d.row(j));
        let tau = softplus(u);
        let y = pair_score(cos, tau);
        total += bce_term(y, label) / count - lambda_mod * q * y / batch.two_m;

        let mut dy = -lambda_mod * q / batch.two_m;
        if y > BCE_EPS && y < 1.0 - BCE_EPS {
            dy += if label == 1 { -1.0 / y } else { 1.0 / (1.0 - y) } / count;
        }
        let dcos = dy * 2.0 * tau * y;
        let du = dy * 2.0 * (cos.min(1.0) - 1.0) * y * sigmoid(u);
        let (zi, zj) = (z.row(i).to_owned(), z.row(j).to_owned());
        dz.row_mut(i).scaled_add(dcos, &zj);
        dz.row_mut(j).scaled_add(dcos, &zi);
        ds.row_mut(i).scaled_add(du, &d.row(j));
        dd.row_mut(j).scaled_add(du, &s.row(i));
    }

    let (g_s, dz_s) = ckpt.g_s.backward(&st, ds);
    let (g_d, dz_d) = ckpt.g_d.backward(&dt, dd);
    dz += &dz_s;
    dz += &dz_d;

    // through z / |z|: (I - z z^T) / |z| applied to each row
    Zip::from(dz.axis_iter_mut(Axis(0)))
        .and(z.axis_iter(Axis(0)))
        .and(&Array1::from(norms))
        .for_each(|mut g_row, z_row, &norm| {
            if norm > 0.0 {
                let proj = g_row.dot(&z_row);
                g_row.scaled_add(-proj, &z_row);
                g_row /= norm;
            } else {
                g_row.fill(0.0);
            }
        });
    // the propagation operator is symmetric, so its adjoint is itself
    let dx = propagate_raw(g, &dz, depth);
    let (feature, _) = ckpt.feature_mlp.backward(&ft, dx);

    let grads = Gradients { feature, g_s, g_d };
    grads.check_finite()?;
    Ok((total, grads))
}

/// Gradient of the loss for one graph, projecting with the checkpoint's seed.
pub fn gradients(
    ckpt: &ModelCheckpoint,
    g: &Graph,
    batch: &TrainBatch,
    lambda_mod: f64,
) -> Result<Gradients> {
    let x = feature_input(g, ckpt)?;
    Ok(loss_and_gradients(ckpt, g, &x, batch, lambda_mod)?.1)
}

/// Adam moments for every parameter, flattened in checkpoint layer order.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(ckpt: &ModelCheckpoint, hyper: &TrainHyper) -> Self {
        let size = ckpt
            .blocks()
            .iter()
            .map(|(_, l)| l.weight.len() + l.bias.len())
            .sum();
        Adam {
            lr: hyper.learning_rate,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; size],
            v: vec![0.0; size],
        }
    }

    pub fn update(&mut self, ckpt: &mut ModelCheckpoint, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let layer_grads = grads.feature.iter().chain(&grads.g_s).chain(&grads.g_d);
        let mut idx = 0;
        for (layer, grad) in ckpt.layers_mut().zip(layer_grads) {
            let params = layer.weight.iter_mut().chain(layer.bias.iter_mut());
            let gs = grad.weight.iter().chain(grad.bias.iter());
            for (p, &gv) in params.zip(gs) {
                let m = &mut self.m[idx];
                let v = &mut self.v[idx];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gv;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gv * gv;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                idx += 1;
            }
        }
    }
}

struct Prepared<'a> {
    graph: &'a Graph,
    batch: TrainBatch,
    seed: u64,
}

fn graph_seed(seed: u64, idx: usize) -> u64 {
    seed ^ (idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains a model from identity weights ([`ModelCheckpoint::identity`]);
/// returns the checkpoint and the mean loss of every epoch. Pairs are sampled
/// once per graph and reused across epochs. The random projection is redrawn
/// for every graph in every epoch.
pub fn pretrain(
    corpus: &[(Graph, Partition)],
    config: ModelConfig,
    hyper: &TrainHyper,
) -> Result<(ModelCheckpoint, Vec<f64>)> {
    pretrain_with(corpus, config, hyper, |_, _, _| {})
}

/// [`pretrain`] with a callback receiving the epoch index, its mean loss and
/// the current parameters after every epoch.
pub fn pretrain_with(
    corpus: &[(Graph, Partition)],
    config: ModelConfig,
    hyper: &TrainHyper,
    on_epoch: impl FnMut(usize, f64, &ModelCheckpoint),
) -> Result<(ModelCheckpoint, Vec<f64>)> {
    hyper.validate()?;
    let ckpt = ModelCheckpoint::identity(config)?;
    pretrain_from(corpus, ckpt, hyper, on_epoch)
}

/// Continues training from existing parameters.
pub fn pretrain_from(
    corpus: &[(Graph, Partition)],
    mut ckpt: ModelCheckpoint,
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(usize, f64, &ModelCheckpoint),
) -> Result<(ModelCheckpoint, Vec<f64>)> {
    hyper.validate()?;
    ckpt.config.validate()?;
    if corpus.is_empty() {
        return Err(Error::input("empty training corpus"));
    }
    let prepared: Vec<Prepared> = corpus
        .par_iter()
        .enumerate()
        .map(|(idx, (g, truth))| {
            let seed = graph_seed(hyper.seed, idx);
            Ok(Prepared {
                graph: g,
                batch: sample_training_pairs(g, truth, hyper.neg_ratio, seed)?,
                seed,
            })
        })
        .collect::<Result<_>>()?;

    let mut adam = Adam::new(&ckpt, hyper);
    let mut trace = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let mut sum = 0.0;
        for p in &prepared {
            let x = scaled_projection(p.graph, ckpt.config.k, graph_seed(p.seed, epoch))?;
            let (l, grads) = loss_and_gradients(&ckpt, p.graph, &x, &p.batch, hyper.lambda_mod)?;
            if !l.is_finite() {
                trace.push(l);
                return Err(Error::Diverged { epoch, trace });
            }
            sum += l;
            adam.update(&mut ckpt, &grads);
        }
        let mean = sum / prepared.len() as f64;
        trace.push(mean);
        on_epoch(epoch, mean, &ckpt);
    }
    Ok((ckpt, trace))
}

/// `m` graphs with randomized generator parameters.
pub fn generate_corpus(m: usize, ranges: &ParamRanges, seed: u64) -> Result<Vec<(Graph, Partition)>> {
    (0..m)
        .into_par_iter()
        .map(|i| generate(&sample_params(ranges, graph_seed(seed, i))?))
        .collect()
}
