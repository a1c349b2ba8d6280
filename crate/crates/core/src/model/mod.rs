//! The forward model: a Gaussian random projection of the modularity
//! matrix, a feature MLP, parameter-free normalized-adjacency propagation,
//! and a pair classifier scoring node pairs by embedding similarity.

mod checkpoint;
mod mlp;

use std::time::Instant;

use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error, Result};
use crate::graph::{Graph, NodeId};

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};
pub use mlp::{Activation, DenseLayer, LayerGrad, Mlp, MlpTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature and embedding width.
    pub k: usize,
    pub feature_layers: usize,
    pub propagation_depth: usize,
    pub classifier_layers: usize,
    pub projection_seed: u64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: 32,
            feature_layers: 2,
            propagation_depth: 2,
            classifier_layers: 4,
            projection_seed: 0,
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.feature_layers == 0 || self.classifier_layers == 0 {
            return Err(Error::input(
                "k and MLP layer counts must be at least 1",
            ));
        }
        Ok(())
    }
}

/// All learnable parameters plus the configuration they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub feature_mlp: Mlp,
    /// Source-side scale network.
    pub g_s: Mlp,
    /// Destination-side scale network.
    pub g_d: Mlp,
}

impl ModelCheckpoint {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.k;
        let act = config.activation;
        Ok(ModelCheckpoint {
            feature_mlp: Mlp::init(k, config.feature_layers, act, &mut rng),
            g_s: Mlp::init(k, config.classifier_layers, act, &mut rng),
            g_d: Mlp::init(k, config.classifier_layers, act, &mut rng),
            config,
        })
    }

    /// Identity weights and zero biases everywhere.
    pub fn identity(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let k = config.k;
        let act = config.activation;
        Ok(ModelCheckpoint {
            feature_mlp: Mlp::identity(k, config.feature_layers, act),
            g_s: Mlp::identity(k, config.classifier_layers, act),
            g_d: Mlp::identity(k, config.classifier_layers, act),
            config,
        })
    }

    pub(crate) fn check_shapes(&self) -> std::result::Result<(), CheckpointError> {
        let k = self.config.k;
        for (name, mlp, layers) in [
            ("feature", &self.feature_mlp, self.config.feature_layers),
            ("g_s", &self.g_s, self.config.classifier_layers),
            ("g_d", &self.g_d, self.config.classifier_layers),
        ] {
            if mlp.layers.len() != layers {
                return Err(CheckpointError::Shape(format!(
                    "{name}: {} layers, config says {layers}",
                    mlp.layers.len()
                )));
            }
            for (i, l) in mlp.layers.iter().enumerate() {
                if l.weight.dim() != (k, k) || l.bias.len() != k {
                    return Err(CheckpointError::Shape(format!(
                        "{name}.{i}: weight {:?}, bias {}, expected {k}x{k}",
                        l.weight.dim(),
                        l.bias.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.feature_mlp
            .layers
            .iter_mut()
            .chain(self.g_s.layers.iter_mut())
            .chain(self.g_d.layers.iter_mut())
    }

    /// Parameter blocks in serialization order.
    pub fn blocks(&self) -> Vec<(String, &DenseLayer)> {
        let mut out = Vec::new();
        for (name, mlp) in [("feature", &self.feature_mlp), ("g_s", &self.g_s), ("g_d", &self.g_d)] {
            for (i, l) in mlp.layers.iter().enumerate() {
                out.push((format!("{name}.{i}"), l));
            }
        }
        out
    }
}

/// `Omega` with i.i.d. `N(0, 1/k)` entries, drawn row by row.
pub fn projection_matrix(n: usize, k: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (k as f64).sqrt();
    Array2::from_shape_simple_fn((n, k), || {
        let x: f64 = StandardNormal.sample(&mut rng);
        x * scale
    })
}

/// `Q * Omega` with `Q = A - d d^T / 2m`, computed as `A Omega - d (d^T Omega) / 2m`
/// so the dense modularity matrix is never formed.
pub fn project(g: &Graph, omega: &Array2<f64>) -> Result<Array2<f64>> {
    let n = g.n();
    if omega.nrows() != n {
        return Err(Error::input(format!(
            "projection has {} rows for {n} nodes",
            omega.nrows()
        )));
    }
    let two_m = 2.0 * g.total_weight();
    if two_m <= 0.0 {
        return Err(Error::input("random projection needs at least one edge"));
    }
    let d = g.degrees();
    let d_omega = ArrayView1::from(&d).dot(omega);
    let mut x = Array2::<f64>::zeros(omega.dim());
    x.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, w) in g.weighted_neighbors(i) {
                let a = if j as usize == i { 2.0 * w } else { w };
                row.scaled_add(a, &omega.row(j as usize));
            }
            row.scaled_add(-d[i] / two_m, &d_omega);
        });
    Ok(x)
}

pub fn random_projection(g: &Graph, k: usize, seed: u64) -> Result<Array2<f64>> {
    project(g, &projection_matrix(g.n(), k, seed))
}

/// The projection rescaled for the feature MLP. Rows of `Q Omega` have
/// norm close to `sqrt(d_i)`, so dividing by the root mean degree keeps the
/// MLP input on the same scale across graphs of different density.
pub fn feature_input(g: &Graph, ckpt: &ModelCheckpoint) -> Result<Array2<f64>> {
    scaled_projection(g, ckpt.config.k, ckpt.config.projection_seed)
}

/// [`random_projection`] divided by the root mean degree.
pub fn scaled_projection(g: &Graph, k: usize, seed: u64) -> Result<Array2<f64>> {
    let mut x = random_projection(g, k, seed)?;
    let mean_degree = 2.0 * g.total_weight() / g.n() as f64;
    x /= mean_degree.sqrt();
    Ok(x)
}

/// Feature MLP applied to [`feature_input`].
pub fn extract_features(g: &Graph, ckpt: &ModelCheckpoint) -> Result<Array2<f64>> {
    extract_features_from(&feature_input(g, ckpt)?, ckpt)
}

pub fn extract_features_from(x: &Array2<f64>, ckpt: &ModelCheckpoint) -> Result<Array2<f64>> {
    if x.ncols() != ckpt.config.k {
        return Err(CheckpointError::Shape(format!(
            "features have width {}, checkpoint expects {}",
            x.ncols(),
            ckpt.config.k
        ))
        .into());
    }
    ckpt.check_shapes()?;
    Ok(ckpt.feature_mlp.forward(x))
}

/// Row-normalized node embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub z: Array2<f64>,
    /// Rows whose propagated features were all zero; they stay zero.
    pub zero_rows: usize,
}

/// One multiplication by `D^-1/2 (A + I) D^-1/2`, `D` the degrees of `A + I`.
pub fn normalized_adjacency_apply(g: &Graph, inv_sqrt: &[f64], x: &Array2<f64>) -> Array2<f64> {
    let mut y = Array2::<f64>::zeros(x.dim());
    y.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            row.scaled_add(inv_sqrt[i], &x.row(i));
            for (j, w) in g.weighted_neighbors(i) {
                let a = if j as usize == i { 2.0 * w } else { w };
                row.scaled_add(a * inv_sqrt[j as usize], &x.row(j as usize));
            }
            row *= inv_sqrt[i];
        });
    y
}

pub(crate) fn propagation_scales(g: &Graph) -> Vec<f64> {
    g.degrees().iter().map(|d| 1.0 / (d + 1.0).sqrt()).collect()
}

/// `Z = (D^-1/2 (A + I) D^-1/2)^depth X`, before normalization.
pub fn propagate_raw(g: &Graph, x: &Array2<f64>, depth: usize) -> Array2<f64> {
    let scales = propagation_scales(g);
    let mut z = x.clone();
    for _ in 0..depth {
        z = normalized_adjacency_apply(g, &scales, &z);
    }
    z
}

/// Rescales every row to unit length; all-zero rows are left at zero.
pub fn normalize_rows(mut z: Array2<f64>) -> (Embeddings, Vec<f64>) {
    let mut norms = Vec::with_capacity(z.nrows());
    let mut zero_rows = 0;
    for mut row in z.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        norms.push(norm);
        if norm > 0.0 {
            row /= norm;
        } else {
            zero_rows += 1;
        }
    }
    (Embeddings { z, zero_rows }, norms)
}

pub fn propagate(g: &Graph, features: &Array2<f64>, depth: usize) -> Result<Embeddings> {
    if features.nrows() != g.n() {
        return Err(Error::input("feature rows do not match node count"));
    }
    Ok(normalize_rows(propagate_raw(g, features, depth)).0)
}

pub fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else if u < -30.0 {
        u.exp()
    } else {
        u.exp().ln_1p()
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `exp(2 tau (cos - 1))`, equal to `exp(-tau |z_i - z_j|^2)` for unit rows.
pub fn pair_score(cos: f64, tau: f64) -> f64 {
    (2.0 * tau * (cos.min(1.0) - 1.0)).exp()
}

fn check_pairs(n: usize, pairs: &[(NodeId, NodeId)]) -> Result<()> {
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i as usize >= n || j as usize >= n) {
        return Err(Error::input(format!("pair ({i}, {j}) out of range for {n} nodes")));
    }
    Ok(())
}

/// Same-block probability for each pair `(i, j)`, with pair temperature
/// `softplus(<g_s(z_i), g_d(z_j)>)`.
pub fn classify_pairs(
    emb: &Embeddings,
    pairs: &[(NodeId, NodeId)],
    ckpt: &ModelCheckpoint,
) -> Result<Vec<f64>> {
    check_pairs(emb.z.nrows(), pairs)?;
    ckpt.check_shapes()?;
    let s = ckpt.g_s.forward(&emb.z);
    let d = ckpt.g_d.forward(&emb.z);
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| {
            let (i, j) = (i as usize, j as usize);
            let cos = emb.z.row(i).dot(&emb.z.row(j));
            let tau = softplus(s.row(i).dot(&d.row(j)));
            pair_score(cos, tau)
        })
        .collect())
}

/// Scores for every edge of a graph, in canonical edge order.
#[derive(Clone, Debug)]
pub struct EdgeScores {
    pub edges: Vec<(NodeId, NodeId)>,
    pub scores: Vec<f64>,
    pub zero_rows: usize,
    /// Projection plus feature MLP.
    pub feat_s: f64,
    /// Propagation plus pair classification.
    pub ffp_s: f64,
}

pub fn forward_edges(g: &Graph, ckpt: &ModelCheckpoint) -> Result<EdgeScores> {
    let start = Instant::now();
    let features = extract_features(g, ckpt)?;
    let feat_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let emb = propagate(g, &features, ckpt.config.propagation_depth)?;
    let edges = g.edge_pairs();
    let scores = classify_pairs(&emb, &edges, ckpt)?;
    let ffp_s = start.elapsed().as_secs_f64();
    Ok(EdgeScores {
        edges,
        scores,
        zero_rows: emb.zero_rows,
        feat_s,
        ffp_s,
    })
}
