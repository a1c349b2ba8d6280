//! Central-difference checks of the hand-written backward pass.

use gpart::model::{random_projection, ModelCheckpoint, ModelConfig};
use gpart::pretrain::{loss_and_gradients, sample_training_pairs};
use gpart::sbmgen::{generate, GeneratorParams};
use gpart::{Graph, Partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

pub fn fixture(seed: u64) -> (Graph, Partition) {
    let params = GeneratorParams {
        n: 40,
        k_target: Some(3),
        within_between_ratio: 3.0,
        size_heterogeneity: 2.0,
        avg_degree: 6.0,
        degree_exponent: 2.0,
        seed,
    };
    generate(&params).unwrap()
}

pub fn random_ckpt(cfg: ModelConfig, seed: u64) -> ModelCheckpoint {
    let mut ckpt = ModelCheckpoint::init(cfg, seed).unwrap();
    // nonzero biases so their gradients are exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for l in ckpt.layers_mut() {
        l.bias.mapv_inplace(|_| rng.random_range(-0.2..0.2));
    }
    ckpt
}

fn block_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .max(numeric.iter().map(|b| b * b).sum())
        .sqrt()
        .max(1e-10);
    diff.sqrt() / scale
}

/// Worst per-block relative error, or a description of the first block
/// over `tol`.
pub fn check(seed: u64, cfg: ModelConfig, lambda: f64, tol: f64) -> Result<f64, String> {
    let (g, truth) = fixture(seed);
    let ckpt = random_ckpt(cfg, seed);
    let x = random_projection(&g, ckpt.config.k, seed).unwrap();
    let batch = sample_training_pairs(&g, &truth, 1.0, seed).unwrap();
    let (_, grads) = loss_and_gradients(&ckpt, &g, &x, &batch, lambda).unwrap();
    let eval = |c: &ModelCheckpoint| loss_and_gradients(c, &g, &x, &batch, lambda).unwrap().0;

    let names: Vec<String> = grads.named().map(|(n, _)| n).collect();
    let flat: Vec<(Vec<f64>, Vec<f64>)> = grads
        .named()
        .map(|(_, l)| (l.weight.iter().copied().collect(), l.bias.to_vec()))
        .collect();
    let mut worst: f64 = 0.0;
    let nlayers = names.len();
    for li in 0..nlayers {
        for (part, analytic) in [(0, &flat[li].0), (1, &flat[li].1)] {
            let mut numeric = Vec::with_capacity(analytic.len());
            for e in 0..analytic.len() {
                let bump = |delta: f64| {
                    let mut c = ckpt.clone();
                    let layer = c.layers_mut().nth(li).unwrap();
                    if part == 0 {
                        let k = layer.weight.ncols();
                        layer.weight[(e / k, e % k)] += delta;
                    } else {
                        layer.bias[e] += delta;
                    }
                    eval(&c)
                };
                numeric.push((bump(H) - bump(-H)) / (2.0 * H));
            }
            let err = block_error(analytic, &numeric);
            if !(err < tol) {
                return Err(format!(
                    "seed {seed} block {}{}: relative error {err:.2e}",
                    names[li],
                    if part == 0 { ".weight" } else { ".bias" }
                ));
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

pub fn small_config(activation_relu: bool) -> ModelConfig {
    ModelConfig {
        k: 5,
        feature_layers: 2,
        propagation_depth: 2,
        classifier_layers: 3,
        projection_seed: 0,
        activation: if activation_relu {
            gpart::model::Activation::Relu
        } else {
            gpart::model::Activation::Identity
        },
    }
}

