use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity. `Identity` makes the whole network affine,
/// which is handy for checking the pipeline against closed forms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        if self == Activation::Relu {
            x.mapv_inplace(|v| v.max(0.0));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    /// Rows in, rows out: `x W^T + b`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Stack of square dense layers with the activation between them and a
/// linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
}

/// Per-layer inputs saved by a forward pass.
pub struct MlpTrace {
    pub inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    pub fn init<R: Rng>(width: usize, depth: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (width as f64).sqrt();
        let layers = (0..depth)
            .map(|_| DenseLayer {
                weight: Array2::from_shape_simple_fn((width, width), || {
                    rng.random_range(-bound..bound)
                }),
                bias: Array1::zeros(width),
            })
            .collect();
        Mlp { layers, activation }
    }

    /// Identity weights and zero biases. With ReLU the hidden activations
    /// still clip negative entries.
    pub fn identity(width: usize, depth: usize, activation: Activation) -> Self {
        let layers = (0..depth)
            .map(|_| DenseLayer {
                weight: Array2::eye(width),
                bias: Array1::zeros(width),
            })
            .collect();
        Mlp { layers, activation }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                self.activation.apply(&mut h);
            }
        }
        h
    }

    pub fn forward_trace(&self, x: &Array2<f64>) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(&h);
            inputs.push(h);
            if i < last {
                self.activation.apply(&mut out);
            }
            h = out;
        }
        MlpTrace { inputs, output: h }
    }

    /// Gradients of the parameters and of the input, given the gradient of
    /// the output.
    pub fn backward(&self, trace: &MlpTrace, d_out: Array2<f64>) -> (Vec<LayerGrad>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            grads.push(LayerGrad {
                weight: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            });
            let mut d_in = delta.dot(&layer.weight);
            // `input` is the activated output of the previous layer, so its
            // sign tells whether the ReLU was open.
            if i > 0 && self.activation == Activation::Relu {
                ndarray::Zip::from(&mut d_in)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = d_in;
        }
        grads.reverse();
        (grads, delta)
    }
}
