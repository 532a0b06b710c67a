use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::Matrix;

use super::tape::{Gradients, Tape, Var};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Hidden-layer nonlinearity; the last layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    LeakyRelu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

/// Fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Tape handles for the parameters of one network.
#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
}

/// Parameter gradients, flattened in [`Mlp::params_flat`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads(pub Vec<f64>);

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads(alloc::vec![0.0; net.num_params()])
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(alloc::format!("invalid layer dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
                Layer {
                    weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: Matrix::zeros(1, fan_out),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    /// Rebuilds a network from explicit layers.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].weight.rows() != pair[1].weight.cols() {
                return Err(Error::ShapeMismatch {
                    context: "mlp layers",
                    expected: (pair[1].weight.rows(), pair[0].weight.rows()),
                    got: pair[1].weight.shape(),
                })
                .map_err(|e| e.context(alloc::format!("layer {}", i + 1)));
            }
        }
        for l in &layers {
            if l.bias.shape() != (1, l.weight.rows()) {
                return Err(Error::ShapeMismatch {
                    context: "mlp bias",
                    expected: (1, l.weight.rows()),
                    got: l.bias.shape(),
                });
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = alloc::vec![self.layers[0].weight.cols()];
        dims.extend(self.layers.iter().map(|l| l.weight.rows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.as_slice().len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                context: "set_params_flat",
                expected: (self.num_params(), 1),
                got: (params.len(), 1),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for m in [&mut l.weight, &mut l.bias] {
                let n = m.as_slice().len();
                m.as_mut_slice().copy_from_slice(&params[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    fn activate(&self, x: f64) -> f64 {
        match self.activation {
            Activation::Tanh => math::tanh(x),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    /// Forward pass of a `b × in` batch.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "mlp forward",
                expected: (x.rows(), self.input_dim()),
                got: x.shape(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = h.matmul_nt(&l.weight)?;
            for r in 0..y.rows() {
                for (o, &b) in y.row_mut(r).iter_mut().zip(l.bias.as_slice()) {
                    *o += b;
                }
            }
            if i != last {
                y = y.map(|v| self.activate(v));
            }
            if !y.is_finite() {
                return Err(Error::NonFinite { layer: i });
            }
            h = y;
        }
        Ok(h)
    }

    /// Puts the parameters on the tape, as params or constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        MlpVars { layers }
    }

    /// Taped forward pass.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "mlp forward",
                expected: (tape.value(x).rows(), self.input_dim()),
                got: tape.value(x).shape(),
            });
        }
        let last = vars.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            h = tape.affine(h, w, b)?;
            if i != last {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::LeakyRelu => tape.leaky_relu(h, LEAKY_SLOPE),
                };
            }
            if !tape.value(h).is_finite() {
                return Err(Error::NonFinite { layer: i });
            }
        }
        Ok(h)
    }

    /// Collects this network's parameter gradients from a backward pass.
    pub fn collect_grads(&self, grads: &Gradients, vars: &MlpVars) -> MlpGrads {
        let mut out = Vec::with_capacity(self.num_params());
        for (l, &(w, b)) in self.layers.iter().zip(&vars.layers) {
            out.extend_from_slice(grads.get_or_zeros(w, l.weight.shape()).as_slice());
            out.extend_from_slice(grads.get_or_zeros(b, l.bias.shape()).as_slice());
        }
        MlpGrads(out)
    }
}
