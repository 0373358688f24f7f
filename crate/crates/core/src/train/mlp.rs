use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::autodiff::{ExprGraph, GraphError, NodeId};
use crate::field::GraphField;
use crate::math;
use crate::tensor::Tensor;

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Selu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Selu => "selu",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Selu if x > 0.0 => SELU_LAMBDA * x,
            Activation::Selu => SELU_LAMBDA * SELU_ALPHA * (math::exp(x) - 1.0),
        }
    }

    fn node(self, g: &mut ExprGraph, x: NodeId) -> NodeId {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Selu => {
                // λ·relu(x) + λα·(exp(−relu(−x)) − 1)
                let pos = g.relu(x);
                let pos = g.scale(pos, SELU_LAMBDA);
                let nx = g.neg(x);
                let r = g.relu(nx);
                let r = g.neg(r);
                let e = g.exp(r);
                let neg = g.affine(e, SELU_LAMBDA * SELU_ALPHA, -SELU_LAMBDA * SELU_ALPHA);
                g.add(pos, neg)
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "selu" => Ok(Activation::Selu),
            _ => Err(TrainError::Config("unknown activation (expected relu or selu)")),
        }
    }
}

/// A fully connected network with `depth` hidden layers of equal width.
/// Depth 0 is a single affine map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub depth: usize,
    pub activation: Activation,
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_width: usize, depth: usize, output_dim: usize) -> Self {
        Self { input_dim, hidden_width, depth, activation: Activation::Relu, output_dim }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(TrainError::Config("mlp input and output dims must be positive"));
        }
        if self.depth > 0 && self.hidden_width == 0 {
            return Err(TrainError::Config("mlp hidden width must be positive"));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.depth + 2);
        s.push(self.input_dim);
        s.extend(core::iter::repeat_n(self.hidden_width, self.depth));
        s.push(self.output_dim);
        s
    }

    pub fn param_count(&self) -> usize {
        self.sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Weights and biases, alternating `W₀ [in, out], b₀ [out], W₁, b₁, …`.
pub type Params = Vec<Tensor>;

/// Glorot-uniform weights in `±√(6 / (fan_in + fan_out))`, zero biases.
pub fn init_mlp(cfg: &MlpConfig, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for w in cfg.sizes().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
        params.push(Tensor::matrix(fan_in, fan_out, data).expect("fan_in × fan_out"));
        params.push(Tensor::zeros(&[fan_out]));
    }
    params
}

/// Parameter input nodes of one network inside a graph.
#[derive(Clone, Debug)]
pub struct MlpNodes {
    pub cfg: MlpConfig,
    pub params: Vec<NodeId>,
}

impl MlpNodes {
    pub fn declare(g: &mut ExprGraph, cfg: &MlpConfig, prefix: &str) -> Self {
        let mut params = Vec::new();
        for l in 0..=cfg.depth {
            params.push(g.input(&alloc::format!("{prefix}.w{l}")));
            params.push(g.input(&alloc::format!("{prefix}.b{l}")));
        }
        Self { cfg: *cfg, params }
    }

    /// Appends the forward pass on the `[n, input_dim]` node `x`.
    pub fn forward(&self, g: &mut ExprGraph, x: NodeId) -> NodeId {
        let mut h = x;
        for l in 0..=self.cfg.depth {
            let z = g.matmul(h, self.params[2 * l]);
            let z = g.add_row(z, self.params[2 * l + 1]);
            h = if l < self.cfg.depth { self.cfg.activation.node(g, z) } else { z };
        }
        h
    }

    pub fn bind(&self, g: &mut ExprGraph, params: &[Tensor]) -> Result<(), GraphError> {
        if params.len() != self.params.len() {
            return Err(GraphError::Contract("parameter list does not match the network"));
        }
        for (&id, p) in self.params.iter().zip(params) {
            g.bind(id, p.clone())?;
        }
        Ok(())
    }
}

/// Straight-line forward pass of one point, outside any graph.
pub fn mlp_forward(cfg: &MlpConfig, params: &[Tensor], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for l in 0..=cfg.depth {
        let (w, b) = (&params[2 * l], &params[2 * l + 1]);
        let (k, m) = (w.shape()[0], w.shape()[1]);
        let mut z = b.data().to_vec();
        for p in 0..k {
            for j in 0..m {
                z[j] += h[p] * w.data()[p * m + j];
            }
        }
        if l < cfg.depth {
            z.iter_mut().for_each(|v| *v = cfg.activation.apply(*v));
        }
        h = z;
    }
    h
}

/// A scalar-output network with fixed parameters as a [`GraphField`].
pub fn mlp_field(cfg: &MlpConfig, params: &[Tensor]) -> Result<GraphField, GraphError> {
    if cfg.output_dim != 1 {
        return Err(GraphError::Contract("a field needs a network with one output"));
    }
    let mut g = ExprGraph::new();
    let x = g.input("x");
    let net = MlpNodes::declare(&mut g, cfg, "critic");
    let out = net.forward(&mut g, x);
    net.bind(&mut g, params)?;
    GraphField::new(g, x, out, cfg.input_dim)
}
