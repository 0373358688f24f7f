//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! An [`ExprGraph`] is an append-only list of nodes; every node's parents
//! precede it. Inputs are placeholders bound with [`ExprGraph::bind`] before
//! evaluation, so one graph is built once and re-evaluated many times.
//!
//! The backward pass ([`ExprGraph::gradient_nodes`]) does not compute numbers:
//! it appends new nodes that compute the adjoints. Those nodes are ordinary
//! graph nodes, so they can be differentiated again. This is how
//! `∇_θ ‖∇ₓ f(x; θ)‖²` is obtained for the gradient penalties.
//!
//! ```
//! use lipgan_core::{ExprGraph, Tensor};
//!
//! let mut g = ExprGraph::new();
//! let x = g.input("x");
//! let y = g.square(x);
//! let dy = g.gradient_graph(y, x).unwrap();
//! g.bind(x, Tensor::scalar(3.0)).unwrap();
//! assert_eq!(g.eval(y).unwrap().item(), Some(9.0));
//! assert_eq!(g.eval(dy).unwrap().item(), Some(6.0));
//! ```

mod backward;
mod check;
mod kernels;

pub use check::{fd_check, fd_check_coords, relative_error, FdReport, REL_ERROR_FLOOR};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::tensor::Tensor;

/// Handle of a node inside one [`ExprGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    /// Heaviside step `[x > 0]`, the derivative of relu (0 at the kink).
    Step,
    Tanh,
    Sigmoid,
    /// `log(1 + eˣ)`.
    Softplus,
    Exp,
    Log,
    Sqrt,
    Square,
}

impl Unary {
    pub fn name(self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Step => "step",
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sqrt => "sqrt",
            Unary::Square => "square",
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Input {
        name: String,
    },
    Const,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// `scale · x + shift`
    Affine {
        x: NodeId,
        scale: f64,
        shift: f64,
    },
    Unary(Unary, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// `[n,k] + [k]` broadcast over rows.
    AddRow {
        m: NodeId,
        row: NodeId,
    },
    /// `[n,k] · [n]`, row `i` scaled by `col[i]`.
    MulCol {
        m: NodeId,
        col: NodeId,
    },
    /// Per-row inner product of two `[n,k]` matrices, giving `[n]`.
    RowDot(NodeId, NodeId),
    /// Tensor times a rank-0 node.
    MulScalar {
        x: NodeId,
        s: NodeId,
    },
    SumAll(NodeId),
    Mean(NodeId),
    /// `[n,k] → [k]`
    SumRows(NodeId),
    /// `[n,k] → [n]` Euclidean norm of each row.
    RowNorm(NodeId),
    /// Each row divided by its norm; zero rows stay zero.
    RowNormalize(NodeId),
    MaxAll(NodeId),
    /// One-hot mask of the first maximal element.
    ArgmaxMask(NodeId),
    /// A scalar spread over the shape of `like` (divided by its size if `mean`).
    FillLike {
        value: NodeId,
        like: NodeId,
        mean: bool,
    },
    /// A `[k]` row repeated to the shape `[n,k]` of `like`.
    BroadcastRows {
        row: NodeId,
        like: NodeId,
    },
    ZerosLike(NodeId),
    /// Scalar 1, the adjoint seed; fails if its argument is not rank 0.
    Seed(NodeId),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Const => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Affine { .. } => "affine",
            Op::Unary(u, _) => u.name(),
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::AddRow { .. } => "add_row",
            Op::MulCol { .. } => "mul_col",
            Op::RowDot(..) => "row_dot",
            Op::MulScalar { .. } => "mul_scalar",
            Op::SumAll(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumRows(_) => "sum_rows",
            Op::RowNorm(_) => "row_norm",
            Op::RowNormalize(_) => "row_normalize",
            Op::MaxAll(_) => "max",
            Op::ArgmaxMask(_) => "argmax_mask",
            Op::FillLike { .. } => "fill_like",
            Op::BroadcastRows { .. } => "broadcast_rows",
            Op::ZerosLike(_) => "zeros_like",
            Op::Seed(_) => "seed",
        }
    }

    pub(crate) fn parents(&self) -> impl Iterator<Item = NodeId> {
        let (a, b) = match *self {
            Op::Input { .. } | Op::Const => (None, None),
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::MatMul(a, b)
            | Op::RowDot(a, b)
            | Op::AddRow { m: a, row: b }
            | Op::MulCol { m: a, col: b }
            | Op::MulScalar { x: a, s: b }
            | Op::FillLike { value: a, like: b, .. }
            | Op::BroadcastRows { row: a, like: b } => (Some(a), Some(b)),
            Op::Affine { x, .. }
            | Op::Unary(_, x)
            | Op::Transpose(x)
            | Op::SumAll(x)
            | Op::Mean(x)
            | Op::SumRows(x)
            | Op::RowNorm(x)
            | Op::RowNormalize(x)
            | Op::MaxAll(x)
            | Op::ArgmaxMask(x)
            | Op::ZerosLike(x)
            | Op::Seed(x) => (Some(x), None),
        };
        a.into_iter().chain(b)
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphError {
    ShapeMismatch {
        node: NodeId,
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    WrongRank {
        node: NodeId,
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    /// log or sqrt of a negative number.
    Domain {
        node: NodeId,
        op: &'static str,
        value: f64,
    },
    /// An operation produced NaN or ±∞.
    NonFinite {
        node: NodeId,
        op: &'static str,
    },
    Unbound {
        node: NodeId,
        name: String,
    },
    NotAnInput(NodeId),
    UnknownNode(NodeId),
    NonScalarOutput {
        node: NodeId,
        shape: Vec<usize>,
    },
    /// The backward pass reached an op with no derivative rule.
    Unsupported {
        op: &'static str,
    },
    Contract(&'static str),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { node, op, left, right } => {
                write!(f, "shape mismatch at {node} ({op}): {left:?} vs {right:?}")
            }
            Self::WrongRank { node, op, expected, shape } => {
                write!(f, "{op} at {node} expects rank {expected}, got shape {shape:?}")
            }
            Self::Domain { node, op, value } => {
                write!(f, "domain error at {node} ({op}) for argument {value}")
            }
            Self::NonFinite { node, op } => write!(f, "non-finite value produced at {node} ({op})"),
            Self::Unbound { node, name } => write!(f, "input `{name}` ({node}) is not bound"),
            Self::NotAnInput(node) => write!(f, "{node} is not an input node"),
            Self::UnknownNode(node) => write!(f, "unknown node {node}"),
            Self::NonScalarOutput { node, shape } => {
                write!(f, "gradient output {node} must be rank 0, has shape {shape:?}")
            }
            Self::Unsupported { op } => write!(f, "no derivative registered for op `{op}`"),
            Self::Contract(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for GraphError {}

/// A differentiable computation graph.
#[derive(Clone, Debug, Default)]
pub struct ExprGraph {
    nodes: Vec<Node>,
}

impl ExprGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op_name(&self, id: NodeId) -> Option<&'static str> {
        self.nodes.get(id.0).map(|n| n.op.name())
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes.get(id.0).map(|n| n.op.parents().collect()).unwrap_or_default()
    }

    /// Most recently computed (or bound) value of a node.
    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id.0).and_then(|n| n.value.as_ref())
    }

    fn push(&mut self, op: Op) -> NodeId {
        let id = self.nodes.len();
        for p in op.parents() {
            assert!(p.0 < id, "node {p} does not belong to this graph");
        }
        self.nodes.push(Node { op, value: None });
        NodeId(id)
    }

    // ---- leaves -------------------------------------------------------

    pub fn input(&mut self, name: &str) -> NodeId {
        self.push(Op::Input { name: name.into() })
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let id = self.push(Op::Const);
        self.nodes[id.0].value = Some(value);
        id
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    pub fn bind(&mut self, id: NodeId, value: Tensor) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(id.0).ok_or(GraphError::UnknownNode(id))?;
        match node.op {
            Op::Input { .. } => {
                node.value = Some(value);
                Ok(())
            }
            _ => Err(GraphError::NotAnInput(id)),
        }
    }

    // ---- builders -----------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a, b))
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        self.push(Op::Affine { x, scale, shift })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.affine(x, c, 0.0)
    }

    pub fn offset(&mut self, x: NodeId, c: f64) -> NodeId {
        self.affine(x, 1.0, c)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 0.0)
    }

    pub fn unary(&mut self, f: Unary, x: NodeId) -> NodeId {
        self.push(Op::Unary(f, x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Relu, x)
    }

    pub fn step(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Step, x)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Softplus, x)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Exp, x)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Log, x)
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Sqrt, x)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.unary(Unary::Square, x)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Transpose(x))
    }

    pub fn add_row(&mut self, m: NodeId, row: NodeId) -> NodeId {
        self.push(Op::AddRow { m, row })
    }

    pub fn mul_col(&mut self, m: NodeId, col: NodeId) -> NodeId {
        self.push(Op::MulCol { m, col })
    }

    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::RowDot(a, b))
    }

    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> NodeId {
        self.push(Op::MulScalar { x, s })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumAll(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x))
    }

    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumRows(x))
    }

    pub fn row_norm(&mut self, x: NodeId) -> NodeId {
        self.push(Op::RowNorm(x))
    }

    pub fn row_normalize(&mut self, x: NodeId) -> NodeId {
        self.push(Op::RowNormalize(x))
    }

    /// Maximum over all elements; backpropagates to the first maximal one.
    pub fn max(&mut self, x: NodeId) -> NodeId {
        self.push(Op::MaxAll(x))
    }

    pub fn argmax_mask(&mut self, x: NodeId) -> NodeId {
        self.push(Op::ArgmaxMask(x))
    }

    pub fn fill_like(&mut self, value: NodeId, like: NodeId, mean: bool) -> NodeId {
        self.push(Op::FillLike { value, like, mean })
    }

    pub fn broadcast_rows(&mut self, row: NodeId, like: NodeId) -> NodeId {
        self.push(Op::BroadcastRows { row, like })
    }

    pub fn zeros_like(&mut self, x: NodeId) -> NodeId {
        self.push(Op::ZerosLike(x))
    }

    // ---- evaluation ---------------------------------------------------

    /// Evaluates `output` from the current bindings and returns its value.
    pub fn eval(&mut self, output: NodeId) -> Result<&Tensor, GraphError> {
        self.eval_many(&[output])?;
        Ok(self.nodes[output.0].value.as_ref().expect("evaluated"))
    }

    /// Binds `bindings`, evaluates `output` and returns a copy of its value.
    pub fn eval_with(&mut self, bindings: &[(NodeId, Tensor)], output: NodeId) -> Result<Tensor, GraphError> {
        for (id, value) in bindings {
            self.bind(*id, value.clone())?;
        }
        self.eval(output).cloned()
    }

    /// Recomputes every node the `outputs` depend on. Cached values of
    /// non-leaf nodes are always recomputed, never reused across calls.
    pub fn eval_many(&mut self, outputs: &[NodeId]) -> Result<(), GraphError> {
        let Some(last) = outputs.iter().map(|o| o.0).max() else {
            return Ok(());
        };
        if last >= self.nodes.len() {
            return Err(GraphError::UnknownNode(NodeId(last)));
        }
        let mut needed = vec![false; last + 1];
        for o in outputs {
            needed[o.0] = true;
        }
        for i in (0..=last).rev() {
            if needed[i] {
                for p in self.nodes[i].op.parents() {
                    needed[p.0] = true;
                }
            }
        }
        for (i, &need) in needed.iter().enumerate() {
            if !need {
                continue;
            }
            let (done, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let id = NodeId(i);
            match &node.op {
                Op::Input { name } => {
                    if node.value.is_none() {
                        return Err(GraphError::Unbound { node: id, name: name.clone() });
                    }
                }
                Op::Const => {}
                op => {
                    let get = |p: NodeId| done[p.0].value.as_ref().expect("parent evaluated");
                    let value = kernels::forward(id, op, get)?;
                    if !value.is_finite() {
                        return Err(GraphError::NonFinite { node: id, op: op.name() });
                    }
                    node.value = Some(value);
                }
            }
        }
        Ok(())
    }

    /// Exact derivatives of the rank-0 `output` with respect to `wrt`.
    ///
    /// The backward nodes are built, evaluated and then removed again, so the
    /// graph is unchanged afterwards.
    pub fn gradient(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>, GraphError> {
        let mark = self.nodes.len();
        let result = self.gradient_nodes(output, wrt).and_then(|ids| {
            self.eval_many(&ids)?;
            Ok(ids.iter().map(|id| self.nodes[id.0].value.clone().expect("evaluated")).collect())
        });
        self.nodes.truncate(mark);
        result
    }
}

#[cfg(test)]
mod tests;
