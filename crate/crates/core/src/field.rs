//! Scalar fields `f : ℝⁿ → ℝ` evaluated together with their input gradients.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{ExprGraph, GraphError, NodeId};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum FieldError {
    Graph(GraphError),
    /// Points have the wrong number of columns for this field.
    Dim {
        expected: usize,
        got: usize,
    },
    /// The operation is only defined for 2-D fields.
    NotPlanar {
        dim: usize,
    },
    Contract(&'static str),
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::Graph(e) => e.fmt(f),
            FieldError::Dim { expected, got } => {
                write!(f, "field takes {expected}-dimensional points, got {got}")
            }
            FieldError::NotPlanar { dim } => write!(f, "grid evaluation needs a 2-D field, this one is {dim}-D"),
            FieldError::Contract(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for FieldError {}

impl From<GraphError> for FieldError {
    fn from(e: GraphError) -> Self {
        FieldError::Graph(e)
    }
}

/// Something that can report `f(x)` and `∇ₓf(x)` for a batch of points.
pub trait ScalarField {
    fn input_dim(&self) -> usize;

    /// For `points` of shape `[n, d]`, the `n` values and the `[n, d]` gradients.
    fn values_and_grads(&mut self, points: &Tensor) -> Result<(Vec<f64>, Tensor), FieldError>;
}

fn check_points(points: &Tensor, dim: usize) -> Result<(), FieldError> {
    if points.rank() != 2 {
        return Err(FieldError::Contract("points must be a [n, d] matrix"));
    }
    if points.shape()[1] != dim {
        return Err(FieldError::Dim { expected: dim, got: points.shape()[1] });
    }
    Ok(())
}

/// `f(x) = ⟨w, x⟩ + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearField {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearField {
    pub fn new(w: Vec<f64>, b: f64) -> Self {
        Self { w, b }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self { w: vec![0.0; dim], b: value }
    }
}

impl ScalarField for LinearField {
    fn input_dim(&self) -> usize {
        self.w.len()
    }

    fn values_and_grads(&mut self, points: &Tensor) -> Result<(Vec<f64>, Tensor), FieldError> {
        check_points(points, self.w.len())?;
        let values = points
            .row_iter()
            .take(points.shape()[0])
            .map(|r| r.iter().zip(&self.w).map(|(x, w)| x * w).sum::<f64>() + self.b)
            .collect();
        let n = points.shape()[0];
        let mut grads = Vec::with_capacity(n * self.w.len());
        for _ in 0..n {
            grads.extend_from_slice(&self.w);
        }
        Ok((values, Tensor::new(points.shape().to_vec(), grads).expect("n × d")))
    }
}

/// A field defined by a graph whose input `x` is `[n, d]` and whose output
/// is one value per row (`[n]` or `[n, 1]`). Every other input of the graph
/// must already be bound.
#[derive(Clone, Debug)]
pub struct GraphField {
    graph: ExprGraph,
    x: NodeId,
    out: NodeId,
    grad: NodeId,
    dim: usize,
}

impl GraphField {
    pub fn new(mut graph: ExprGraph, x: NodeId, out: NodeId, dim: usize) -> Result<Self, GraphError> {
        let total = graph.sum(out);
        let grad = graph.gradient_graph(total, x)?;
        Ok(Self { graph, x, out, grad, dim })
    }

    pub fn graph_mut(&mut self) -> &mut ExprGraph {
        &mut self.graph
    }
}

impl ScalarField for GraphField {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn values_and_grads(&mut self, points: &Tensor) -> Result<(Vec<f64>, Tensor), FieldError> {
        check_points(points, self.dim)?;
        self.graph.bind(self.x, points.clone())?;
        self.graph.eval_many(&[self.out, self.grad])?;
        let values = self.graph.value(self.out).expect("evaluated").data().to_vec();
        if values.len() != points.shape()[0] {
            return Err(FieldError::Contract("field output must have one value per point"));
        }
        let grads = self.graph.value(self.grad).expect("evaluated").clone();
        Ok((values, grads))
    }
}

/// `f` and `∇ₓf` sampled on a regular lattice over a 2-D box.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub resolution: [usize; 2],
    /// Row-major in `(i₂, i₁)`: index `i₂ · resolution[0] + i₁`.
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl FieldGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Lattice coordinates in storage order.
    pub fn points(&self) -> Vec<[f64; 2]> {
        lattice(self.lo, self.hi, self.resolution)
    }
}

fn lattice(lo: [f64; 2], hi: [f64; 2], res: [usize; 2]) -> Vec<[f64; 2]> {
    let coord = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (res[k] - 1) as f64;
    let mut out = Vec::with_capacity(res[0] * res[1]);
    for j in 0..res[1] {
        for i in 0..res[0] {
            out.push([coord(0, i), coord(1, j)]);
        }
    }
    out
}

/// Evaluates a 2-D field on `resolution[0] × resolution[1]` points spanning
/// the closed box `[lo, hi]`.
pub fn field_grid(
    field: &mut dyn ScalarField,
    lo: [f64; 2],
    hi: [f64; 2],
    resolution: [usize; 2],
) -> Result<FieldGrid, FieldError> {
    if field.input_dim() != 2 {
        return Err(FieldError::NotPlanar { dim: field.input_dim() });
    }
    if resolution[0] < 2 || resolution[1] < 2 {
        return Err(FieldError::Contract("field_grid: resolution must be at least 2 per axis"));
    }
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        return Err(FieldError::Contract("field_grid: empty box"));
    }
    let pts = lattice(lo, hi, resolution);
    let flat: Vec<f64> = pts.iter().flatten().copied().collect();
    let (values, g) = field.values_and_grads(&Tensor::matrix(pts.len(), 2, flat).expect("n × 2"))?;
    let grads = g.row_iter().map(|r| [r[0], r[1]]).collect();
    Ok(FieldGrid { lo, hi, resolution, values, grads })
}
