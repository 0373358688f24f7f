//! Lipschitz penalties on critic input gradients.
//!
//! All three penalties act on the per-sample norms `‖∇ₓf(x)‖` at points
//! drawn from the blend region between real and fake samples:
//!
//! * `gp`:    `λ · mean((‖∇f‖ − k₀)²)`
//! * `lp`:    `λ · mean(max(0, ‖∇f‖ − k₀)²)`
//! * `maxgp`: `λ · (max ‖∇f‖)²`, an estimate of `λ · k(f)²`
//!
//! Each comes as a plain function on a slice and as a graph builder whose
//! result can be differentiated with respect to the critic parameters.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::autodiff::{ExprGraph, GraphError, NodeId};
use crate::field::{FieldError, ScalarField};
use crate::math;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum PenaltyError {
    Contract(&'static str),
    UnknownKind,
    Field(FieldError),
}

impl fmt::Display for PenaltyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyError::Contract(msg) => f.write_str(msg),
            PenaltyError::UnknownKind => f.write_str("unknown penalty kind (expected gp, lp or maxgp)"),
            PenaltyError::Field(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for PenaltyError {}

impl From<FieldError> for PenaltyError {
    fn from(e: FieldError) -> Self {
        PenaltyError::Field(e)
    }
}

impl From<GraphError> for PenaltyError {
    fn from(e: GraphError) -> Self {
        PenaltyError::Field(FieldError::Graph(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PenaltyKind {
    Gp,
    Lp,
    MaxGp,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 3] = [PenaltyKind::Gp, PenaltyKind::Lp, PenaltyKind::MaxGp];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::Gp => "gp",
            PenaltyKind::Lp => "lp",
            PenaltyKind::MaxGp => "maxgp",
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PenaltyKind {
    type Err = PenaltyError;

    fn from_str(s: &str) -> Result<Self, PenaltyError> {
        PenaltyKind::ALL.into_iter().find(|k| k.name() == s).ok_or(PenaltyError::UnknownKind)
    }
}

/// Which penalty, its weight `λ`, the target `k₀` (gp/lp) and the size of
/// the tracked-maximum list (maxgp; 0 turns it off).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub k0: f64,
    pub smax: usize,
}

impl PenaltySpec {
    pub fn maxgp(lambda: f64) -> Self {
        Self { kind: PenaltyKind::MaxGp, lambda, k0: 1.0, smax: 0 }
    }

    pub fn gp(lambda: f64, k0: f64) -> Self {
        Self { kind: PenaltyKind::Gp, lambda, k0, smax: 0 }
    }

    pub fn lp(lambda: f64, k0: f64) -> Self {
        Self { kind: PenaltyKind::Lp, lambda, k0, smax: 0 }
    }

    pub fn validate(&self) -> Result<(), PenaltyError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(PenaltyError::Contract("penalty lambda must be finite and non-negative"));
        }
        if !(self.k0 >= 0.0 && self.k0.is_finite()) {
            return Err(PenaltyError::Contract("penalty k0 must be finite and non-negative"));
        }
        if self.smax > 0 && self.kind != PenaltyKind::MaxGp {
            return Err(PenaltyError::Contract("smax only applies to maxgp"));
        }
        Ok(())
    }

    /// The penalty value for a batch of gradient norms.
    pub fn value(&self, norms: &[f64]) -> Result<f64, PenaltyError> {
        match self.kind {
            PenaltyKind::Gp => penalty_gp(norms, self.k0, self.lambda),
            PenaltyKind::Lp => penalty_lp(norms, self.k0, self.lambda),
            PenaltyKind::MaxGp => penalty_maxgp(norms, self.lambda),
        }
    }

    /// Appends the penalty of the `[n]` norm node `norms`.
    pub fn node(&self, g: &mut ExprGraph, norms: NodeId) -> NodeId {
        let inner = match self.kind {
            PenaltyKind::MaxGp => {
                let m = g.max(norms);
                g.square(m)
            }
            PenaltyKind::Gp => {
                let d = g.offset(norms, -self.k0);
                let sq = g.square(d);
                g.mean(sq)
            }
            PenaltyKind::Lp => {
                let d = g.offset(norms, -self.k0);
                let r = g.relu(d);
                let sq = g.square(r);
                g.mean(sq)
            }
        };
        g.scale(inner, self.lambda)
    }
}

fn nonempty(norms: &[f64]) -> Result<(), PenaltyError> {
    if norms.is_empty() {
        return Err(PenaltyError::Contract("penalty: empty batch"));
    }
    Ok(())
}

/// `λ · (max norm)²`.
pub fn penalty_maxgp(norms: &[f64], lambda: f64) -> Result<f64, PenaltyError> {
    nonempty(norms)?;
    let m = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(lambda * m * m)
}

/// `λ · mean((norm − k₀)²)`.
pub fn penalty_gp(norms: &[f64], k0: f64, lambda: f64) -> Result<f64, PenaltyError> {
    nonempty(norms)?;
    let s: f64 = norms.iter().map(|n| (n - k0) * (n - k0)).sum();
    Ok(lambda * s / norms.len() as f64)
}

/// `λ · mean(max(0, norm − k₀)²)`.
pub fn penalty_lp(norms: &[f64], k0: f64, lambda: f64) -> Result<f64, PenaltyError> {
    nonempty(norms)?;
    let s: f64 = norms.iter().map(|n| (n - k0).max(0.0)).map(|d| d * d).sum();
    Ok(lambda * s / norms.len() as f64)
}

/// Appends the `[n]` per-row norms of `∇ₓ f` for a critic whose output
/// `out` holds one value per row of the `[n, d]` input `x`. The result stays
/// differentiable with respect to every other input of the graph.
pub fn grad_norm_node(g: &mut ExprGraph, out: NodeId, x: NodeId) -> Result<NodeId, GraphError> {
    let total = g.sum(out);
    let gx = g.gradient_graph(total, x)?;
    Ok(g.row_norm(gx))
}

/// `‖∇ₓ f‖` at each row of `points`.
pub fn grad_norms(field: &mut dyn ScalarField, points: &Tensor) -> Result<Vec<f64>, PenaltyError> {
    let (_, grads) = field.values_and_grads(points)?;
    Ok(grads.row_iter().map(math::norm).collect())
}

fn check_pair(reals: &Tensor, fakes: &Tensor) -> Result<(), PenaltyError> {
    if reals.rank() != 2 || reals.shape() != fakes.shape() {
        return Err(PenaltyError::Contract("blend: real and fake batches must have equal [n, d] shapes"));
    }
    Ok(())
}

/// `t_i · real_i + (1 − t_i) · fake_i` for given `t`.
pub fn blend_with(reals: &Tensor, fakes: &Tensor, ts: &[f64]) -> Result<Tensor, PenaltyError> {
    check_pair(reals, fakes)?;
    if ts.len() != reals.shape()[0] {
        return Err(PenaltyError::Contract("blend: one t per pair"));
    }
    let d = reals.shape()[1];
    let mut out = Vec::with_capacity(reals.numel());
    for (i, &t) in ts.iter().enumerate() {
        for k in 0..d {
            out.push(t * reals.data()[i * d + k] + (1.0 - t) * fakes.data()[i * d + k]);
        }
    }
    Ok(Tensor::new(reals.shape().to_vec(), out).expect("same shape"))
}

/// One interpolant per (real, fake) pair with `t ~ U[0, 1]` drawn per pair.
pub fn sample_blend<R: Rng + ?Sized>(reals: &Tensor, fakes: &Tensor, rng: &mut R) -> Result<Tensor, PenaltyError> {
    check_pair(reals, fakes)?;
    let ts: Vec<f64> = (0..reals.shape()[0]).map(|_| rng.random::<f64>()).collect();
    blend_with(reals, fakes, &ts)
}

/// Largest gradient norm over `n_samples` blend points. Real and fake
/// samples are drawn with replacement, so the batches need not match in size.
pub fn estimate_k<R: Rng + ?Sized>(
    field: &mut dyn ScalarField,
    reals: &Tensor,
    fakes: &Tensor,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, PenaltyError> {
    if n_samples == 0 {
        return Err(PenaltyError::Contract("estimate_k: n_samples must be at least 1"));
    }
    if reals.rank() != 2 || fakes.rank() != 2 || reals.shape()[1] != fakes.shape()[1] {
        return Err(PenaltyError::Contract("estimate_k: batches must be [n, d] with equal d"));
    }
    if reals.shape()[0] == 0 || fakes.shape()[0] == 0 {
        return Err(PenaltyError::Contract("estimate_k: empty batch"));
    }
    let d = reals.shape()[1];
    let mut pts = Vec::with_capacity(n_samples * d);
    for _ in 0..n_samples {
        let r = reals.row(rng.random_range(0..reals.shape()[0]));
        let f = fakes.row(rng.random_range(0..fakes.shape()[0]));
        let t: f64 = rng.random();
        pts.extend(r.iter().zip(f).map(|(a, b)| t * a + (1.0 - t) * b));
    }
    let norms = grad_norms(field, &Tensor::matrix(n_samples, d, pts).expect("n × d"))?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// The `capacity` points with the largest observed gradient norms, kept in
/// descending order of norm.
#[derive(Clone, Debug, PartialEq)]
pub struct SMaxList {
    capacity: usize,
    entries: Vec<(Vec<f64>, f64)>,
}

impl SMaxList {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: Vec::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Vec<f64>, f64)] {
        &self.entries
    }

    pub fn norms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Merges `candidates` and keeps the top `capacity` by norm. On equal
    /// norms, entries already in the list come first, then candidates in
    /// the order given.
    pub fn update<I>(&mut self, candidates: I)
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        self.entries.extend(candidates);
        // Stable sort keeps the insertion order among ties.
        self.entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        self.entries.truncate(self.capacity);
    }

    /// Points as an `[m, d]` matrix, or `None` when empty.
    pub fn points(&self) -> Option<Tensor> {
        if self.entries.is_empty() {
            return None;
        }
        let rows: Vec<&[f64]> = self.entries.iter().map(|e| e.0.as_slice()).collect();
        Some(Tensor::from_rows(&rows))
    }
}
