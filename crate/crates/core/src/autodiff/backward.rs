use alloc::vec;
use alloc::vec::Vec;

use super::{ExprGraph, GraphError, NodeId, Op, Unary};

impl ExprGraph {
    /// Appends nodes computing `∂output/∂wrt` and returns their handle.
    ///
    /// The new nodes are differentiable like any other, so calling this on a
    /// scalar function of the result yields second derivatives.
    pub fn gradient_graph(&mut self, output: NodeId, wrt: NodeId) -> Result<NodeId, GraphError> {
        Ok(self.gradient_nodes(output, &[wrt])?[0])
    }

    /// Reverse sweep from the rank-0 `output`, one adjoint node per `wrt`.
    /// Handles that `output` does not depend on get a `zeros_like` node.
    pub fn gradient_nodes(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>, GraphError> {
        let len = self.len();
        for &id in wrt.iter().chain([&output]) {
            if id.0 >= len {
                return Err(GraphError::UnknownNode(id));
            }
        }
        if let Some(v) = self.value(output) {
            if !v.is_scalar() {
                return Err(GraphError::NonScalarOutput { node: output, shape: v.shape().to_vec() });
            }
        }

        // Nodes on some path from a `wrt` handle.
        let n = output.0 + 1;
        let mut depends = vec![false; n];
        for w in wrt {
            if w.0 < n {
                depends[w.0] = true;
            }
        }
        for i in 0..n {
            if !depends[i] {
                depends[i] = self.nodes[i].op.parents().any(|p| depends[p.0]);
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; n];
        if depends[output.0] {
            adjoint[output.0] = Some(self.push(Op::Seed(output)));
        }
        for i in (0..n).rev() {
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes[i].op.clone();
            for (parent, contribution) in self.vjp(NodeId(i), &op, g, &depends)? {
                adjoint[parent.0] = Some(match adjoint[parent.0] {
                    None => contribution,
                    Some(acc) => self.add(acc, contribution),
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => g,
                None => self.zeros_like(w),
            })
            .collect())
    }

    /// Vector-Jacobian product of one node: the contribution of adjoint `g`
    /// to each parent that lies on a differentiated path.
    fn vjp(&mut self, out: NodeId, op: &Op, g: NodeId, depends: &[bool]) -> Result<Vec<(NodeId, NodeId)>, GraphError> {
        let need = |p: NodeId| depends[p.0];
        let mut acc = Vec::with_capacity(2);
        match *op {
            Op::Input { .. } | Op::Const => {}
            Op::Add(a, b) => {
                if need(a) {
                    acc.push((a, g));
                }
                if need(b) {
                    acc.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    acc.push((a, g));
                }
                if need(b) {
                    acc.push((b, self.neg(g)));
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    acc.push((a, self.mul(g, b)));
                }
                if need(b) {
                    acc.push((b, self.mul(g, a)));
                }
            }
            Op::Div(a, b) => {
                if need(a) {
                    acc.push((a, self.div(g, b)));
                }
                if need(b) {
                    // d(a/b)/db = -(a/b)/b
                    let t = self.mul(g, out);
                    let t = self.div(t, b);
                    acc.push((b, self.neg(t)));
                }
            }
            Op::Affine { x, scale, .. } => {
                if need(x) {
                    acc.push((x, self.scale(g, scale)));
                }
            }
            Op::Unary(f, x) => {
                if need(x) {
                    if let Some(c) = self.unary_vjp(f, x, out, g) {
                        acc.push((x, c));
                    }
                }
            }
            Op::MatMul(a, b) => {
                if need(a) {
                    let bt = self.transpose(b);
                    acc.push((a, self.matmul(g, bt)));
                }
                if need(b) {
                    let at = self.transpose(a);
                    acc.push((b, self.matmul(at, g)));
                }
            }
            Op::Transpose(x) => {
                if need(x) {
                    acc.push((x, self.transpose(g)));
                }
            }
            Op::AddRow { m, row } => {
                if need(m) {
                    acc.push((m, g));
                }
                if need(row) {
                    acc.push((row, self.sum_rows(g)));
                }
            }
            Op::MulCol { m, col } => {
                if need(m) {
                    acc.push((m, self.mul_col(g, col)));
                }
                if need(col) {
                    acc.push((col, self.row_dot(g, m)));
                }
            }
            Op::RowDot(a, b) => {
                if need(a) {
                    acc.push((a, self.mul_col(b, g)));
                }
                if need(b) {
                    acc.push((b, self.mul_col(a, g)));
                }
            }
            Op::MulScalar { x, s } => {
                if need(x) {
                    acc.push((x, self.mul_scalar(g, s)));
                }
                if need(s) {
                    let t = self.mul(g, x);
                    acc.push((s, self.sum(t)));
                }
            }
            Op::SumAll(x) => {
                if need(x) {
                    acc.push((x, self.fill_like(g, x, false)));
                }
            }
            Op::Mean(x) => {
                if need(x) {
                    acc.push((x, self.fill_like(g, x, true)));
                }
            }
            Op::SumRows(x) => {
                if need(x) {
                    acc.push((x, self.broadcast_rows(g, x)));
                }
            }
            Op::RowNorm(x) => {
                if need(x) {
                    let u = self.row_normalize(x);
                    acc.push((x, self.mul_col(u, g)));
                }
            }
            Op::MaxAll(x) => {
                if need(x) {
                    let mask = self.argmax_mask(x);
                    acc.push((x, self.mul_scalar(mask, g)));
                }
            }
            Op::FillLike { value, mean, .. } => {
                if need(value) {
                    let r = if mean { self.mean(g) } else { self.sum(g) };
                    acc.push((value, r));
                }
            }
            Op::BroadcastRows { row, .. } => {
                if need(row) {
                    acc.push((row, self.sum_rows(g)));
                }
            }
            // Piecewise constant in their inputs.
            Op::ArgmaxMask(_) | Op::ZerosLike(_) | Op::Seed(_) => {}
            Op::RowNormalize(_) => return Err(GraphError::Unsupported { op: op.name() }),
        }
        Ok(acc)
    }

    fn unary_vjp(&mut self, f: Unary, x: NodeId, out: NodeId, g: NodeId) -> Option<NodeId> {
        Some(match f {
            Unary::Relu => {
                let s = self.step(x);
                self.mul(g, s)
            }
            Unary::Step => return None,
            Unary::Tanh => {
                let sq = self.square(out);
                let d = self.affine(sq, -1.0, 1.0);
                self.mul(g, d)
            }
            Unary::Sigmoid => {
                let one_minus = self.affine(out, -1.0, 1.0);
                let d = self.mul(out, one_minus);
                self.mul(g, d)
            }
            Unary::Softplus => {
                let s = self.sigmoid(x);
                self.mul(g, s)
            }
            Unary::Exp => self.mul(g, out),
            Unary::Log => self.div(g, x),
            Unary::Sqrt => {
                let twice = self.scale(out, 2.0);
                self.div(g, twice)
            }
            Unary::Square => {
                let twice = self.scale(x, 2.0);
                self.mul(g, twice)
            }
        })
    }
}
