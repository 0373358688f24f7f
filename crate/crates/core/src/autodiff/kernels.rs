use alloc::vec;
use alloc::vec::Vec;

use super::{GraphError, NodeId, Op, Unary};
use crate::math;
use crate::tensor::Tensor;

fn mismatch(node: NodeId, op: &Op, left: &Tensor, right: &Tensor) -> GraphError {
    GraphError::ShapeMismatch { node, op: op.name(), left: left.shape().to_vec(), right: right.shape().to_vec() }
}

fn with_shape(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("kernel preserves element count")
}

fn zip_with(node: NodeId, op: &Op, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, GraphError> {
    if a.shape() != b.shape() {
        return Err(mismatch(node, op, a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(with_shape(a.shape(), data))
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    with_shape(a.shape(), a.data().iter().map(|&x| f(x)).collect())
}

fn require_rank(node: NodeId, op: &Op, t: &Tensor, rank: usize) -> Result<(), GraphError> {
    if t.rank() != rank {
        return Err(GraphError::WrongRank { node, op: op.name(), expected: rank, shape: t.shape().to_vec() });
    }
    Ok(())
}

fn unary(node: NodeId, f: Unary, x: &Tensor) -> Result<Tensor, GraphError> {
    let domain = |value| GraphError::Domain { node, op: f.name(), value };
    Ok(match f {
        Unary::Relu => map(x, |v| if v > 0.0 { v } else { 0.0 }),
        Unary::Step => map(x, |v| if v > 0.0 { 1.0 } else { 0.0 }),
        Unary::Tanh => map(x, math::tanh),
        Unary::Sigmoid => map(x, math::sigmoid),
        Unary::Softplus => map(x, math::softplus),
        Unary::Exp => map(x, math::exp),
        Unary::Log => {
            if let Some(&v) = x.data().iter().find(|&&v| v < 0.0) {
                return Err(domain(v));
            }
            map(x, math::ln)
        }
        Unary::Sqrt => {
            if let Some(&v) = x.data().iter().find(|&&v| v < 0.0) {
                return Err(domain(v));
            }
            map(x, math::sqrt)
        }
        Unary::Square => map(x, |v| v * v),
    })
}

fn matmul(node: NodeId, op: &Op, a: &Tensor, b: &Tensor) -> Result<Tensor, GraphError> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(mismatch(node, op, a, b));
    }
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let s = ad[i * k + p];
            if s == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                *o += s * bv;
            }
        }
    }
    Ok(with_shape(&[n, m], out))
}

fn transpose(x: &Tensor) -> Tensor {
    let (n, m) = (x.shape()[0], x.shape()[1]);
    let d = x.data();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = d[i * m + j];
        }
    }
    with_shape(&[m, n], out)
}

fn first_argmax(d: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in d.iter().enumerate() {
        match best {
            Some(b) if d[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

pub(super) fn forward<'a>(node: NodeId, op: &Op, get: impl Fn(NodeId) -> &'a Tensor) -> Result<Tensor, GraphError> {
    Ok(match *op {
        Op::Input { .. } | Op::Const => unreachable!("leaves are not computed"),
        Op::Add(a, b) => zip_with(node, op, get(a), get(b), |x, y| x + y)?,
        Op::Sub(a, b) => zip_with(node, op, get(a), get(b), |x, y| x - y)?,
        Op::Mul(a, b) => zip_with(node, op, get(a), get(b), |x, y| x * y)?,
        Op::Div(a, b) => zip_with(node, op, get(a), get(b), |x, y| x / y)?,
        Op::Affine { x, scale, shift } => map(get(x), |v| scale * v + shift),
        Op::Unary(f, x) => unary(node, f, get(x))?,
        Op::MatMul(a, b) => matmul(node, op, get(a), get(b))?,
        Op::Transpose(x) => {
            let x = get(x);
            require_rank(node, op, x, 2)?;
            transpose(x)
        }
        Op::AddRow { m, row } => {
            let (m, row) = (get(m), get(row));
            if m.rank() != 2 || row.rank() != 1 || m.shape()[1] != row.shape()[0] {
                return Err(mismatch(node, op, m, row));
            }
            let k = row.numel();
            let mut out = m.data().to_vec();
            for chunk in out.chunks_exact_mut(k.max(1)) {
                for (o, r) in chunk.iter_mut().zip(row.data()) {
                    *o += r;
                }
            }
            with_shape(m.shape(), out)
        }
        Op::MulCol { m, col } => {
            let (m, col) = (get(m), get(col));
            if m.rank() != 2 || col.rank() != 1 || m.shape()[0] != col.shape()[0] {
                return Err(mismatch(node, op, m, col));
            }
            let k = m.shape()[1];
            let mut out = m.data().to_vec();
            if k > 0 {
                for (chunk, &c) in out.chunks_exact_mut(k).zip(col.data()) {
                    chunk.iter_mut().for_each(|o| *o *= c);
                }
            }
            with_shape(m.shape(), out)
        }
        Op::RowDot(a, b) => {
            let (a, b) = (get(a), get(b));
            if a.rank() != 2 || a.shape() != b.shape() {
                return Err(mismatch(node, op, a, b));
            }
            let out = (0..a.rows()).map(|i| a.row(i).iter().zip(b.row(i)).map(|(x, y)| x * y).sum()).collect();
            Tensor::vector(out)
        }
        Op::MulScalar { x, s } => {
            let (x, s) = (get(x), get(s));
            if !s.is_scalar() {
                return Err(mismatch(node, op, x, s));
            }
            let c = s.data()[0];
            map(x, |v| v * c)
        }
        Op::SumAll(x) => Tensor::scalar(get(x).data().iter().sum()),
        Op::Mean(x) => {
            let x = get(x);
            Tensor::scalar(x.data().iter().sum::<f64>() / x.numel() as f64)
        }
        Op::SumRows(x) => {
            let x = get(x);
            require_rank(node, op, x, 2)?;
            let k = x.shape()[1];
            let mut out = vec![0.0; k];
            for r in x.row_iter() {
                for (o, v) in out.iter_mut().zip(r) {
                    *o += v;
                }
            }
            Tensor::vector(out)
        }
        Op::RowNorm(x) => {
            let x = get(x);
            require_rank(node, op, x, 2)?;
            Tensor::vector((0..x.rows()).map(|i| math::norm(x.row(i))).collect())
        }
        Op::RowNormalize(x) => {
            let x = get(x);
            require_rank(node, op, x, 2)?;
            let mut out = x.data().to_vec();
            let k = x.shape()[1];
            if k > 0 {
                for chunk in out.chunks_exact_mut(k) {
                    let n = math::norm(chunk);
                    if n > 0.0 {
                        chunk.iter_mut().for_each(|v| *v /= n);
                    }
                }
            }
            with_shape(x.shape(), out)
        }
        Op::MaxAll(x) => {
            let x = get(x);
            let i = first_argmax(x.data()).ok_or_else(|| mismatch(node, op, x, x))?;
            Tensor::scalar(x.data()[i])
        }
        Op::ArgmaxMask(x) => {
            let x = get(x);
            let mut out = vec![0.0; x.numel()];
            if let Some(i) = first_argmax(x.data()) {
                out[i] = 1.0;
            }
            with_shape(x.shape(), out)
        }
        Op::FillLike { value, like, mean } => {
            let (v, like) = (get(value), get(like));
            if !v.is_scalar() {
                return Err(mismatch(node, op, v, like));
            }
            let mut c = v.data()[0];
            if mean {
                c /= like.numel() as f64;
            }
            Tensor::filled(like.shape(), c)
        }
        Op::BroadcastRows { row, like } => {
            let (row, like) = (get(row), get(like));
            if row.rank() != 1 || like.rank() != 2 || like.shape()[1] != row.numel() {
                return Err(mismatch(node, op, row, like));
            }
            let mut out = Vec::with_capacity(like.numel());
            for _ in 0..like.rows() {
                out.extend_from_slice(row.data());
            }
            with_shape(like.shape(), out)
        }
        Op::ZerosLike(x) => Tensor::zeros(get(x).shape()),
        Op::Seed(x) => {
            let x = get(x);
            if !x.is_scalar() {
                return Err(GraphError::NonScalarOutput { node: x_id(op), shape: x.shape().to_vec() });
            }
            Tensor::scalar(1.0)
        }
    })
}

fn x_id(op: &Op) -> NodeId {
    op.parents().next().expect("seed has one parent")
}
