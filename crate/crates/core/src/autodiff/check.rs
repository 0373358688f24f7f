use alloc::vec::Vec;

use super::{ExprGraph, GraphError, NodeId, Op};

/// Magnitudes below this are treated as this size when forming relative
/// errors, so that two tiny values count as agreeing.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Finite-difference comparison for one input tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    /// Coordinates that were checked, as flat indices into the input.
    pub coords: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_errors: Vec<f64>,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// Compares [`ExprGraph::gradient`] against central differences with step
/// `epsilon` on every coordinate of the input `wrt`.
pub fn fd_check(graph: &mut ExprGraph, output: NodeId, wrt: NodeId, epsilon: f64) -> Result<FdReport, GraphError> {
    let n = bound_input(graph, wrt)?.numel();
    fd_check_coords(graph, output, wrt, epsilon, &(0..n).collect::<Vec<_>>())
}

/// [`fd_check`] restricted to the flat indices in `coords`.
pub fn fd_check_coords(
    graph: &mut ExprGraph,
    output: NodeId,
    wrt: NodeId,
    epsilon: f64,
    coords: &[usize],
) -> Result<FdReport, GraphError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(GraphError::Contract("fd_check: epsilon must be positive"));
    }
    let base = bound_input(graph, wrt)?.clone();
    if coords.iter().any(|&c| c >= base.numel()) {
        return Err(GraphError::Contract("fd_check: coordinate out of range"));
    }
    let grad = graph.gradient(output, &[wrt])?.remove(0);

    let mut numeric = Vec::with_capacity(coords.len());
    let probe = |graph: &mut ExprGraph, c: usize, h: f64| -> Result<f64, GraphError> {
        let mut x = base.clone();
        x.data_mut()[c] += h;
        graph.bind(wrt, x)?;
        let v = graph.eval(output)?.item().ok_or(GraphError::NonScalarOutput {
            node: output,
            shape: graph.value(output).map(|t| t.shape().to_vec()).unwrap_or_default(),
        })?;
        Ok(v)
    };
    let mut result = Ok(());
    for &c in coords {
        let pair = probe(graph, c, epsilon).and_then(|up| Ok((up, probe(graph, c, -epsilon)?)));
        match pair {
            Ok((up, down)) => numeric.push((up - down) / (2.0 * epsilon)),
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    graph.bind(wrt, base)?;
    graph.eval(output)?;
    result?;

    let analytic: Vec<f64> = coords.iter().map(|&c| grad.data()[c]).collect();
    let rel_errors: Vec<f64> = analytic.iter().zip(&numeric).map(|(&a, &b)| relative_error(a, b)).collect();
    let max_rel_error = rel_errors.iter().copied().fold(0.0, f64::max);
    let mean_rel_error =
        if rel_errors.is_empty() { 0.0 } else { rel_errors.iter().sum::<f64>() / rel_errors.len() as f64 };
    Ok(FdReport { coords: coords.to_vec(), analytic, numeric, rel_errors, max_rel_error, mean_rel_error })
}

fn bound_input(graph: &ExprGraph, id: NodeId) -> Result<&crate::Tensor, GraphError> {
    let node = graph.nodes.get(id.0).ok_or(GraphError::UnknownNode(id))?;
    match &node.op {
        Op::Input { name } => node.value.as_ref().ok_or_else(|| GraphError::Unbound { node: id, name: name.clone() }),
        _ => Err(GraphError::NotAnInput(id)),
    }
}
