use alloc::vec::Vec;

use super::OtError;
use crate::field::ScalarField;
use crate::loss::{lsgan_optimal, LsganTargets};
use crate::math;
use crate::tensor::Tensor;

/// Objectives with a known pointwise optimal discriminator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FStarKind {
    Vanilla,
    /// Least squares with fake target `alpha` and real target `beta`.
    Lsgan {
        alpha: f64,
        beta: f64,
    },
    /// Fisher with base density value `mu` at the point and normalizer `f_mu`.
    Fisher {
        mu: f64,
        f_mu: f64,
    },
}

/// Optimal discriminator value at a point with densities `p_r`, `p_g`.
/// Vanilla returns `±∞` when one density vanishes.
pub fn closed_form_fstar(kind: FStarKind, p_r: f64, p_g: f64) -> Result<f64, OtError> {
    if !(p_r >= 0.0 && p_g >= 0.0 && p_r.is_finite() && p_g.is_finite()) {
        return Err(OtError::Contract("densities must be finite and non-negative"));
    }
    if p_r == 0.0 && p_g == 0.0 {
        return Err(OtError::Contract("densities must not both vanish"));
    }
    match kind {
        FStarKind::Vanilla => Ok(if p_g == 0.0 {
            f64::INFINITY
        } else if p_r == 0.0 {
            f64::NEG_INFINITY
        } else {
            math::ln(p_r / p_g)
        }),
        FStarKind::Lsgan { alpha, beta } => lsgan_optimal(LsganTargets { alpha, beta }, p_g, p_r)
            .map_err(|_| OtError::Contract("invalid least-squares targets")),
        FStarKind::Fisher { mu, f_mu } => {
            if !(mu > 0.0 && f_mu > 0.0) {
                return Err(OtError::Contract("fisher needs mu > 0 and a positive normalizer"));
            }
            Ok((p_r - p_g) / (mu * f_mu))
        }
    }
}

/// Ordered index pairs `(i, j)`, `i ≠ j`, whose value difference matches the
/// slope `k` within relative tolerance `tol`.
pub fn bounding_pairs(values: &[f64], points: &[Vec<f64>], k: f64, tol: f64) -> Result<Vec<(usize, usize)>, OtError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(OtError::Contract("bounding_pairs: k must be positive"));
    }
    if values.len() != points.len() {
        return Err(OtError::Contract("bounding_pairs: one value per point"));
    }
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let d = math::distance(&points[i], &points[j]);
            if d == 0.0 {
                continue;
            }
            if ((values[j] - values[i]).abs() - k * d).abs() <= tol * k * d {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineReport {
    /// Cosine between `∇f` and `y − x` at each interpolant, from `x` to `y`.
    pub cosines: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Largest `1 − cos`; 1 wherever the gradient vanishes.
    pub max_cosine_deviation: f64,
    /// Largest `|‖∇f‖ − k|`.
    pub max_slope_deviation: f64,
    pub passed: bool,
}

/// Compares `∇f` at `m` evenly spaced points of the segment `[x, y]` with
/// `k·(y − x)/‖y − x‖`. Passes when `1 − cos ≤ tol` and `|‖∇f‖ − k| ≤ tol·k`
/// everywhere.
pub fn line_gradient_check(
    field: &mut dyn ScalarField,
    x: &[f64],
    y: &[f64],
    k: f64,
    m: usize,
    tol: f64,
) -> Result<LineReport, OtError> {
    let d = field.input_dim();
    if x.len() != d || y.len() != d {
        return Err(OtError::Contract("line_gradient_check: point dimension differs from the field"));
    }
    if m < 2 {
        return Err(OtError::Contract("line_gradient_check: need at least two points"));
    }
    let dir: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - a).collect();
    let len = math::norm(&dir);
    if len == 0.0 {
        return Err(OtError::Contract("line_gradient_check: x and y coincide"));
    }
    let mut pts = Vec::with_capacity(m * d);
    for i in 0..m {
        let t = i as f64 / (m - 1) as f64;
        pts.extend(x.iter().zip(&dir).map(|(a, e)| a + t * e));
    }
    let pts = Tensor::matrix(m, d, pts).expect("m × d");
    let (_, grads) =
        field.values_and_grads(&pts).map_err(|_| OtError::Contract("line_gradient_check: field evaluation failed"))?;
    let mut cosines = Vec::with_capacity(m);
    let mut slopes = Vec::with_capacity(m);
    for g in grads.row_iter() {
        let n = math::norm(g);
        slopes.push(n);
        cosines.push(if n == 0.0 { 0.0 } else { g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / (n * len) });
    }
    let max_cosine_deviation = cosines.iter().map(|c| 1.0 - c).fold(0.0, f64::max);
    let max_slope_deviation = slopes.iter().map(|s| (s - k).abs()).fold(0.0, f64::max);
    let passed = max_cosine_deviation <= tol && max_slope_deviation <= tol * k;
    Ok(LineReport { cosines, slopes, max_cosine_deviation, max_slope_deviation, passed })
}
