use alloc::vec;
use alloc::vec::Vec;

use super::TrainError;
use crate::math;

/// Population standard deviation of the last `window` entries of `series`.
pub fn drift_statistic(series: &[f64], window: usize) -> Result<f64, TrainError> {
    if window == 0 {
        return Err(TrainError::Contract("drift_statistic: window must be at least 1"));
    }
    if window > series.len() {
        return Err(TrainError::Contract("drift_statistic: window exceeds series length"));
    }
    let tail = &series[series.len() - window..];
    let n = window as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(math::sqrt(var))
}

/// Fraction of `samples` whose nearest mode is each entry of `modes`.
pub fn mode_coverage<'a, I>(samples: I, modes: &[Vec<f64>]) -> Result<Vec<f64>, TrainError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if modes.is_empty() {
        return Err(TrainError::Contract("mode_coverage: no modes"));
    }
    let mut counts = vec![0usize; modes.len()];
    let mut total = 0usize;
    for s in samples {
        if modes.iter().any(|m| m.len() != s.len()) {
            return Err(TrainError::Contract("mode_coverage: dimension mismatch"));
        }
        let best = modes
            .iter()
            .map(|m| math::distance(m, s))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("non-empty");
        counts[best] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(TrainError::Contract("mode_coverage: no samples"));
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Cosine between each gradient and the direction from its point to the
/// nearest target. Zero gradients or points sitting on a target give 0.
pub fn direction_cosines(
    points: &[[f64; 2]],
    grads: &[[f64; 2]],
    targets: &[[f64; 2]],
) -> Result<Vec<f64>, TrainError> {
    if points.len() != grads.len() {
        return Err(TrainError::Contract("direction_cosines: points and gradients differ in length"));
    }
    if targets.is_empty() {
        return Err(TrainError::Contract("direction_cosines: no targets"));
    }
    let out = points
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            let t = targets
                .iter()
                .min_by(|a, b| math::distance(*a, p).total_cmp(&math::distance(*b, p)))
                .expect("non-empty");
            let d = [t[0] - p[0], t[1] - p[1]];
            let (nd, ng) = (math::norm(&d), math::norm(g));
            if nd == 0.0 || ng == 0.0 {
                0.0
            } else {
                (d[0] * g[0] + d[1] * g[1]) / (nd * ng)
            }
        })
        .collect();
    Ok(out)
}
