use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TrainError;
use crate::tensor::Tensor;

const MASS_TOL: f64 = 1e-9;

/// Axis-aligned rectangle `[lo, hi]` in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    /// Full `d × d` covariance, row by row.
    pub cov: Vec<Vec<f64>>,
    pub weight: f64,
}

impl Gaussian {
    /// Isotropic component `N(mean, σ² I)`.
    pub fn isotropic(mean: Vec<f64>, sigma: f64, weight: f64) -> Self {
        let d = mean.len();
        let cov = (0..d).map(|i| (0..d).map(|j| if i == j { sigma * sigma } else { 0.0 }).collect()).collect();
        Self { mean, cov, weight }
    }
}

/// Synthetic sample distributions.
#[derive(Clone, Debug, PartialEq)]
pub enum SyntheticSpec {
    /// The vertical segment `{x} × [0, 1]`, uniform along it.
    ParallelLines {
        x: f64,
    },
    /// Uniform inside one of several rectangles chosen with the given masses.
    TwoDensityRegions {
        regions: Vec<Rect>,
        masses: Vec<f64>,
    },
    GaussianMixture {
        components: Vec<Gaussian>,
    },
    DiscretePoints {
        atoms: Vec<Vec<f64>>,
        masses: Vec<f64>,
    },
}

fn check_masses(masses: &[f64]) -> Result<(), TrainError> {
    if masses.is_empty() || masses.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
        return Err(TrainError::Config("masses must be non-negative and non-empty"));
    }
    if (masses.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
        return Err(TrainError::Config("masses must sum to 1"));
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` if `a` is not positive definite.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        if a[i].len() != d {
            return None;
        }
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i][j] = crate::math::sqrt(v);
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

impl SyntheticSpec {
    /// Dimension of the samples.
    pub fn dim(&self) -> usize {
        match self {
            SyntheticSpec::ParallelLines { .. } | SyntheticSpec::TwoDensityRegions { .. } => 2,
            SyntheticSpec::GaussianMixture { components } => components.first().map_or(0, |c| c.mean.len()),
            SyntheticSpec::DiscretePoints { atoms, .. } => atoms.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        match self {
            SyntheticSpec::ParallelLines { x } => {
                if !x.is_finite() {
                    return Err(TrainError::Config("line position must be finite"));
                }
            }
            SyntheticSpec::TwoDensityRegions { regions, masses } => {
                if regions.len() != masses.len() {
                    return Err(TrainError::Config("one mass per region"));
                }
                check_masses(masses)?;
                if regions.iter().any(|r| !(r.lo[0] <= r.hi[0] && r.lo[1] <= r.hi[1])) {
                    return Err(TrainError::Config("region lo must not exceed hi"));
                }
            }
            SyntheticSpec::GaussianMixture { components } => {
                let w: Vec<f64> = components.iter().map(|c| c.weight).collect();
                check_masses(&w)?;
                let d = self.dim();
                if d == 0 || components.iter().any(|c| c.mean.len() != d || c.cov.len() != d) {
                    return Err(TrainError::Config("mixture components must share one positive dimension"));
                }
                if components.iter().any(|c| cholesky(&c.cov).is_none()) {
                    return Err(TrainError::Config("covariance must be symmetric positive definite"));
                }
                let symmetric = components.iter().all(|c| (0..d).all(|i| (0..d).all(|j| c.cov[i][j] == c.cov[j][i])));
                if !symmetric {
                    return Err(TrainError::Config("covariance must be symmetric positive definite"));
                }
            }
            SyntheticSpec::DiscretePoints { atoms, masses } => {
                if atoms.len() != masses.len() {
                    return Err(TrainError::Config("one mass per atom"));
                }
                check_masses(masses)?;
                let d = self.dim();
                if d == 0 || atoms.iter().any(|a| a.len() != d) {
                    return Err(TrainError::Config("atoms must share one positive dimension"));
                }
            }
        }
        Ok(())
    }
}

fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

/// `n` i.i.d. samples as an `[n, d]` matrix.
pub fn sample_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, n: usize, rng: &mut R) -> Result<Tensor, TrainError> {
    if n == 0 {
        return Err(TrainError::Contract("sample_synthetic: n must be at least 1"));
    }
    spec.validate()?;
    let d = spec.dim();
    let mut out = Vec::with_capacity(n * d);
    match spec {
        SyntheticSpec::ParallelLines { x } => {
            for _ in 0..n {
                out.push(*x);
                out.push(rng.random::<f64>());
            }
        }
        SyntheticSpec::TwoDensityRegions { regions, masses } => {
            for _ in 0..n {
                let r = &regions[pick(masses.iter().copied(), rng)];
                for k in 0..2 {
                    let u: f64 = rng.random();
                    out.push(r.lo[k] + u * (r.hi[k] - r.lo[k]));
                }
            }
        }
        SyntheticSpec::GaussianMixture { components } => {
            let chol: Vec<Vec<Vec<f64>>> = components.iter().map(|c| cholesky(&c.cov).expect("validated")).collect();
            let mut z = vec![0.0; d];
            for _ in 0..n {
                let c = pick(components.iter().map(|c| c.weight), rng);
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                let l = &chol[c];
                for i in 0..d {
                    let s: f64 = (0..=i).map(|k| l[i][k] * z[k]).sum();
                    out.push(components[c].mean[i] + s);
                }
            }
        }
        SyntheticSpec::DiscretePoints { atoms, masses } => {
            for _ in 0..n {
                out.extend_from_slice(&atoms[pick(masses.iter().copied(), rng)]);
            }
        }
    }
    Ok(Tensor::matrix(n, d, out).expect("n × d"))
}

/// `n` standard normal vectors of dimension `d`.
pub fn sample_noise<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Tensor {
    let data = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(n, d, data).expect("n × d")
}
