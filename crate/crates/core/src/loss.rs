//! Discriminator/generator loss family.
//!
//! The critic minimizes `E_{P_g} φ(f(x)) + E_{P_r} ϕ(f(x))` and the generator
//! minimizes `E ψ(f(g(z)))` with `ψ(x) = −x`. Here `φ` is [`LossMetric::phi`]
//! (applied to fake samples) and `ϕ` is [`LossMetric::varphi`] (applied to
//! real samples). Every kind in this module satisfies `ϕ(x) = φ(−x)`.
//!
//! A pair is *admissible* when `φ′ > 0`, `ϕ′ < 0`, `φ″ ≥ 0`, `ϕ″ ≥ 0` and
//! there is some `a` with `φ′(a) + ϕ′(a) = 0`.

use core::fmt;
use core::str::FromStr;

use crate::autodiff::{ExprGraph, NodeId};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `φ(x) = x` (the Wasserstein critic loss).
    Linear,
    /// `φ(x) = −log σ(−x) = log(1 + eˣ)`.
    Logistic,
    /// `φ(x) = x + √(x² + 1)`.
    SqrtSoftplus,
    /// `φ(x) = eˣ`.
    Exponential,
    /// `φ(x) = (x + α)²`.
    Quadratic,
    /// `φ(x) = max(0, x + α)`.
    Hinge,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Linear,
        LossKind::Logistic,
        LossKind::SqrtSoftplus,
        LossKind::Exponential,
        LossKind::Quadratic,
        LossKind::Hinge,
    ];

    /// Name used in configuration files.
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Linear => "linear",
            LossKind::Logistic => "logistic",
            LossKind::SqrtSoftplus => "sqrt_softplus",
            LossKind::Exponential => "exp",
            LossKind::Quadratic => "quadratic",
            LossKind::Hinge => "hinge",
        }
    }

    /// Whether the kind takes the offset `α`.
    pub fn has_alpha(self) -> bool {
        matches!(self, LossKind::Quadratic | LossKind::Hinge)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, LossError> {
        LossKind::ALL.into_iter().find(|k| k.name() == s).ok_or(LossError::UnknownKind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossError {
    UnknownKind,
    /// `α` given for a kind without one, or missing for quadratic/hinge.
    Alpha {
        kind: LossKind,
        given: bool,
    },
    Contract(&'static str),
    /// The pointwise objective has no lower bound.
    Unbounded,
    /// The infimum is approached only as `t → ±∞` (one density is zero).
    NotAttained,
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossError::UnknownKind => {
                f.write_str("unknown metric kind (expected linear, logistic, sqrt_softplus, exp, quadratic or hinge)")
            }
            LossError::Alpha { kind, given: true } => write!(f, "metric `{kind}` takes no alpha"),
            LossError::Alpha { kind, given: false } => write!(f, "metric `{kind}` requires alpha"),
            LossError::Contract(msg) => f.write_str(msg),
            LossError::Unbounded => f.write_str("pointwise objective is unbounded below"),
            LossError::NotAttained => f.write_str("pointwise infimum is not attained at a finite value"),
        }
    }
}

impl core::error::Error for LossError {}

/// A concrete `(φ, ϕ, ψ)` triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossMetric {
    kind: LossKind,
    alpha: f64,
}

/// Builds the metric; `alpha` must be given exactly for quadratic and hinge.
pub fn make_metric(kind: LossKind, alpha: Option<f64>) -> Result<LossMetric, LossError> {
    match (kind.has_alpha(), alpha) {
        (true, Some(a)) if a.is_finite() => Ok(LossMetric { kind, alpha: a }),
        (true, Some(_)) => Err(LossError::Contract("alpha must be finite")),
        (false, None) => Ok(LossMetric { kind, alpha: 0.0 }),
        (_, given) => Err(LossError::Alpha { kind, given: given.is_some() }),
    }
}

impl LossMetric {
    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn alpha(&self) -> Option<f64> {
        self.kind.has_alpha().then_some(self.alpha)
    }

    /// `[φ, φ′, φ″]` at `x`.
    fn phi_all(&self, x: f64) -> [f64; 3] {
        let a = self.alpha;
        match self.kind {
            LossKind::Linear => [x, 1.0, 0.0],
            LossKind::Logistic => {
                let s = math::sigmoid(x);
                [math::softplus(x), s, s * math::sigmoid(-x)]
            }
            LossKind::SqrtSoftplus => {
                let r = math::sqrt(x * x + 1.0);
                [x + r, 1.0 + x / r, 1.0 / (r * r * r)]
            }
            LossKind::Exponential => {
                let e = math::exp(x);
                [e, e, e]
            }
            LossKind::Quadratic => [(x + a) * (x + a), 2.0 * (x + a), 2.0],
            LossKind::Hinge => {
                if x + a > 0.0 {
                    [x + a, 1.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0]
                }
            }
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.phi_all(x)[0]
    }

    pub fn phi_d1(&self, x: f64) -> f64 {
        self.phi_all(x)[1]
    }

    pub fn phi_d2(&self, x: f64) -> f64 {
        self.phi_all(x)[2]
    }

    /// `ϕ(x) = φ(−x)`.
    pub fn varphi(&self, x: f64) -> f64 {
        self.phi(-x)
    }

    pub fn varphi_d1(&self, x: f64) -> f64 {
        -self.phi_d1(-x)
    }

    pub fn varphi_d2(&self, x: f64) -> f64 {
        self.phi_d2(-x)
    }

    pub fn psi(&self, x: f64) -> f64 {
        -x
    }

    pub fn psi_d1(&self, _x: f64) -> f64 {
        -1.0
    }

    pub fn psi_d2(&self, _x: f64) -> f64 {
        0.0
    }

    /// Appends `φ` applied elementwise to `x`.
    pub fn phi_node(&self, g: &mut ExprGraph, x: NodeId) -> NodeId {
        match self.kind {
            LossKind::Linear => x,
            LossKind::Logistic => g.softplus(x),
            LossKind::SqrtSoftplus => {
                let sq = g.square(x);
                let sq = g.offset(sq, 1.0);
                let r = g.sqrt(sq);
                g.add(x, r)
            }
            LossKind::Exponential => g.exp(x),
            LossKind::Quadratic => {
                let s = g.offset(x, self.alpha);
                g.square(s)
            }
            LossKind::Hinge => {
                let s = g.offset(x, self.alpha);
                g.relu(s)
            }
        }
    }

    /// Appends `ϕ` applied elementwise to `x`.
    pub fn varphi_node(&self, g: &mut ExprGraph, x: NodeId) -> NodeId {
        let n = g.neg(x);
        self.phi_node(g, n)
    }
}

/// Outcome of the admissibility conditions on a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibilityReport {
    /// `φ′ > 0` and `ϕ′ < 0` at every grid point.
    pub strictly_monotone: (bool, bool),
    /// `φ″ ≥ 0` and `ϕ″ ≥ 0` at every grid point.
    pub convex: (bool, bool),
    /// Some `a` with `φ′(a) + ϕ′(a) = 0`.
    pub balance_point: Option<f64>,
    pub admissible: bool,
}

pub const DEFAULT_GRID: (f64, f64, f64) = (-10.0, 10.0, 0.01);

/// Evaluates the admissibility conditions on `lo, lo + step, …, hi`.
///
/// The balance point is the first grid point where `φ′ + ϕ′` is exactly
/// zero, otherwise the bisection root inside the first sign change.
pub fn check_admissible(metric: &LossMetric, lo: f64, hi: f64, step: f64) -> Result<AdmissibilityReport, LossError> {
    if !(lo < hi) || !(step > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(LossError::Contract("check_admissible: need lo < hi and step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9) as usize;
    let grid = (0..=n).map(|i| if i == n { hi.min(lo + i as f64 * step) } else { lo + i as f64 * step });

    let mut inc = true;
    let mut dec = true;
    let mut cvx = (true, true);
    let balance = |x: f64| metric.phi_d1(x) + metric.varphi_d1(x);
    let mut balance_point = None;
    let mut prev: Option<(f64, f64)> = None;
    for x in grid {
        inc &= metric.phi_d1(x) > 0.0;
        dec &= metric.varphi_d1(x) < 0.0;
        cvx.0 &= metric.phi_d2(x) >= 0.0;
        cvx.1 &= metric.varphi_d2(x) >= 0.0;
        let h = balance(x);
        if balance_point.is_none() {
            if h == 0.0 {
                balance_point = Some(x);
            } else if let Some((px, ph)) = prev {
                if ph.signum() != h.signum() {
                    balance_point = Some(bisect(balance, px, x));
                }
            }
        }
        prev = Some((x, h));
    }
    Ok(AdmissibilityReport {
        strictly_monotone: (inc, dec),
        convex: cvx,
        balance_point,
        admissible: inc && dec && cvx.0 && cvx.1 && balance_point.is_some(),
    })
}

/// Root of `h` on `[lo, hi]` given a sign change, to full precision.
fn bisect(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_sign = h(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = h(mid);
        if v == 0.0 {
            return mid;
        }
        if v.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `mean φ(f_fake) + mean ϕ(f_real)`, without any penalty term.
pub fn disc_objective(metric: &LossMetric, f_fake: &[f64], f_real: &[f64]) -> Result<f64, LossError> {
    if f_fake.is_empty() || f_real.is_empty() {
        return Err(LossError::Contract("disc_objective: empty batch"));
    }
    let fake: f64 = f_fake.iter().map(|&x| metric.phi(x)).sum::<f64>() / f_fake.len() as f64;
    let real: f64 = f_real.iter().map(|&x| metric.varphi(x)).sum::<f64>() / f_real.len() as f64;
    Ok(fake + real)
}

/// `mean ψ(f_fake) = −mean f_fake`.
pub fn gen_objective(f_fake: &[f64]) -> Result<f64, LossError> {
    if f_fake.is_empty() {
        return Err(LossError::Contract("gen_objective: empty batch"));
    }
    Ok(-mean(f_fake))
}

fn check_densities(p_g: f64, p_r: f64) -> Result<(), LossError> {
    if !(p_g >= 0.0 && p_r >= 0.0 && p_g + p_r > 0.0) || !p_g.is_finite() || !p_r.is_finite() {
        return Err(LossError::Contract("densities must be non-negative and not both zero"));
    }
    Ok(())
}

/// The value `t` minimizing `p_g·φ(t) + p_r·ϕ(t)`, by closed form.
///
/// For the logistic (vanilla) pair this is `log(p_r / p_g)`.
pub fn pointwise_optimal(metric: &LossMetric, p_g: f64, p_r: f64) -> Result<f64, LossError> {
    check_densities(p_g, p_r)?;
    let a = metric.alpha;
    match metric.kind {
        LossKind::Linear if p_g == p_r => Ok(0.0),
        LossKind::Linear => Err(LossError::Unbounded),
        LossKind::Quadratic => Ok(a * (p_r - p_g) / (p_r + p_g)),
        LossKind::Hinge => Ok(if p_r > p_g {
            a
        } else if p_r < p_g {
            -a
        } else {
            0.0
        }),
        _ if p_g == 0.0 || p_r == 0.0 => Err(LossError::NotAttained),
        LossKind::Logistic => Ok(math::ln(p_r) - math::ln(p_g)),
        LossKind::Exponential => Ok(0.5 * (math::ln(p_r) - math::ln(p_g))),
        LossKind::SqrtSoftplus => {
            // φ′ + ϕ′ weighted: p_g(1 + u) + p_r(u − 1) = 0 with u = t/√(t²+1).
            let u = (p_r - p_g) / (p_r + p_g);
            Ok(u / math::sqrt((1.0 - u) * (1.0 + u)))
        }
    }
}

/// [`pointwise_optimal`] by numerical minimization: bisection on the
/// derivative `p_g·φ′(t) + p_r·ϕ′(t)`, which is non-decreasing in `t`.
pub fn pointwise_optimal_numeric(metric: &LossMetric, p_g: f64, p_r: f64) -> Result<f64, LossError> {
    check_densities(p_g, p_r)?;
    let d = |t: f64| p_g * metric.phi_d1(t) + p_r * metric.varphi_d1(t);
    match metric.kind {
        LossKind::Linear | LossKind::Hinge => return pointwise_optimal(metric, p_g, p_r),
        LossKind::Quadratic => {}
        _ if p_g == 0.0 || p_r == 0.0 => return Err(LossError::NotAttained),
        _ => {}
    }
    let mut hi = 1.0;
    while d(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(LossError::NotAttained);
        }
    }
    let mut lo = -1.0;
    while d(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e12 {
            return Err(LossError::NotAttained);
        }
    }
    if d(lo) == 0.0 {
        return Ok(lo);
    }
    if d(hi) == 0.0 {
        return Ok(hi);
    }
    Ok(bisect(d, lo, hi))
}

/// Targets of the least-squares pair `φ(x) = (x − α)²`, `ϕ(x) = (x − β)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsganTargets {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LsganTargets {
    fn default() -> Self {
        Self { alpha: 0.0, beta: 1.0 }
    }
}

/// Minimizer of `p_g·(t − α)² + p_r·(t − β)²`.
pub fn lsgan_optimal(targets: LsganTargets, p_g: f64, p_r: f64) -> Result<f64, LossError> {
    check_densities(p_g, p_r)?;
    Ok((targets.alpha * p_g + targets.beta * p_r) / (p_r + p_g))
}
