//! Exact optimal transport between small discrete measures.
//!
//! [`w1_exact`] solves the transport LP; [`kr_dual`] and [`compact_dual`]
//! solve the potential LPs with the Lipschitz constraint imposed on all
//! support pairs or only from real to fake atoms. The three values agree on
//! every instance, which [`verify_duality`] checks.

mod checks;
pub mod simplex;

pub use checks::{bounding_pairs, closed_form_fstar, line_gradient_check, FStarKind, LineReport};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use simplex::{maximize, Constraint, Lp, LpError, Sense};

/// Most atoms allowed on either side of a problem.
pub const MAX_ATOMS: usize = 64;
const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum OtError {
    Invalid(&'static str),
    Capacity { atoms: usize, cap: usize },
    Contract(&'static str),
    Solver(LpError),
}

impl fmt::Display for OtError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OtError::Invalid(msg) | OtError::Contract(msg) => f.write_str(msg),
            OtError::Capacity { atoms, cap } => write!(f, "{atoms} atoms exceeds the cap of {cap} per side"),
            OtError::Solver(e) => write!(f, "linear program failed: {e:?}"),
        }
    }
}

impl core::error::Error for OtError {}

impl From<LpError> for OtError {
    fn from(e: LpError) -> Self {
        OtError::Solver(e)
    }
}

/// Finitely many distinct atoms with positive masses summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(atoms: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self, OtError> {
        if atoms.is_empty() {
            return Err(OtError::Invalid("a distribution needs at least one atom"));
        }
        if atoms.len() != masses.len() {
            return Err(OtError::Invalid("one mass per atom"));
        }
        let d = atoms[0].len();
        if d == 0 || atoms.iter().any(|a| a.len() != d) {
            return Err(OtError::Invalid("atoms must share one positive dimension"));
        }
        if atoms.iter().flatten().any(|v| !v.is_finite()) {
            return Err(OtError::Invalid("atom coordinates must be finite"));
        }
        if masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(OtError::Invalid("masses must be positive"));
        }
        if (masses.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
            return Err(OtError::Invalid("masses must sum to 1"));
        }
        for i in 0..atoms.len() {
            if atoms[..i].contains(&atoms[i]) {
                return Err(OtError::Invalid("atoms must be pairwise distinct"));
            }
        }
        Ok(Self { atoms, masses })
    }

    /// Equal masses on the given atoms.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self, OtError> {
        let n = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// Every atom moved by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let atoms = self.atoms.iter().map(|a| a.iter().zip(shift).map(|(x, s)| x + s).collect()).collect();
        Self { atoms, masses: self.masses.clone() }
    }

    /// Every atom multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let atoms = self.atoms.iter().map(|a| a.iter().map(|x| x * c).collect()).collect();
        Self { atoms, masses: self.masses.clone() }
    }
}

fn check_pair(p: &DiscreteDist, q: &DiscreteDist) -> Result<(), OtError> {
    for n in [p.len(), q.len()] {
        if n > MAX_ATOMS {
            return Err(OtError::Capacity { atoms: n, cap: MAX_ATOMS });
        }
    }
    if p.dim() != q.dim() {
        return Err(OtError::Contract("distributions live in different dimensions"));
    }
    Ok(())
}

/// Mass flows `flow[i][j]` from atom `i` of P to atom `j` of Q.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub flow: Vec<Vec<f64>>,
    pub cost: f64,
}

impl TransportPlan {
    /// Largest deviation of a row or column sum from its marginal.
    pub fn marginal_error(&self, p: &DiscreteDist, q: &DiscreteDist) -> f64 {
        let rows = self.flow.iter().zip(p.masses()).map(|(r, m)| (r.iter().sum::<f64>() - m).abs());
        let cols = q.masses().iter().enumerate().map(|(j, m)| (self.flow.iter().map(|r| r[j]).sum::<f64>() - m).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Optimal transport plan under Euclidean cost.
pub fn w1_exact(p: &DiscreteDist, q: &DiscreteDist) -> Result<TransportPlan, OtError> {
    check_pair(p, q)?;
    let (n, m) = (p.len(), q.len());
    let cost: Vec<f64> = (0..n * m).map(|k| math::distance(&p.atoms[k / m], &q.atoms[k % m])).collect();
    let mut constraints = Vec::with_capacity(n + m);
    for i in 0..n {
        let mut coeffs = vec![0.0; n * m];
        coeffs[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = 1.0);
        constraints.push(Constraint { coeffs, sense: Sense::Eq, rhs: p.masses[i] });
    }
    for j in 0..m {
        let mut coeffs = vec![0.0; n * m];
        (0..n).for_each(|i| coeffs[i * m + j] = 1.0);
        constraints.push(Constraint { coeffs, sense: Sense::Eq, rhs: q.masses[j] });
    }
    let lp = Lp { objective: cost.iter().map(|c| -c).collect(), constraints };
    let sol = maximize(&lp)?;
    let flow: Vec<Vec<f64>> = (0..n).map(|i| sol.x[i * m..(i + 1) * m].to_vec()).collect();
    let total = sol.x.iter().zip(&cost).map(|(x, c)| x * c).sum();
    Ok(TransportPlan { flow, cost: total })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DualMode {
    /// `f(u) − f(v) ≤ k·d(u, v)` for every ordered pair of support points.
    Kr,
    /// Only for `u` a real atom and `v` a fake atom.
    Compact,
}

/// Potential values on the union support (real atoms first, then fake
/// atoms not already present), normalized so the first value is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub mode: DualMode,
    pub k: f64,
    pub points: Vec<Vec<f64>>,
    pub in_real: Vec<bool>,
    pub in_fake: Vec<bool>,
    pub values: Vec<f64>,
    /// `Σ P(u)·f(u) − Σ Q(v)·f(v)`.
    pub objective: f64,
}

impl DualSolution {
    fn constrained(&self, mode: DualMode, u: usize, v: usize) -> bool {
        u != v && (mode == DualMode::Kr || (self.in_real[u] && self.in_fake[v]))
    }

    /// Largest `f(u) − f(v) − k·d(u, v)` over the pairs constrained in `mode`.
    pub fn max_violation(&self, mode: DualMode) -> f64 {
        let n = self.points.len();
        let mut worst = f64::NEG_INFINITY;
        for u in 0..n {
            for v in 0..n {
                if self.constrained(mode, u, v) {
                    let d = math::distance(&self.points[u], &self.points[v]);
                    worst = worst.max(self.values[u] - self.values[v] - self.k * d);
                }
            }
        }
        worst
    }

    pub fn is_feasible(&self, mode: DualMode, tol: f64) -> bool {
        self.max_violation(mode) <= tol
    }
}

struct Support {
    points: Vec<Vec<f64>>,
    in_real: Vec<bool>,
    in_fake: Vec<bool>,
    /// Real mass minus fake mass per point.
    weight: Vec<f64>,
}

fn union_support(p: &DiscreteDist, q: &DiscreteDist) -> Support {
    let mut points = p.atoms.clone();
    let mut in_real = vec![true; p.len()];
    let mut in_fake = vec![false; p.len()];
    let mut weight = p.masses.clone();
    for (a, &m) in q.atoms.iter().zip(&q.masses) {
        match points.iter().position(|x| x == a) {
            Some(i) => {
                in_fake[i] = true;
                weight[i] -= m;
            }
            None => {
                points.push(a.clone());
                in_real.push(false);
                in_fake.push(true);
                weight.push(-m);
            }
        }
    }
    Support { points, in_real, in_fake, weight }
}

/// Potential LP with constraint generation. Values are shifted by a box
/// bound `B` so the LP variables are non-negative and the all-`−B`
/// potential is a feasible start.
fn potential_lp(p: &DiscreteDist, q: &DiscreteDist, mode: DualMode, k: f64) -> Result<DualSolution, OtError> {
    check_pair(p, q)?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(OtError::Contract("Lipschitz bound must be positive"));
    }
    let s = union_support(p, q);
    let n = s.points.len();
    let dist: Vec<Vec<f64>> =
        s.points.iter().map(|a| s.points.iter().map(|b| math::distance(a, b)).collect()).collect();
    let diameter = dist.iter().flatten().fold(0.0, |a: f64, &b| a.max(b));
    let bound = k * diameter * n as f64 + 1.0;
    let tol = 1e-12 * (k * diameter).max(1.0);
    let allowed = |u: usize, v: usize| u != v && (mode == DualMode::Kr || (s.in_real[u] && s.in_fake[v]));

    let mut active: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        let nearest = (0..n).filter(|&v| allowed(u, v)).min_by(|&a, &b| dist[u][a].total_cmp(&dist[u][b]));
        if let Some(v) = nearest {
            active.push((u, v));
        }
    }

    loop {
        let mut constraints = Vec::with_capacity(active.len() + n);
        for &(u, v) in &active {
            let mut coeffs = vec![0.0; n];
            coeffs[u] = 1.0;
            coeffs[v] = -1.0;
            constraints.push(Constraint { coeffs, sense: Sense::Le, rhs: k * dist[u][v] });
        }
        for u in 0..n {
            let mut coeffs = vec![0.0; n];
            coeffs[u] = 1.0;
            constraints.push(Constraint { coeffs, sense: Sense::Le, rhs: 2.0 * bound });
        }
        let sol = maximize(&Lp { objective: s.weight.clone(), constraints })?;
        let g = sol.x;

        let mut violated: Vec<(f64, usize, usize)> = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if allowed(u, v) {
                    let excess = g[u] - g[v] - k * dist[u][v];
                    if excess > tol {
                        violated.push((excess, u, v));
                    }
                }
            }
        }
        if violated.is_empty() {
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo >= 2.0 * bound - tol {
                return Err(OtError::Contract("potential range reached the box bound"));
            }
            let values: Vec<f64> = g.iter().map(|x| x - g[0]).collect();
            let objective = s.weight.iter().zip(&values).map(|(w, f)| w * f).sum();
            return Ok(DualSolution {
                mode,
                k,
                points: s.points,
                in_real: s.in_real,
                in_fake: s.in_fake,
                values,
                objective,
            });
        }
        violated.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        active.extend(violated.into_iter().take(4 * n).map(|(_, u, v)| (u, v)));
    }
}

/// Maximizes `E_P f − E_Q f` over 1-Lipschitz `f` on the union support.
pub fn kr_dual(p: &DiscreteDist, q: &DiscreteDist) -> Result<DualSolution, OtError> {
    potential_lp(p, q, DualMode::Kr, 1.0)
}

/// Same objective with constraints only from atoms of P to atoms of Q.
pub fn compact_dual(p: &DiscreteDist, q: &DiscreteDist) -> Result<DualSolution, OtError> {
    potential_lp(p, q, DualMode::Compact, 1.0)
}

/// KR value with Lipschitz bound `k`.
pub fn kr_dual_k(p: &DiscreteDist, q: &DiscreteDist, k: f64) -> Result<DualSolution, OtError> {
    potential_lp(p, q, DualMode::Kr, k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityReport {
    pub primal: f64,
    pub kr: f64,
    pub compact: f64,
    pub max_gap: f64,
}

impl DualityReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_gap <= tol
    }
}

/// Runs all three solvers and reports their largest pairwise difference.
pub fn verify_duality(p: &DiscreteDist, q: &DiscreteDist) -> Result<DualityReport, OtError> {
    let primal = w1_exact(p, q)?.cost;
    let kr = kr_dual(p, q)?.objective;
    let compact = compact_dual(p, q)?.objective;
    let max_gap = (primal - kr).abs().max((primal - compact).abs()).max((kr - compact).abs());
    Ok(DualityReport { primal, kr, compact, max_gap })
}

/// `min J_D` for the linear critic objective `E_Q f − E_P f` over
/// `k`-Lipschitz and 1-Lipschitz potentials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingReport {
    pub value_at_k: f64,
    pub k_times_value_at_1: f64,
    pub gap: f64,
}

pub fn scaling_check(p: &DiscreteDist, q: &DiscreteDist, k: f64) -> Result<ScalingReport, OtError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(OtError::Contract("scaling_check: k must be positive"));
    }
    let value_at_k = -kr_dual_k(p, q, k)?.objective;
    let k_times_value_at_1 = k * -kr_dual_k(p, q, 1.0)?.objective;
    Ok(ScalingReport { value_at_k, k_times_value_at_1, gap: value_at_k - k_times_value_at_1 })
}
