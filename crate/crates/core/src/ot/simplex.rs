//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Sized for oracle work: a few hundred rows and a few thousand columns.
//! Bland's rule cannot cycle, so degenerate transport problems terminate.

use alloc::vec;
use alloc::vec::Vec;

const PIVOT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `maximize objective · x` subject to the constraints and `x ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    z: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        self.rows[r][c] = 1.0;
        let pr = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            let f = row[c];
            if i == r || f == 0.0 {
                continue;
            }
            row.iter_mut().zip(&pr).for_each(|(v, p)| *v -= f * p);
            row[c] = 0.0;
        }
        let f = self.z[c];
        if f != 0.0 {
            self.z.iter_mut().zip(&pr).for_each(|(v, p)| *v -= f * p);
            self.z[c] = 0.0;
        }
        let rhs = self.rhs();
        for row in &mut self.rows {
            if row[rhs] < 0.0 && row[rhs] > -PIVOT_EPS {
                row[rhs] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs Bland's rule over columns `< allowed` until optimal.
    fn optimize(&mut self, allowed: usize, limit: usize) -> Result<(), LpError> {
        let rhs = self.rhs();
        loop {
            let Some(c) = (0..allowed).find(|&j| self.z[j] > PIVOT_EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = row[rhs] / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = best else {
                return Err(LpError::Unbounded);
            };
            if self.pivots >= limit {
                return Err(LpError::IterationLimit);
            }
            self.pivot(r, c);
        }
    }

    fn load_objective(&mut self, c: &[f64]) {
        let rhs = self.rhs();
        self.z = vec![0.0; self.width];
        self.z[..c.len()].copy_from_slice(c);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = c.get(b).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..self.width {
                    self.z[j] -= cb * row[j];
                }
            }
        }
        self.z[rhs] = -self
            .rows
            .iter()
            .zip(&self.basis)
            .map(|(row, &b)| c.get(b).copied().unwrap_or(0.0) * row[rhs])
            .sum::<f64>();
    }
}

pub fn maximize(lp: &Lp) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    let mut senses = Vec::with_capacity(m);
    let mut norm_rows = Vec::with_capacity(m);
    for c in &lp.constraints {
        debug_assert_eq!(c.coeffs.len(), n);
        if c.rhs < 0.0 {
            let flipped = match c.sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
            senses.push(flipped);
            norm_rows.push((c.coeffs.iter().map(|v| -v).collect::<Vec<f64>>(), -c.rhs));
        } else {
            senses.push(c.sense);
            norm_rows.push((c.coeffs.clone(), c.rhs));
        }
    }
    let n_slack = senses.iter().filter(|s| **s != Sense::Eq).count();
    let n_art = senses.iter().filter(|s| **s != Sense::Le).count();
    let art0 = n + n_slack;
    let width = art0 + n_art + 1;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut s, mut a) = (n, art0);
    for ((coeffs, b), sense) in norm_rows.into_iter().zip(&senses) {
        let mut row = vec![0.0; width];
        row[..n].copy_from_slice(&coeffs);
        row[width - 1] = b;
        match sense {
            Sense::Le => {
                row[s] = 1.0;
                basis.push(s);
                s += 1;
            }
            Sense::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                basis.push(a);
                a += 1;
            }
            Sense::Eq => {
                row[a] = 1.0;
                basis.push(a);
                a += 1;
            }
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, z: Vec::new(), basis, width, pivots: 0 };
    let limit = 200 * (m + width) + 10_000;

    if n_art > 0 {
        let mut phase1 = vec![0.0; art0 + n_art];
        phase1[art0..].iter_mut().for_each(|v| *v = -1.0);
        t.load_objective(&phase1);
        t.optimize(art0 + n_art, limit)?;
        let scale = t.rows.iter().map(|r| r[width - 1].abs()).fold(1.0, f64::max);
        if -t.z[width - 1] < -1e-9 * scale {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop rows that
        // only they can cover (redundant equalities).
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= art0 {
                match (0..art0).find(|&j| t.rows[i][j].abs() > 1e-9) {
                    Some(j) => t.pivot(i, j),
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
    t.load_objective(&lp.objective);
    t.optimize(art0, limit)?;

    let mut x = vec![0.0; n];
    for (row, &b) in t.rows.iter().zip(&t.basis) {
        if b < n {
            x[b] = row[width - 1].max(0.0);
        }
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, value, pivots: t.pivots })
}
