//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `max cᵀx` subject to rows `aᵢᵀx {≤,≥,=} bᵢ` and `x ≥ 0`, and reports
//! the row duals read off the optimal basis. Meant for the small welfare
//! programs in this crate (tens of rows, a few hundred columns).

use serde::Serialize;

/// Smallest pivot element accepted.
pub const PIVOT_TOL: f64 = 1e-9;
/// Reduced costs below this count as non-improving.
const COST_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("row {row} has {got} coefficients, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite coefficient in the program")]
    NonFinite,
    #[error("pivot limit reached")]
    PivotLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `max objective · x` over `x ≥ 0` and the constraint rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row: `≥ 0` for `≤` rows, `≤ 0` for `≥` rows, free
    /// for equalities. `Σ duals·rhs` equals the optimum at optimality.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        self.duals
            .iter()
            .zip(&lp.constraints)
            .map(|(y, c)| y * c.rhs)
            .sum()
    }
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.num_vars();
        for (row, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::DimensionMismatch {
                    row,
                    expected: n,
                    got: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite);
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    /// `rows[i]` holds the constraint coefficients followed by the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Column that started as the unit vector of each row.
    identity: Vec<usize>,
    /// Row sign flips applied to make every rhs non-negative.
    sign: Vec<f64>,
    artificial: Vec<bool>,
    num_cols: usize,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let extra: usize = lp
            .constraints
            .iter()
            .map(|c| match (c.relation, c.rhs < 0.0) {
                (Relation::Ge, false) | (Relation::Le, true) => 2,
                _ => 1,
            })
            .sum();
        let num_cols = n + extra;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut identity = Vec::with_capacity(m);
        let mut sign = Vec::with_capacity(m);
        let mut artificial = vec![false; num_cols];
        let mut next = n;
        for c in &lp.constraints {
            let s = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            let relation = match (c.relation, s < 0.0) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            };
            let mut row = vec![0.0; num_cols + 1];
            for (j, &a) in c.coeffs.iter().enumerate() {
                row[j] = s * a;
            }
            row[num_cols] = s * c.rhs;
            match relation {
                Relation::Le => {
                    row[next] = 1.0;
                    identity.push(next);
                    next += 1;
                }
                Relation::Ge => {
                    row[next] = -1.0;
                    row[next + 1] = 1.0;
                    artificial[next + 1] = true;
                    identity.push(next + 1);
                    next += 2;
                }
                Relation::Eq => {
                    row[next] = 1.0;
                    artificial[next] = true;
                    identity.push(next);
                    next += 1;
                }
            }
            basis.push(*identity.last().unwrap());
            sign.push(s);
            rows.push(row);
        }
        Self {
            rows,
            basis,
            identity,
            sign,
            artificial,
            num_cols,
            pivots: 0,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.num_cols]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
        self.pivots += 1;
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        cost[j]
            - self
                .rows
                .iter()
                .zip(&self.basis)
                .map(|(row, &b)| cost[b] * row[j])
                .sum::<f64>()
    }

    /// Primal simplex on `cost` (maximization), entering only where allowed.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<(), LpError> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(LpError::PivotLimit);
            }
            let mut in_basis = vec![false; self.num_cols];
            for &b in &self.basis {
                in_basis[b] = true;
            }
            // Bland: lowest-index improving column.
            let Some(col) = (0..self.num_cols)
                .find(|&j| allowed[j] && !in_basis[j] && self.reduced_cost(cost, j) > COST_TOL)
            else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        if ratio < best && !tie || tie && self.basis[i] < self.basis[k] {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let n = lp.num_vars();
        let m = self.rows.len();
        let scale = 1.0
            + lp.constraints
                .iter()
                .map(|c| c.rhs.abs())
                .fold(0.0, f64::max);

        if self.artificial.iter().any(|&a| a) {
            let phase1: Vec<f64> = self
                .artificial
                .iter()
                .map(|&a| if a { -1.0 } else { 0.0 })
                .collect();
            let everything = vec![true; self.num_cols];
            self.optimize(&phase1, &everything)?;
            let infeasibility: f64 = (0..m)
                .filter(|&i| self.artificial[self.basis[i]])
                .map(|i| self.rhs(i))
                .sum();
            if infeasibility > 1e-9 * scale {
                return Err(LpError::Infeasible);
            }
            // Pivot zero-level artificials out where a real column can replace them.
            for i in 0..m {
                if !self.artificial[self.basis[i]] {
                    continue;
                }
                if let Some(col) = (0..self.num_cols)
                    .find(|&j| !self.artificial[j] && self.rows[i][j].abs() > PIVOT_TOL)
                {
                    self.pivot(i, col);
                }
            }
        }

        let mut cost = vec![0.0; self.num_cols];
        cost[..n].copy_from_slice(&lp.objective);
        let allowed: Vec<bool> = self.artificial.iter().map(|&a| !a).collect();
        self.optimize(&cost, &allowed)?;

        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs(i).max(0.0);
            }
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let duals = (0..m)
            .map(|i| {
                let col = self.identity[i];
                let y: f64 = self
                    .rows
                    .iter()
                    .zip(&self.basis)
                    .map(|(row, &b)| cost[b] * row[col])
                    .sum();
                self.sign[i] * y
            })
            .collect();
        Ok(LpSolution {
            x,
            objective,
            duals,
            pivots: self.pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36; duals (0, 1.5, 1).
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.push(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.push(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.push(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!(close(s.objective, 36.0));
        assert!(close(s.x[0], 2.0) && close(s.x[1], 6.0));
        assert!(close(s.duals[0], 0.0) && close(s.duals[1], 1.5) && close(s.duals[2], 1.0));
        assert!(close(s.dual_objective(&lp), 36.0));
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + 2y, x + y = 1, y ≥ 0.25, y ≤ 0.75 → y = 0.75.
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.push(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.push(vec![0.0, 1.0], Relation::Ge, 0.25);
        lp.push(vec![0.0, 1.0], Relation::Le, 0.75);
        let s = lp.solve().unwrap();
        assert!(close(s.objective, 1.75));
        assert!(close(s.dual_objective(&lp), 1.75));
        assert!(s.duals[1] <= 1e-12);
        assert!(s.duals[2] >= -1e-12);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // max −x, −x ≤ −2 → x = 2.
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.push(vec![-1.0], Relation::Le, -2.0);
        let s = lp.solve().unwrap();
        assert!(close(s.x[0], 2.0));
        assert!(close(s.duals[0], 1.0));
        assert!(close(s.dual_objective(&lp), -2.0));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.push(vec![1.0], Relation::Le, 1.0);
        lp.push(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(lp.solve(), Err(LpError::Infeasible));

        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.push(vec![0.0, 1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.push(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.push(vec![2.0, 2.0], Relation::Eq, 2.0);
        let s = lp.solve().unwrap();
        assert!(close(s.objective, 1.0));
        assert!(close(s.dual_objective(&lp), 1.0));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook rule; Bland terminates.
        let mut lp = LinearProgram::new(vec![0.75, -150.0, 0.02, -6.0]);
        lp.push(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.push(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.push(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!(close(s.objective, 0.05));
        assert!(close(s.dual_objective(&lp), 0.05));
    }

    #[test]
    fn dimension_mismatch() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.push(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(LpError::DimensionMismatch { .. })));
    }
}
