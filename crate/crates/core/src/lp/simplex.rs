//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Sized for the per-epoch programs of this crate: a few dozen columns and a
//! handful of rows. Every variable is nonnegative.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective . x` subject to `rows`, `x >= 0`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.rows.push(Row { coeffs, relation, rhs });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Optimal { x: Vec<f64>, objective: f64, pivots: usize },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplexError {
    #[error("pivot budget of {0} exhausted")]
    PivotBudget(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Column {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    /// `rows x (cols + 1)`, rhs in the last column.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    kinds: Vec<Column>,
    tol: f64,
    pivots: usize,
    budget: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn cols(&self) -> usize {
        self.kinds.len()
    }

    fn rhs(&self, i: usize) -> f64 {
        self.a[i][self.cols()]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.cols() + 1;
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for j in 0..width {
                    r[j] -= factor * pivot_row[j];
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Maximize `cost . x` from the current basic feasible solution.
    fn run(&mut self, cost: &[f64], allowed: impl Fn(usize) -> bool) -> Result<PhaseEnd, SimplexError> {
        loop {
            if self.pivots >= self.budget {
                return Err(SimplexError::PivotBudget(self.budget));
            }
            // Bland: smallest-index column with positive reduced cost.
            let entering = (0..self.cols()).filter(|&j| allowed(j)).find(|&j| {
                let reduced = cost[j]
                    - self
                        .a
                        .iter()
                        .zip(&self.basis)
                        .map(|(r, &b)| cost[b] * r[j])
                        .sum::<f64>();
                reduced > self.tol
            });
            let Some(col) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            // Ratio test; ties go to the smallest basic index.
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let coef = self.a[i][col];
                if coef <= self.tol {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / coef;
                leaving = match leaving {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - self.tol || (ratio <= best + self.tol && self.basis[i] < self.basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((row, _)) = leaving else {
                return Ok(PhaseEnd::Unbounded);
            };
            self.pivot(row, col);
        }
    }
}

/// Solve `lp` with feasibility and optimality tolerance `tol`.
pub fn solve(lp: &LinearProgram, tol: f64) -> Result<Outcome, SimplexError> {
    let n = lp.objective.len();
    let m = lp.rows.len();

    // Normalize to nonnegative right-hand sides.
    let rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .rows
        .iter()
        .map(|r| {
            if r.rhs < 0.0 {
                let flipped = match r.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (r.coeffs.iter().map(|v| -v).collect(), flipped, -r.rhs)
            } else {
                (r.coeffs.clone(), r.relation, r.rhs)
            }
        })
        .collect();

    let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let artificials = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + slacks + artificials;
    let mut kinds = vec![Column::Structural; n];
    kinds.extend(std::iter::repeat_n(Column::Slack, slacks));
    kinds.extend(std::iter::repeat_n(Column::Artificial, artificials));

    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let (mut next_slack, mut next_art) = (n, n + slacks);
    for (i, (coeffs, relation, rhs)) in rows.iter().enumerate() {
        a[i][..n].copy_from_slice(coeffs);
        a[i][cols] = *rhs;
        match relation {
            Relation::Le => {
                a[i][next_slack] = 1.0;
                basis[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                a[i][next_slack] = -1.0;
                next_slack += 1;
                a[i][next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                a[i][next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            }
        }
    }

    let mut tab = Tableau {
        a,
        basis,
        kinds,
        tol,
        pivots: 0,
        budget: 1_000 + 50 * (m + cols),
    };

    if artificials > 0 {
        let phase1: Vec<f64> = tab
            .kinds
            .iter()
            .map(|k| if *k == Column::Artificial { -1.0 } else { 0.0 })
            .collect();
        tab.run(&phase1, |_| true)?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.kinds[tab.basis[i]] == Column::Artificial)
            .map(|i| tab.rhs(i))
            .sum();
        if infeasibility > tol {
            return Ok(Outcome::Infeasible);
        }
        // Drive remaining (zero-level) artificials out of the basis; rows
        // that cannot pivot are redundant and dropped.
        let mut i = 0;
        while i < tab.a.len() {
            if tab.kinds[tab.basis[i]] == Column::Artificial {
                let col = (0..cols)
                    .filter(|&j| tab.kinds[j] != Column::Artificial)
                    .max_by(|&j, &k| tab.a[i][j].abs().total_cmp(&tab.a[i][k].abs()))
                    .filter(|&j| tab.a[i][j].abs() > tol);
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.a.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    let kinds = tab.kinds.clone();
    match tab.run(&cost, |j| kinds[j] != Column::Artificial)? {
        PhaseEnd::Unbounded => Ok(Outcome::Unbounded),
        PhaseEnd::Optimal => {
            let mut x = vec![0.0; n];
            for (i, &b) in tab.basis.iter().enumerate() {
                if b < n {
                    x[b] = tab.a[i][cols].max(0.0);
                }
            }
            let objective = x.iter().zip(&lp.objective).map(|(v, c)| v * c).sum();
            Ok(Outcome::Optimal {
                x,
                objective,
                pivots: tab.pivots,
            })
        }
    }
}
