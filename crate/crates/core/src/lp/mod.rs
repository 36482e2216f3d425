//! The per-policy linear program and its per-epoch decomposition.
//!
//! Given the factors of a policy `d`, the program chooses a new policy `d~`
//! to optimize `sum_t f_t(d~; reward)` subject to `f_t(d~; constraint) <= B`
//! for every decision epoch. Since `f_t` only involves `d~_t`, the program
//! separates exactly into one small program per epoch: one simplex row
//! `sum_a d~(x, a) = 1` per state plus the single coupling row.

pub mod simplex;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::evaluate::{BackwardFactors, FactorSet, ForwardFactors};
use crate::model::{CostKind, Policy, RiskCmdpInstance, Sense};
use simplex::{LinearProgram, Outcome, Relation, SimplexError};

/// Default feasibility and optimality tolerance of the epoch programs.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("epoch {epoch}: the constraint row cannot be met (min achievable {min_achievable:.6e} > bound {bound:.6e})")]
    Infeasible {
        epoch: usize,
        min_achievable: f64,
        bound: f64,
    },
    #[error("epoch {epoch}: {source}")]
    Solver {
        epoch: usize,
        #[source]
        source: SimplexError,
    },
    #[error("epoch {epoch}: simplex reported an unbounded program")]
    Unbounded { epoch: usize },
}

/// One epoch of the decomposed program.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLp {
    pub epoch: usize,
    /// `o(x, a) = theta_r(x) Q_r(x, a)`.
    pub objective: Vec<Vec<f64>>,
    /// `g(x, a) = theta_c(x) Q_c(x, a)`.
    pub constraint: Vec<Vec<f64>>,
    pub bound: f64,
    pub sense: Sense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// `d~(x, a)`; empty when infeasible.
    pub rule: Vec<Vec<f64>>,
    pub objective: f64,
    pub constraint_value: f64,
    /// `true` when the coupling row holds with equality (within tolerance).
    pub active: bool,
}

fn outer(theta: &[f64], q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    theta
        .iter()
        .zip(q)
        .map(|(th, row)| row.iter().map(|v| th * v).collect())
        .collect()
}

pub fn build_epoch_lp(
    epoch: usize,
    reward_forward: &ForwardFactors,
    reward_backward: &BackwardFactors,
    constraint_forward: &ForwardFactors,
    constraint_backward: &BackwardFactors,
    bound: f64,
    sense: Sense,
) -> EpochLp {
    EpochLp {
        epoch,
        objective: outer(&reward_forward.theta[epoch], &reward_backward.q[epoch]),
        constraint: outer(&constraint_forward.theta[epoch], &constraint_backward.q[epoch]),
        bound,
        sense,
    }
}

impl EpochLp {
    fn min_achievable(&self) -> f64 {
        self.constraint
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// Plain-text table of the program for external cross-checking.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "epoch {}", self.epoch + 1);
        let _ = writeln!(out, "sense {}", self.sense);
        let _ = writeln!(out, "bound {:.17e}", self.bound);
        let _ = writeln!(out, "state action objective constraint");
        for (x, (o, g)) in self.objective.iter().zip(&self.constraint).enumerate() {
            for (a, (ov, gv)) in o.iter().zip(g).enumerate() {
                let _ = writeln!(out, "{x} {a} {ov:.17e} {gv:.17e}");
            }
        }
        out
    }
}

/// Solve with the deterministic column order.
pub fn solve_epoch_lp(lp: &EpochLp, tol: f64) -> Result<LpSolution, LpError> {
    solve_ordered(lp, tol, None)
}

/// Solve with a random column order, which makes the returned optimal
/// vertex a random element of the solution set when it is not unique.
pub fn solve_epoch_lp_shuffled<R: Rng + ?Sized>(lp: &EpochLp, tol: f64, rng: &mut R) -> Result<LpSolution, LpError> {
    let n: usize = lp.objective.iter().map(Vec::len).sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    solve_ordered(lp, tol, Some(&order))
}

fn infeasible(lp: &EpochLp) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        rule: Vec::new(),
        objective: f64::NAN,
        constraint_value: lp.min_achievable(),
        active: false,
    }
}

fn solve_ordered(lp: &EpochLp, tol: f64, order: Option<&[usize]>) -> Result<LpSolution, LpError> {
    // Flat column index of (x, a).
    let mut offsets = Vec::with_capacity(lp.objective.len());
    let mut n = 0;
    for row in &lp.objective {
        offsets.push(n);
        n += row.len();
    }
    let identity: Vec<usize> = (0..n).collect();
    let order = order.unwrap_or(&identity);
    // position[flat] = column in the simplex program
    let mut position = vec![0; n];
    for (col, &flat) in order.iter().enumerate() {
        position[flat] = col;
    }

    // Rescale so the solver tolerance is relative to the coefficient size.
    let obj_scale = lp.objective.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let obj_scale = if obj_scale > 0.0 { obj_scale } else { 1.0 };
    let sign = lp.sense.sign();
    let mut objective = vec![0.0; n];
    for (x, row) in lp.objective.iter().enumerate() {
        for (a, v) in row.iter().enumerate() {
            objective[position[offsets[x] + a]] = sign * v / obj_scale;
        }
    }
    let mut program = LinearProgram::new(objective);
    for (x, row) in lp.objective.iter().enumerate() {
        let mut coeffs = vec![0.0; n];
        for a in 0..row.len() {
            coeffs[position[offsets[x] + a]] = 1.0;
        }
        program.push(coeffs, Relation::Eq, 1.0);
    }
    let mut constrained = lp.bound.is_finite();
    if constrained {
        // A row whose left side is the same on every vertex, up to rounding,
        // only decides feasibility; keeping it lets the rounding pick Psi.
        let magnitude: f64 = lp.constraint.iter().map(|r| r.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).sum();
        let spread: f64 = lp
            .constraint
            .iter()
            .map(|r| {
                let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                hi - lo
            })
            .sum();
        if spread <= tol * magnitude {
            if lp.min_achievable() > lp.bound + tol * magnitude {
                return Ok(infeasible(lp));
            }
            constrained = false;
        }
    }
    if constrained {
        let g_scale = lp.constraint.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        let g_scale = if g_scale > 0.0 { g_scale } else { 1.0 };
        let mut coeffs = vec![0.0; n];
        for (x, row) in lp.constraint.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                coeffs[position[offsets[x] + a]] = v / g_scale;
            }
        }
        program.push(coeffs, Relation::Le, lp.bound / g_scale);
    }

    let outcome = simplex::solve(&program, tol).map_err(|source| LpError::Solver {
        epoch: lp.epoch,
        source,
    })?;
    let x = match outcome {
        Outcome::Optimal { x, .. } => x,
        Outcome::Infeasible => return Ok(infeasible(lp)),
        Outcome::Unbounded => return Err(LpError::Unbounded { epoch: lp.epoch }),
    };

    let rule: Vec<Vec<f64>> = lp
        .objective
        .iter()
        .enumerate()
        .map(|(s, row)| {
            let mut r: Vec<f64> = (0..row.len()).map(|a| x[position[offsets[s] + a]].max(0.0)).collect();
            let total: f64 = r.iter().sum();
            if total > 0.0 {
                r.iter_mut().for_each(|v| *v /= total);
            } else {
                r[0] = 1.0;
            }
            r
        })
        .collect();
    let dot = |table: &[Vec<f64>]| -> f64 {
        table
            .iter()
            .zip(&rule)
            .map(|(t, r)| t.iter().zip(r).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    };
    let objective = dot(&lp.objective);
    let constraint_value = dot(&lp.constraint);
    let active = lp.bound.is_finite() && constraint_value >= lp.bound * (1.0 - 1e-9);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        rule,
        objective,
        constraint_value,
        active,
    })
}

/// `Psi(policy)`: the assembled optimal policy of the decomposed program.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyLpSolution {
    pub psi: Policy,
    /// Per-epoch optimal objective values `f_t(Psi; reward)`.
    pub epoch_values: Vec<f64>,
    /// Per-epoch constraint values `f_t(Psi; constraint)`.
    pub constraint_values: Vec<f64>,
    pub active: Vec<bool>,
}

impl PolicyLpSolution {
    /// Joint objective `sum_t f_t(Psi; reward)`.
    pub fn objective(&self) -> f64 {
        self.epoch_values.iter().sum()
    }
}

/// Per-solve options.
pub struct LpOptions<'a, R: Rng + ?Sized> {
    pub tol: f64,
    /// When set, columns are shuffled with this generator before each solve.
    pub shuffle: Option<&'a mut R>,
}

/// Solve all epoch programs of `policy`, computing its factors first.
pub fn solve_lp_of_policy(instance: &RiskCmdpInstance, policy: &Policy) -> Result<PolicyLpSolution, LpError> {
    let reward = FactorSet::new(instance, CostKind::Reward, policy);
    let constraint = instance
        .is_constrained()
        .then(|| FactorSet::new(instance, CostKind::Constraint, policy));
    let mut options: LpOptions<'_, rand_chacha::ChaCha8Rng> = LpOptions {
        tol: LP_TOL,
        shuffle: None,
    };
    solve_with_factors(instance, &reward, constraint.as_ref(), &mut options)
}

/// Solve all epoch programs from precomputed factors. `constraint` may be
/// `None` only for unconstrained instances.
pub fn solve_with_factors<R: Rng + ?Sized>(
    instance: &RiskCmdpInstance,
    reward: &FactorSet,
    constraint: Option<&FactorSet>,
    options: &mut LpOptions<'_, R>,
) -> Result<PolicyLpSolution, LpError> {
    let epochs = instance.decision_epochs();
    let mut rules = Vec::with_capacity(epochs);
    let mut epoch_values = Vec::with_capacity(epochs);
    let mut constraint_values = Vec::with_capacity(epochs);
    let mut active = Vec::with_capacity(epochs);
    for t in 0..epochs {
        let lp = match constraint {
            Some(c) if instance.is_constrained() => build_epoch_lp(
                t,
                &reward.forward,
                &reward.backward,
                &c.forward,
                &c.backward,
                instance.bound(),
                instance.sense(),
            ),
            _ => EpochLp {
                epoch: t,
                objective: outer(&reward.forward.theta[t], &reward.backward.q[t]),
                constraint: reward.backward.q[t].iter().map(|r| vec![0.0; r.len()]).collect(),
                bound: f64::INFINITY,
                sense: instance.sense(),
            },
        };
        let sol = match options.shuffle.as_deref_mut() {
            Some(rng) => solve_epoch_lp_shuffled(&lp, options.tol, rng)?,
            None => solve_epoch_lp(&lp, options.tol)?,
        };
        if sol.status == LpStatus::Infeasible {
            return Err(LpError::Infeasible {
                epoch: t,
                min_achievable: lp.min_achievable(),
                bound: lp.bound,
            });
        }
        epoch_values.push(sol.objective);
        constraint_values.push(sol.constraint_value);
        active.push(sol.active);
        rules.push(sol.rule);
    }
    let psi = Policy::from_rules(rules).expect("simplex rules are normalized distributions");
    Ok(PolicyLpSolution {
        psi,
        epoch_values,
        constraint_values,
        active,
    })
}
