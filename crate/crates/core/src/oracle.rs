//! Brute-force evaluators and optimizers for desk-scale instances.
//!
//! Nothing here shares code with the factor recursions or the simplex: costs
//! are rescaled from the raw tables, exponents are summed along each
//! trajectory and exponentiated once, and optima are found by exhaustive
//! search. Every routine refuses to run past its size cap instead of
//! truncating.

use thiserror::Error;

use crate::evaluate::evaluate_risk;
use crate::lp::EpochLp;
use crate::model::{CostKind, Policy, RiskCmdpInstance, Sense};

/// Most trajectories [`enumerate_paths_eval`] will visit.
pub const PATH_CAP: u128 = 10_000_000;
/// Most deterministic policies [`corner_policy_search`] will evaluate.
pub const CORNER_CAP: u128 = 1_000_000;
/// Most grid policies [`randomized_grid_search`] will evaluate.
pub const GRID_CAP: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{what}: {size} exceeds the oracle cap of {cap}")]
    CapExceeded { what: &'static str, size: u128, cap: u128 },
}

/// Raw scaled cost `gamma * beta^(t+1) * m~_t(x, a, x')`, recomputed here
/// instead of taken from the instance cache.
struct RawCosts<'a> {
    instance: &'a RiskCmdpInstance,
    kind: CostKind,
}

impl RawCosts<'_> {
    fn running(&self, t: usize, x: usize, a: usize, next: usize) -> f64 {
        let spec = self.instance.cost_spec(self.kind);
        spec.gamma * spec.beta.powi(t as i32 + 1) * spec.running[t][x][a][next]
    }

    fn terminal(&self, x: usize) -> f64 {
        let spec = self.instance.cost_spec(self.kind);
        spec.gamma * spec.beta.powi(self.instance.horizon() as i32) * spec.terminal[x]
    }
}

/// Number of full trajectories `(x_1, a_1, ..., a_{T-1}, x_T)`.
pub fn trajectory_count(instance: &RiskCmdpInstance) -> u128 {
    let last = instance.horizon() - 1;
    let mut count = vec![1u128; instance.num_states(last)];
    for t in (0..last).rev() {
        let next_total: u128 = count.iter().fold(0u128, |s, c| s.saturating_add(*c));
        count = (0..instance.num_states(t))
            .map(|x| (instance.num_actions(t, x) as u128).saturating_mul(next_total))
            .collect();
    }
    count.iter().fold(0u128, |s, c| s.saturating_add(*c))
}

fn check_paths(instance: &RiskCmdpInstance) -> Result<(), OracleError> {
    let size = trajectory_count(instance);
    if size > PATH_CAP {
        return Err(OracleError::CapExceeded {
            what: "trajectory enumeration",
            size,
            cap: PATH_CAP,
        });
    }
    Ok(())
}

/// One enumerated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// `alpha(x_1) prod_t d_t(x_t, a_t) p_t(x_{t+1} | x_t, a_t)`.
    pub weight: f64,
    /// `exp(sum_t m_t + m_T)` along the trajectory.
    pub exp_cost: f64,
}

/// Every trajectory of `policy` with its probability and exponentiated cost.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnumeration {
    pub kind: CostKind,
    pub trajectories: Vec<Trajectory>,
}

impl PathEnumeration {
    pub fn total_weight(&self) -> f64 {
        self.trajectories.iter().map(|t| t.weight).sum()
    }

    pub fn value(&self) -> f64 {
        self.trajectories.iter().map(|t| t.weight * t.exp_cost).sum()
    }
}

/// Walk all trajectories depth first, calling `visit` at every prefix with
/// `(epoch, state, weight, exponent)`; the exponent excludes the cost of the
/// transition out of `epoch`.
fn walk(
    instance: &RiskCmdpInstance,
    costs: &RawCosts<'_>,
    policy: &Policy,
    path: &mut (Vec<usize>, Vec<usize>),
    weight: f64,
    exponent: f64,
    visit: &mut dyn FnMut(&(Vec<usize>, Vec<usize>), f64, f64),
) {
    let t = path.0.len() - 1;
    let x = *path.0.last().expect("path has a start state");
    visit(path, weight, exponent);
    if t + 1 == instance.horizon() {
        return;
    }
    for (a, &d) in policy.rule(t, x).iter().enumerate() {
        for (next, &p) in instance.transition(t, x, a).iter().enumerate() {
            path.0.push(next);
            path.1.push(a);
            walk(
                instance,
                costs,
                policy,
                path,
                weight * d * p,
                exponent + costs.running(t, x, a, next),
                visit,
            );
            path.0.pop();
            path.1.pop();
        }
    }
}

fn walk_all(
    instance: &RiskCmdpInstance,
    kind: CostKind,
    policy: &Policy,
    visit: &mut dyn FnMut(&(Vec<usize>, Vec<usize>), f64, f64),
) {
    let costs = RawCosts { instance, kind };
    for (x, &a0) in instance.alpha(kind).iter().enumerate() {
        let mut path = (vec![x], Vec::new());
        walk(instance, &costs, policy, &mut path, a0, 0.0, visit);
    }
}

/// Materialize every trajectory.
pub fn enumerate_paths(
    instance: &RiskCmdpInstance,
    kind: CostKind,
    policy: &Policy,
) -> Result<PathEnumeration, OracleError> {
    check_paths(instance)?;
    let costs = RawCosts { instance, kind };
    let horizon = instance.horizon();
    let mut trajectories = Vec::new();
    walk_all(instance, kind, policy, &mut |path, weight, exponent| {
        if path.0.len() == horizon {
            let last = *path.0.last().unwrap();
            trajectories.push(Trajectory {
                states: path.0.clone(),
                actions: path.1.clone(),
                weight,
                exp_cost: (exponent + costs.terminal(last)).exp(),
            });
        }
    });
    Ok(PathEnumeration { kind, trajectories })
}

/// `J_m(policy)` as a finite sum over all trajectories.
pub fn enumerate_paths_eval(instance: &RiskCmdpInstance, kind: CostKind, policy: &Policy) -> Result<f64, OracleError> {
    check_paths(instance)?;
    let costs = RawCosts { instance, kind };
    let horizon = instance.horizon();
    let mut total = 0.0;
    walk_all(instance, kind, policy, &mut |path, weight, exponent| {
        if path.0.len() == horizon {
            total += weight * (exponent + costs.terminal(*path.0.last().unwrap())).exp();
        }
    });
    Ok(total)
}

/// `E[exp(sum_{k<t} m_k) ; X_t = x]` for every epoch and state, summed over
/// trajectory prefixes.
pub fn enumerate_forward_factors(
    instance: &RiskCmdpInstance,
    kind: CostKind,
    policy: &Policy,
) -> Result<Vec<Vec<f64>>, OracleError> {
    check_paths(instance)?;
    let mut theta: Vec<Vec<f64>> = (0..instance.horizon()).map(|t| vec![0.0; instance.num_states(t)]).collect();
    walk_all(instance, kind, policy, &mut |path, weight, exponent| {
        let t = path.0.len() - 1;
        theta[t][*path.0.last().unwrap()] += weight * exponent.exp();
    });
    Ok(theta)
}

/// `E[exp(sum_{k>=t} m_k + m_T) | X_t = x, A_t = a]` by enumerating every
/// suffix trajectory from each `(t, x, a)`.
pub fn enumerate_backward_factors(
    instance: &RiskCmdpInstance,
    kind: CostKind,
    policy: &Policy,
) -> Result<Vec<Vec<Vec<f64>>>, OracleError> {
    check_paths(instance)?;
    let costs = RawCosts { instance, kind };
    let horizon = instance.horizon();
    let mut q = Vec::with_capacity(horizon - 1);
    for t in 0..horizon - 1 {
        let mut epoch = Vec::with_capacity(instance.num_states(t));
        for x in 0..instance.num_states(t) {
            let mut row = Vec::with_capacity(instance.num_actions(t, x));
            for a in 0..instance.num_actions(t, x) {
                let mut total = 0.0;
                for (next, &p) in instance.transition(t, x, a).iter().enumerate() {
                    let mut path = (vec![next], Vec::new());
                    suffix(
                        instance,
                        &costs,
                        policy,
                        t + 1,
                        &mut path,
                        p,
                        costs.running(t, x, a, next),
                        &mut total,
                    );
                }
                row.push(total);
            }
            epoch.push(row);
        }
        q.push(epoch);
    }
    Ok(q)
}

#[allow(clippy::too_many_arguments)]
fn suffix(
    instance: &RiskCmdpInstance,
    costs: &RawCosts<'_>,
    policy: &Policy,
    t: usize,
    path: &mut (Vec<usize>, Vec<usize>),
    weight: f64,
    exponent: f64,
    total: &mut f64,
) {
    let x = *path.0.last().unwrap();
    if t + 1 == instance.horizon() {
        *total += weight * (exponent + costs.terminal(x)).exp();
        return;
    }
    for (a, &d) in policy.rule(t, x).iter().enumerate() {
        for (next, &p) in instance.transition(t, x, a).iter().enumerate() {
            path.0.push(next);
            suffix(
                instance,
                costs,
                policy,
                t + 1,
                path,
                weight * d * p,
                exponent + costs.running(t, x, a, next),
                total,
            );
            path.0.pop();
        }
    }
}

/// Best policy found by an exhaustive search.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub policy: Policy,
    pub reward_value: f64,
    pub constraint_value: f64,
}

/// Outcome of an exhaustive search; `best` is `None` when no candidate
/// satisfies the constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: Option<SearchResult>,
    pub candidates: u128,
    pub feasible: u128,
}

fn search(
    instance: &RiskCmdpInstance,
    grids: &[Vec<Vec<f64>>],
    shape: &[usize],
) -> SearchOutcome {
    let sense = instance.sense();
    let bound = instance.bound();
    let mut idx = vec![0usize; grids.len()];
    let mut outcome = SearchOutcome {
        best: None,
        candidates: 0,
        feasible: 0,
    };
    loop {
        let mut rules: Vec<Vec<Vec<f64>>> = Vec::with_capacity(shape.len());
        let mut k = 0;
        for &n_states in shape {
            rules.push((0..n_states).map(|_| {
                let r = grids[k][idx[k]].clone();
                k += 1;
                r
            }).collect());
        }
        let policy = Policy::from_rules(rules).expect("grid rows are distributions");
        outcome.candidates += 1;
        let jc = if bound.is_finite() {
            evaluate_risk(instance, CostKind::Constraint, &policy)
        } else {
            f64::NEG_INFINITY
        };
        if jc <= bound {
            outcome.feasible += 1;
            let jr = evaluate_risk(instance, CostKind::Reward, &policy);
            let better = match &outcome.best {
                None => true,
                Some(b) => sense.improves(jr, b.reward_value),
            };
            if better {
                outcome.best = Some(SearchResult {
                    policy,
                    reward_value: jr,
                    constraint_value: jc,
                });
            }
        }
        // Mixed-radix increment.
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return outcome;
            }
            idx[pos] += 1;
            if idx[pos] < grids[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn state_shape(instance: &RiskCmdpInstance) -> Vec<usize> {
    instance.action_counts().iter().map(Vec::len).collect()
}

/// Exhaustive search over deterministic Markov policies.
pub fn corner_policy_search(instance: &RiskCmdpInstance) -> Result<SearchOutcome, OracleError> {
    let size = instance.corner_count();
    if size > CORNER_CAP {
        return Err(OracleError::CapExceeded {
            what: "corner policy search",
            size,
            cap: CORNER_CAP,
        });
    }
    let grids: Vec<Vec<Vec<f64>>> = instance
        .action_counts()
        .iter()
        .flatten()
        .map(|&n| {
            (0..n)
                .map(|hot| (0..n).map(|a| if a == hot { 1.0 } else { 0.0 }).collect())
                .collect()
        })
        .collect();
    Ok(search(instance, &grids, &state_shape(instance)))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All points of the simplex grid `{p : p_a = k_a / resolution}` in `n` dims.
pub fn simplex_grid(n: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn fill(remaining: usize, slots: usize, resolution: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.iter().map(|&k| k as f64 / resolution as f64).collect());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            fill(remaining - k, slots - 1, resolution, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(resolution, n, resolution, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Exhaustive search over randomized policies whose rules lie on the simplex
/// grid of step `1 / resolution`. Corner points are always on the grid.
pub fn randomized_grid_search(instance: &RiskCmdpInstance, resolution: usize) -> Result<SearchOutcome, OracleError> {
    let resolution = resolution.max(1);
    let size = instance
        .action_counts()
        .iter()
        .flatten()
        .fold(1u128, |acc, &n| {
            acc.saturating_mul(binomial((resolution + n - 1) as u128, (n - 1) as u128))
        });
    if size > GRID_CAP {
        return Err(OracleError::CapExceeded {
            what: "randomized grid search",
            size,
            cap: GRID_CAP,
        });
    }
    let grids: Vec<Vec<Vec<f64>>> = instance
        .action_counts()
        .iter()
        .flatten()
        .map(|&n| simplex_grid(n, resolution))
        .collect();
    Ok(search(instance, &grids, &state_shape(instance)))
}

/// Optimum of an epoch program by enumerating every basis of its standard
/// form. Returns `None` when no basis is feasible.
pub fn enumerate_lp_vertices(lp: &EpochLp) -> Option<(Vec<Vec<f64>>, f64)> {
    let widths: Vec<usize> = lp.objective.iter().map(Vec::len).collect();
    let n: usize = widths.iter().sum();
    let constrained = lp.bound.is_finite();
    let cols = n + usize::from(constrained);
    let m = widths.len() + usize::from(constrained);

    // Equality system A z = b with z = (d, slack).
    let mut a = vec![vec![0.0; cols]; m];
    let mut b = vec![1.0; m];
    let mut k = 0;
    for (x, &w) in widths.iter().enumerate() {
        for j in 0..w {
            a[x][k + j] = 1.0;
        }
        k += w;
    }
    if constrained {
        let row = m - 1;
        let mut k = 0;
        for g in &lp.constraint {
            for v in g {
                a[row][k] = *v;
                k += 1;
            }
        }
        a[row][n] = 1.0;
        b[row] = lp.bound;
    }
    let objective: Vec<f64> = lp.objective.iter().flatten().copied().collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut basis: Vec<usize> = (0..m).collect();
    loop {
        if let Some(z) = solve_square(&a, &b, &basis) {
            let scale = 1.0 + lp.bound.abs().min(1e300);
            if z.iter().all(|&v| v >= -1e-12 * scale) {
                let mut d = vec![0.0; cols];
                for (i, &c) in basis.iter().enumerate() {
                    d[c] = z[i].max(0.0);
                }
                let value: f64 = objective.iter().zip(&d).map(|(c, v)| c * v).sum();
                let better = match &best {
                    None => true,
                    Some((_, v)) => lp.sense.improves(value, *v),
                };
                if better {
                    best = Some((d[..n].to_vec(), value));
                }
            }
        }
        if !next_combination(&mut basis, cols) {
            break;
        }
    }
    best.map(|(flat, value)| {
        let mut rule = Vec::with_capacity(widths.len());
        let mut k = 0;
        for &w in &widths {
            rule.push(flat[k..k + w].to_vec());
            k += w;
        }
        (rule, value)
    })
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let m = c.len();
    let mut i = m;
    while i > 0 {
        i -= 1;
        if c[i] < n - m + i {
            c[i] += 1;
            for j in i + 1..m {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Gaussian elimination with partial pivoting on the chosen columns.
fn solve_square(a: &[Vec<f64>], b: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let m = b.len();
    let mut mat: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = cols.iter().map(|&c| a[i][c]).collect();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| mat[i][col].abs().total_cmp(&mat[j][col].abs()))?;
        if mat[piv][col].abs() < 1e-12 {
            return None;
        }
        mat.swap(col, piv);
        for i in 0..m {
            if i != col {
                let f = mat[i][col] / mat[col][col];
                if f != 0.0 {
                    for j in col..=m {
                        mat[i][j] -= f * mat[col][j];
                    }
                }
            }
        }
    }
    Some((0..m).map(|i| mat[i][m] / mat[i][i]).collect())
}

/// Sense-aware comparison helper: `a` is no better than `b` plus `slack`.
pub fn no_better_than(sense: Sense, a: f64, b: f64, slack: f64) -> bool {
    match sense {
        Sense::Maximize => a <= b + slack,
        Sense::Minimize => a >= b - slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{toy, zero_cost};
    use crate::model::Policy;

    #[test]
    fn zero_cost_value_is_one() {
        let inst = zero_cost(2, 2, 3, 2.0);
        let p = Policy::uniform(&inst);
        let v = enumerate_paths_eval(&inst, CostKind::Reward, &p).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let paths = enumerate_paths(&inst, CostKind::Reward, &p).unwrap();
        assert_eq!(paths.trajectories.len() as u128, trajectory_count(&inst));
        assert!((paths.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn toy_half_mix() {
        let inst = toy(2.0);
        let p = Policy::from_rules(vec![vec![vec![0.5, 0.5]]]).unwrap();
        let v = enumerate_paths_eval(&inst, CostKind::Reward, &p).unwrap();
        assert!((v - (1.0 + std::f64::consts::E) / 2.0).abs() < 1e-15);
        assert!((v - 1.859141).abs() < 1e-6);
    }

    #[test]
    fn caps_are_errors() {
        let inst = zero_cost(4, 3, 40, 2.0);
        assert!(matches!(
            enumerate_paths_eval(&inst, CostKind::Reward, &Policy::uniform(&inst)),
            Err(OracleError::CapExceeded { .. })
        ));
        assert!(corner_policy_search(&inst).is_err());
        assert!(randomized_grid_search(&inst, 10).is_err());
    }

    #[test]
    fn corner_search_on_toy() {
        let b = 0.5_f64.exp();
        let out = corner_policy_search(&toy(b)).unwrap();
        let best = out.best.unwrap();
        assert_eq!(best.policy.rule(0, 0), &[1.0, 0.0]);
        assert_eq!(best.reward_value, 1.0);
        assert_eq!(out.candidates, 2);
        assert_eq!(out.feasible, 1);

        let out = corner_policy_search(&toy(f64::INFINITY)).unwrap();
        assert!((out.best.unwrap().reward_value - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn grid_search_on_toy() {
        let b = 0.5_f64.exp();
        let out = randomized_grid_search(&toy(b), 1000).unwrap();
        let best = out.best.unwrap();
        assert!((best.reward_value - 1.648721).abs() < 1e-3);
        assert!((best.policy.rule(0, 0)[1] - 0.3775).abs() < 1e-3);
        assert_eq!(out.candidates, 1001);
    }

    #[test]
    fn grid_search_reports_infeasible() {
        let out = randomized_grid_search(&toy(0.5), 10).unwrap();
        assert!(out.best.is_none());
        assert_eq!(out.feasible, 0);
    }

    #[test]
    fn grid_points() {
        let g = simplex_grid(3, 2);
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-15));
        assert_eq!(binomial(1002, 2), 1002 * 1001 / 2);
    }

    #[test]
    fn vertex_enumeration_toy() {
        let e = std::f64::consts::E;
        let lp = EpochLp {
            epoch: 0,
            objective: vec![vec![1.0, e]],
            constraint: vec![vec![1.0, e]],
            bound: 0.5_f64.exp(),
            sense: Sense::Maximize,
        };
        let (rule, value) = enumerate_lp_vertices(&lp).unwrap();
        assert!((value - 0.5_f64.exp()).abs() < 1e-12);
        assert!((rule[0][1] - 0.377541).abs() < 1e-6);
    }
}
