//! Exact evaluation of exponentiated costs.
//!
//! For a policy `d` and cost stream `m`, the forward factor
//! `theta_t(x) = E[exp(sum_{k<t} m_k) ; X_t = x]` is pushed forward through
//! the kernel, and the backward factor
//! `Q_t(x, a) = E[exp(sum_{k>=t} m_k) | X_t = x, A_t = a]` is pulled back from
//! the terminal cost. The bilinear form
//!
//! ```text
//! f_t(d~) = sum_{x,a} theta_t(x) d~_t(x, a) Q_t(x, a)
//! ```
//!
//! is the value of the policy that follows `d` everywhere except epoch `t`,
//! where it uses `d~_t`. With `d~ = d` every `f_t` equals the policy value.
//!
//! The backward recursion weights successor actions by the rule of the
//! successor epoch (`d_{t+1}`), which is what the conditional expectation
//! defining `Q_t` requires. At the last decision epoch the terminal factor
//! carries no action.

use thiserror::Error;

use crate::model::{CostKind, Policy, RiskCmdpInstance, Sense};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("epoch {epoch} is not a decision epoch (instance has {decision_epochs})")]
    EpochOutOfRange { epoch: usize, decision_epochs: usize },
}

/// `theta_t(x)` for every epoch `t = 0..T` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardFactors {
    pub kind: CostKind,
    pub theta: Vec<Vec<f64>>,
}

/// `Q_t(x, a)` for decision epochs and the terminal factor `exp(m_T(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardFactors {
    pub kind: CostKind,
    pub q: Vec<Vec<Vec<f64>>>,
    pub terminal: Vec<f64>,
}

/// Forward and backward factors of one (policy, cost stream) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorSet {
    pub forward: ForwardFactors,
    pub backward: BackwardFactors,
}

impl FactorSet {
    pub fn new(instance: &RiskCmdpInstance, kind: CostKind, policy: &Policy) -> Self {
        Self {
            forward: forward_factors(instance, kind, policy),
            backward: backward_factors(instance, kind, policy),
        }
    }

    /// `f_t` for a single epoch rule `rules[x][a]`.
    pub fn epoch_value(&self, epoch: usize, rules: &[Vec<f64>]) -> f64 {
        bilinear(&self.forward.theta[epoch], rules, &self.backward.q[epoch])
    }

    /// The value of the policy these factors were computed for.
    pub fn value(&self, policy: &Policy) -> f64 {
        self.epoch_value(0, &policy.rules()[0])
    }

    /// `sum_t f_t(other)`.
    pub fn linear_sum(&self, other: &Policy) -> f64 {
        other
            .rules()
            .iter()
            .enumerate()
            .map(|(t, rules)| self.epoch_value(t, rules))
            .sum()
    }
}

pub fn forward_factors(instance: &RiskCmdpInstance, kind: CostKind, policy: &Policy) -> ForwardFactors {
    let exp = instance.exp_costs(kind);
    let mut theta = Vec::with_capacity(instance.horizon());
    theta.push(instance.alpha(kind).to_vec());
    for t in 0..instance.decision_epochs() {
        let mut next = vec![0.0; instance.num_states(t + 1)];
        for (x, &weight) in theta[t].iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            for (a, &d) in policy.rule(t, x).iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let mass = weight * d;
                let probs = instance.transition(t, x, a);
                let costs = &exp.running[t][x][a];
                for ((slot, &p), &e) in next.iter_mut().zip(probs).zip(costs) {
                    *slot += mass * p * e;
                }
            }
        }
        theta.push(next);
    }
    ForwardFactors { kind, theta }
}

pub fn backward_factors(instance: &RiskCmdpInstance, kind: CostKind, policy: &Policy) -> BackwardFactors {
    let exp = instance.exp_costs(kind);
    let epochs = instance.decision_epochs();
    let terminal = exp.terminal.clone();
    let mut q: Vec<Vec<Vec<f64>>> = vec![Vec::new(); epochs];
    // Continuation value of each successor state: terminal factor at the
    // last epoch, otherwise sum_a' d_{t+1}(x', a') Q_{t+1}(x', a').
    let mut continuation = terminal.clone();
    for t in (0..epochs).rev() {
        q[t] = (0..instance.num_states(t))
            .map(|x| {
                (0..instance.num_actions(t, x))
                    .map(|a| {
                        instance
                            .transition(t, x, a)
                            .iter()
                            .zip(&exp.running[t][x][a])
                            .zip(&continuation)
                            .map(|((p, e), v)| p * e * v)
                            .sum()
                    })
                    .collect()
            })
            .collect();
        continuation = q[t]
            .iter()
            .enumerate()
            .map(|(x, row)| row.iter().zip(policy.rule(t, x)).map(|(v, d)| v * d).sum())
            .collect();
    }
    BackwardFactors { kind, q, terminal }
}

fn bilinear(theta: &[f64], rules: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    theta
        .iter()
        .zip(rules)
        .zip(q)
        .map(|((th, d), qx)| th * d.iter().zip(qx).map(|(p, v)| p * v).sum::<f64>())
        .sum()
}

/// `f_t(tilde, theta, Q)` for decision epoch `epoch` (0-based).
pub fn f_linear(
    epoch: usize,
    tilde: &Policy,
    forward: &ForwardFactors,
    backward: &BackwardFactors,
) -> Result<f64, EvalError> {
    let decision_epochs = backward.q.len();
    if epoch >= decision_epochs {
        return Err(EvalError::EpochOutOfRange {
            epoch,
            decision_epochs,
        });
    }
    Ok(bilinear(&forward.theta[epoch], &tilde.rules()[epoch], &backward.q[epoch]))
}

/// `J_m(policy, alpha_m)`, the expected exponentiated accumulated cost.
pub fn evaluate_risk(instance: &RiskCmdpInstance, kind: CostKind, policy: &Policy) -> f64 {
    let backward = backward_factors(instance, kind, policy);
    bilinear(instance.alpha(kind), &policy.rules()[0], &backward.q[0])
}

/// Value tables and a greedy deterministic policy of the unconstrained
/// risk-sensitive dynamic program.
#[derive(Clone, Debug, PartialEq)]
pub struct DpSolution {
    pub sense: Sense,
    /// `u_t(x)` for every epoch, `u_T = exp(m_T)`.
    pub values: Vec<Vec<f64>>,
    pub policy: Policy,
}

impl DpSolution {
    /// `sum_x alpha(x) u_1(x)`.
    pub fn value(&self, alpha: &[f64]) -> f64 {
        alpha.iter().zip(&self.values[0]).map(|(a, u)| a * u).sum()
    }
}

/// Backward induction in the instance's sense.
pub fn unconstrained_dp(instance: &RiskCmdpInstance, kind: CostKind) -> DpSolution {
    dp_with_sense(instance, kind, instance.sense())
}

/// Backward induction with an explicit sense, e.g. the smallest achievable
/// constraint value.
pub fn dp_with_sense(instance: &RiskCmdpInstance, kind: CostKind, sense: Sense) -> DpSolution {
    let exp = instance.exp_costs(kind);
    let epochs = instance.decision_epochs();
    let mut values = vec![Vec::new(); instance.horizon()];
    values[epochs] = exp.terminal.clone();
    let mut greedy = vec![Vec::new(); epochs];
    for t in (0..epochs).rev() {
        let mut u = Vec::with_capacity(instance.num_states(t));
        let mut choice = Vec::with_capacity(instance.num_states(t));
        for x in 0..instance.num_states(t) {
            let mut best: Option<(usize, f64)> = None;
            for a in 0..instance.num_actions(t, x) {
                let v: f64 = instance
                    .transition(t, x, a)
                    .iter()
                    .zip(&exp.running[t][x][a])
                    .zip(&values[t + 1])
                    .map(|((p, e), u)| p * e * u)
                    .sum();
                if best.is_none_or(|(_, b)| sense.improves(v, b)) {
                    best = Some((a, v));
                }
            }
            let (a, v) = best.expect("action sets are nonempty");
            u.push(v);
            choice.push(a);
        }
        values[t] = u;
        greedy[t] = choice;
    }
    let policy = Policy::deterministic(instance, |t, x| greedy[t][x]);
    DpSolution {
        sense,
        values,
        policy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::toy;
    use std::f64::consts::E;

    fn mixed(q: f64) -> Policy {
        Policy::from_rules(vec![vec![vec![1.0 - q, q]]]).unwrap()
    }

    #[test]
    fn toy_backward_factors() {
        let inst = toy(2.0);
        let b = backward_factors(&inst, CostKind::Reward, &mixed(0.5));
        assert_eq!(b.q[0][0][0], 1.0);
        assert!((b.q[0][0][1] - E).abs() < 1e-15);
        assert_eq!(b.terminal, vec![1.0]);
    }

    #[test]
    fn toy_value_closed_form() {
        let inst = toy(2.0);
        for q in [0.0, 0.25, 0.5, 1.0] {
            let v = evaluate_risk(&inst, CostKind::Reward, &mixed(q));
            assert!((v - ((1.0 - q) + q * E)).abs() < 1e-15);
        }
        let half = evaluate_risk(&inst, CostKind::Reward, &mixed(0.5));
        assert!((half - 1.859141).abs() < 1e-6);
    }

    #[test]
    fn toy_dp() {
        let inst = toy(2.0);
        let dp = unconstrained_dp(&inst, CostKind::Reward);
        assert!((dp.values[0][0] - E).abs() < 1e-15);
        assert_eq!(dp.policy.rule(0, 0), &[0.0, 1.0]);
        let dp = dp_with_sense(&inst, CostKind::Reward, Sense::Minimize);
        assert_eq!(dp.values[0][0], 1.0);
    }

    #[test]
    fn f_linear_rejects_terminal_epoch() {
        let inst = toy(2.0);
        let p = mixed(0.3);
        let fs = FactorSet::new(&inst, CostKind::Reward, &p);
        assert!(f_linear(0, &p, &fs.forward, &fs.backward).is_ok());
        assert_eq!(
            f_linear(1, &p, &fs.forward, &fs.backward),
            Err(EvalError::EpochOutOfRange { epoch: 1, decision_epochs: 1 })
        );
    }

    #[test]
    fn forward_factor_starts_at_alpha() {
        let inst = toy(2.0);
        let f = forward_factors(&inst, CostKind::Constraint, &mixed(0.5));
        assert_eq!(f.theta[0], vec![1.0]);
        assert!((f.theta[1][0] - (0.5 + 0.5 * E)).abs() < 1e-15);
    }
}
