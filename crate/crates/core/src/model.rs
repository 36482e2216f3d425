//! Finite-horizon Risk-CMDP instances, Markov policies and policy sampling.
//!
//! Epochs are 0-based in code: decision epoch `t` here is epoch `t + 1` in
//! the usual 1-based notation, so the running cost of epoch `t` is scaled by
//! `gamma * beta^(t + 1)` and the terminal cost by `gamma * beta^T`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest admissible bound on `|sum_t m_t|` along any trajectory. Keeps
/// `exp` of accumulated costs well inside the `f64` range.
pub const MAX_EXPONENT: f64 = 600.0;

const KERNEL_TOL: f64 = 1e-12;
const ALPHA_TOL: f64 = 1e-12;
/// Row-sum tolerance for decision rules.
pub const RULE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// `true` when `candidate` is strictly better than `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Sense::Maximize => candidate > incumbent,
            Sense::Minimize => candidate < incumbent,
        }
    }

    /// The better of two values.
    pub fn best(self, a: f64, b: f64) -> f64 {
        match self {
            Sense::Maximize => a.max(b),
            Sense::Minimize => a.min(b),
        }
    }

    /// `+1` for maximize, `-1` for minimize; multiplies values into maximize form.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Maximize => f.write_str("maximize"),
            Sense::Minimize => f.write_str("minimize"),
        }
    }
}

/// Which of the two exponentiated cost streams an operation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Reward,
    Constraint,
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::Reward => f.write_str("reward"),
            CostKind::Constraint => f.write_str("constraint"),
        }
    }
}

/// Raw (unscaled) cost tables together with the risk factor, discount and
/// initial distribution of one cost stream.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    /// `running[t][x][a][x']` for decision epochs `t = 0..T-1`.
    pub running: Vec<Vec<Vec<Vec<f64>>>>,
    /// Terminal cost over the states of the last epoch.
    pub terminal: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: Vec<f64>,
}

/// Costs after applying `gamma * beta^t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledCosts {
    pub running: Vec<Vec<Vec<Vec<f64>>>>,
    pub terminal: Vec<f64>,
}

impl ScaledCosts {
    fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> ScaledCosts {
        ScaledCosts {
            running: self
                .running
                .iter()
                .map(|epoch| {
                    epoch
                        .iter()
                        .map(|state| {
                            state
                                .iter()
                                .map(|row| row.iter().map(|&v| f(v)).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            terminal: self.terminal.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Apply the risk factor and discount: epoch `t` (0-based) is scaled by
/// `gamma * beta^(t+1)`, the terminal cost by `gamma * beta^horizon`.
pub fn scale_costs(spec: &CostSpec, horizon: usize) -> ScaledCosts {
    let running = spec
        .running
        .iter()
        .enumerate()
        .map(|(t, epoch)| {
            let factor = spec.gamma * spec.beta.powi(t as i32 + 1);
            epoch
                .iter()
                .map(|state| {
                    state
                        .iter()
                        .map(|row| row.iter().map(|&v| factor * v).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let factor = spec.gamma * spec.beta.powi(horizon as i32);
    let terminal = spec.terminal.iter().map(|&v| factor * v).collect();
    ScaledCosts { running, terminal }
}

/// Upper bound on `|sum_t m_t|` over all trajectories.
pub fn exponent_bound(spec: &CostSpec, horizon: usize) -> f64 {
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut total = 0.0;
    for (t, epoch) in spec.running.iter().enumerate() {
        let worst = max_abs(&mut epoch.iter().flatten().flatten().copied());
        total += spec.gamma.abs() * spec.beta.powi(t as i32 + 1) * worst;
    }
    total + spec.gamma.abs() * spec.beta.powi(horizon as i32) * max_abs(&mut spec.terminal.iter().copied())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("horizon must be at least 2, got {0}")]
    HorizonTooShort(usize),
    #[error("expected {expected} state spaces (one per epoch), got {got}")]
    StateEpochs { expected: usize, got: usize },
    #[error("state space of epoch {epoch} is empty")]
    EmptyStateSpace { epoch: usize },
    #[error("action table: {0}")]
    ActionShape(String),
    #[error("empty action set at epoch {epoch}, state {state}")]
    EmptyActionSet { epoch: usize, state: usize },
    #[error("kernel shape: {0}")]
    KernelShape(String),
    #[error("kernel row (epoch {epoch}, state {state}, action {action}) {reason}")]
    KernelRow {
        epoch: usize,
        state: usize,
        action: usize,
        reason: String,
    },
    #[error("{kind} costs: {reason}")]
    Cost { kind: CostKind, reason: String },
    #[error("{kind}: risk factor gamma must be nonzero")]
    ZeroRiskFactor { kind: CostKind },
    #[error("{kind}: discount beta must lie in (0, 1], got {beta}")]
    Discount { kind: CostKind, beta: f64 },
    #[error("{kind}: initial distribution {reason}")]
    InitialDistribution { kind: CostKind, reason: String },
    #[error("bound B must be positive, got {0}")]
    Bound(f64),
    #[error("{kind}: accumulated exponent can reach {bound:.3}, above the limit {MAX_EXPONENT}")]
    ExponentTooLarge { kind: CostKind, bound: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy shape mismatch: {0}")]
    Shape(String),
    #[error("decision rule at epoch {epoch}, state {state} is not a distribution: {reason}")]
    NotDistribution {
        epoch: usize,
        state: usize,
        reason: String,
    },
}

/// Everything needed to assemble an instance. Field meanings follow
/// [`RiskCmdpInstance`].
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParts {
    pub horizon: usize,
    /// State labels per epoch, `T` entries.
    pub states: Vec<Vec<String>>,
    /// Action counts `actions[t][x]` for decision epochs `t = 0..T-1`.
    pub actions: Vec<Vec<usize>>,
    /// `kernel[t][x][a][x']`.
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
    pub reward: CostSpec,
    pub constraint: CostSpec,
    /// `f64::INFINITY` marks an unconstrained problem.
    pub bound: f64,
    pub sense: Sense,
}

/// Exponentiated scaled costs, cached per stream.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ExpCosts {
    pub scaled: ScaledCosts,
    pub running: Vec<Vec<Vec<Vec<f64>>>>,
    pub terminal: Vec<f64>,
}

/// A validated, immutable finite-horizon Risk-CMDP.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskCmdpInstance {
    parts: InstanceParts,
    reward_exp: ExpCosts,
    constraint_exp: ExpCosts,
}

impl RiskCmdpInstance {
    pub fn new(parts: InstanceParts) -> Result<Self, ModelError> {
        validate(&parts)?;
        let reward_exp = exp_costs(&parts.reward, parts.horizon);
        let constraint_exp = exp_costs(&parts.constraint, parts.horizon);
        Ok(Self {
            parts,
            reward_exp,
            constraint_exp,
        })
    }

    pub fn parts(&self) -> &InstanceParts {
        &self.parts
    }

    pub fn into_parts(self) -> InstanceParts {
        self.parts
    }

    pub fn horizon(&self) -> usize {
        self.parts.horizon
    }

    /// Number of decision epochs, `T - 1`.
    pub fn decision_epochs(&self) -> usize {
        self.parts.horizon - 1
    }

    pub fn num_states(&self, epoch: usize) -> usize {
        self.parts.states[epoch].len()
    }

    pub fn state_labels(&self, epoch: usize) -> &[String] {
        &self.parts.states[epoch]
    }

    pub fn num_actions(&self, epoch: usize, state: usize) -> usize {
        self.parts.actions[epoch][state]
    }

    pub fn action_counts(&self) -> &[Vec<usize>] {
        &self.parts.actions
    }

    /// `p_t(. | x, a)` over the states of epoch `t + 1`.
    pub fn transition(&self, epoch: usize, state: usize, action: usize) -> &[f64] {
        &self.parts.kernel[epoch][state][action]
    }

    pub fn cost_spec(&self, kind: CostKind) -> &CostSpec {
        match kind {
            CostKind::Reward => &self.parts.reward,
            CostKind::Constraint => &self.parts.constraint,
        }
    }

    pub fn scaled_costs(&self, kind: CostKind) -> &ScaledCosts {
        &self.exp_costs(kind).scaled
    }

    pub(crate) fn exp_costs(&self, kind: CostKind) -> &ExpCosts {
        match kind {
            CostKind::Reward => &self.reward_exp,
            CostKind::Constraint => &self.constraint_exp,
        }
    }

    pub fn alpha(&self, kind: CostKind) -> &[f64] {
        &self.cost_spec(kind).alpha
    }

    pub fn bound(&self) -> f64 {
        self.parts.bound
    }

    pub fn is_constrained(&self) -> bool {
        self.parts.bound.is_finite()
    }

    pub fn sense(&self) -> Sense {
        self.parts.sense
    }

    /// Same instance with a different bound.
    pub fn with_bound(&self, bound: f64) -> Result<Self, ModelError> {
        let mut parts = self.parts.clone();
        parts.bound = bound;
        Self::new(parts)
    }

    /// Number of deterministic Markov policies, saturating at `u128::MAX`.
    pub fn corner_count(&self) -> u128 {
        self.parts
            .actions
            .iter()
            .flatten()
            .fold(1u128, |acc, &n| acc.saturating_mul(n as u128))
    }
}

fn exp_costs(spec: &CostSpec, horizon: usize) -> ExpCosts {
    let scaled = scale_costs(spec, horizon);
    let exp = scaled.map(f64::exp);
    ExpCosts {
        scaled,
        running: exp.running,
        terminal: exp.terminal,
    }
}

fn validate(parts: &InstanceParts) -> Result<(), ModelError> {
    let horizon = parts.horizon;
    if horizon < 2 {
        return Err(ModelError::HorizonTooShort(horizon));
    }
    if parts.states.len() != horizon {
        return Err(ModelError::StateEpochs {
            expected: horizon,
            got: parts.states.len(),
        });
    }
    if let Some(epoch) = parts.states.iter().position(|s| s.is_empty()) {
        return Err(ModelError::EmptyStateSpace { epoch });
    }
    if parts.actions.len() != horizon - 1 {
        return Err(ModelError::ActionShape(format!(
            "expected {} decision epochs, got {}",
            horizon - 1,
            parts.actions.len()
        )));
    }
    for (t, counts) in parts.actions.iter().enumerate() {
        if counts.len() != parts.states[t].len() {
            return Err(ModelError::ActionShape(format!(
                "epoch {t}: {} action counts for {} states",
                counts.len(),
                parts.states[t].len()
            )));
        }
        if let Some(state) = counts.iter().position(|&n| n == 0) {
            return Err(ModelError::EmptyActionSet { epoch: t, state });
        }
    }

    if parts.kernel.len() != horizon - 1 {
        return Err(ModelError::KernelShape(format!(
            "expected {} epochs, got {}",
            horizon - 1,
            parts.kernel.len()
        )));
    }
    for (t, epoch) in parts.kernel.iter().enumerate() {
        if epoch.len() != parts.states[t].len() {
            return Err(ModelError::KernelShape(format!(
                "epoch {t}: {} state rows for {} states",
                epoch.len(),
                parts.states[t].len()
            )));
        }
        let next = parts.states[t + 1].len();
        for (x, rows) in epoch.iter().enumerate() {
            if rows.len() != parts.actions[t][x] {
                return Err(ModelError::KernelShape(format!(
                    "epoch {t}, state {x}: {} action rows for {} actions",
                    rows.len(),
                    parts.actions[t][x]
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                let fail = |reason: String| ModelError::KernelRow {
                    epoch: t,
                    state: x,
                    action: a,
                    reason,
                };
                if row.len() != next {
                    return Err(fail(format!(
                        "has {} entries but epoch {} has {next} states",
                        row.len(),
                        t + 1
                    )));
                }
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(fail("has a negative or non-finite entry".into()));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > KERNEL_TOL {
                    return Err(fail(format!("sums to {sum}, not 1")));
                }
            }
        }
    }

    validate_costs(parts, CostKind::Reward, &parts.reward)?;
    validate_costs(parts, CostKind::Constraint, &parts.constraint)?;

    if parts.bound.is_nan() || parts.bound <= 0.0 {
        return Err(ModelError::Bound(parts.bound));
    }
    Ok(())
}

fn validate_costs(parts: &InstanceParts, kind: CostKind, spec: &CostSpec) -> Result<(), ModelError> {
    let cost_err = |reason: String| ModelError::Cost { kind, reason };
    let horizon = parts.horizon;
    if spec.running.len() != horizon - 1 {
        return Err(cost_err(format!(
            "expected {} running epochs, got {}",
            horizon - 1,
            spec.running.len()
        )));
    }
    for (t, epoch) in spec.running.iter().enumerate() {
        if epoch.len() != parts.states[t].len() {
            return Err(cost_err(format!("epoch {t}: wrong number of states")));
        }
        for (x, rows) in epoch.iter().enumerate() {
            if rows.len() != parts.actions[t][x] {
                return Err(cost_err(format!("epoch {t}, state {x}: wrong number of actions")));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != parts.states[t + 1].len() {
                    return Err(cost_err(format!(
                        "epoch {t}, state {x}, action {a}: wrong number of successor states"
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(cost_err(format!("epoch {t}, state {x}, action {a}: non-finite cost")));
                }
            }
        }
    }
    if spec.terminal.len() != parts.states[horizon - 1].len() {
        return Err(cost_err("terminal cost length differs from the last state space".into()));
    }
    if spec.terminal.iter().any(|v| !v.is_finite()) {
        return Err(cost_err("non-finite terminal cost".into()));
    }
    if spec.gamma == 0.0 || !spec.gamma.is_finite() {
        return Err(ModelError::ZeroRiskFactor { kind });
    }
    if !(spec.beta > 0.0 && spec.beta <= 1.0) {
        return Err(ModelError::Discount { kind, beta: spec.beta });
    }
    let alpha_err = |reason: String| ModelError::InitialDistribution { kind, reason };
    if spec.alpha.len() != parts.states[0].len() {
        return Err(alpha_err(format!(
            "has {} entries for {} initial states",
            spec.alpha.len(),
            parts.states[0].len()
        )));
    }
    if spec.alpha.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(alpha_err("has a negative or non-finite entry".into()));
    }
    let sum: f64 = spec.alpha.iter().sum();
    if (sum - 1.0).abs() > ALPHA_TOL {
        return Err(alpha_err(format!("sums to {sum}, not 1")));
    }
    let bound = exponent_bound(spec, horizon);
    if bound > MAX_EXPONENT {
        return Err(ModelError::ExponentTooLarge { kind, bound });
    }
    Ok(())
}

/// A Markov randomized policy: one decision rule per decision epoch and state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct Policy {
    rules: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct RawPolicy {
    rules: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawPolicy> for Policy {
    type Error = PolicyError;

    fn try_from(raw: RawPolicy) -> Result<Self, Self::Error> {
        Policy::from_rules(raw.rules)
    }
}

impl Policy {
    /// Wrap `rules[t][x][a]`, checking that every row is a distribution.
    pub fn from_rules(rules: Vec<Vec<Vec<f64>>>) -> Result<Self, PolicyError> {
        for (t, epoch) in rules.iter().enumerate() {
            for (x, row) in epoch.iter().enumerate() {
                check_row(t, x, row)?;
            }
        }
        Ok(Self { rules })
    }

    /// Uniform randomization over every action set.
    pub fn uniform(instance: &RiskCmdpInstance) -> Self {
        let rules = instance
            .action_counts()
            .iter()
            .map(|epoch| epoch.iter().map(|&n| vec![1.0 / n as f64; n]).collect())
            .collect();
        Self { rules }
    }

    /// Deterministic policy choosing `choice(t, x)` at every epoch and state.
    pub fn deterministic(instance: &RiskCmdpInstance, choice: impl Fn(usize, usize) -> usize) -> Self {
        let rules = instance
            .action_counts()
            .iter()
            .enumerate()
            .map(|(t, epoch)| {
                epoch
                    .iter()
                    .enumerate()
                    .map(|(x, &n)| one_hot(n, choice(t, x).min(n - 1)))
                    .collect()
            })
            .collect();
        Self { rules }
    }

    pub fn rules(&self) -> &[Vec<Vec<f64>>] {
        &self.rules
    }

    pub fn into_rules(self) -> Vec<Vec<Vec<f64>>> {
        self.rules
    }

    pub fn rule(&self, epoch: usize, state: usize) -> &[f64] {
        &self.rules[epoch][state]
    }

    pub fn decision_epochs(&self) -> usize {
        self.rules.len()
    }

    /// Check that the policy has a rule of the right length for every
    /// decision epoch and state of `instance`.
    pub fn check_shape(&self, instance: &RiskCmdpInstance) -> Result<(), PolicyError> {
        check_shape(&self.rules, instance.action_counts())
    }

    /// Replace the decision rule of one epoch with `other`'s.
    pub fn splice(&self, other: &Policy, epoch: usize) -> Result<Policy, PolicyError> {
        same_shape(self, other)?;
        let mut rules = self.rules.clone();
        rules[epoch] = other.rules[epoch].clone();
        Ok(Policy { rules })
    }

    /// `true` when every rule is a one-hot vector.
    pub fn is_deterministic(&self) -> bool {
        self.rules
            .iter()
            .flatten()
            .all(|row| row.iter().all(|&p| p == 0.0 || p == 1.0))
    }
}

fn one_hot(n: usize, hot: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    row[hot] = 1.0;
    row
}

fn check_row(epoch: usize, state: usize, row: &[f64]) -> Result<(), PolicyError> {
    let fail = |reason: String| PolicyError::NotDistribution { epoch, state, reason };
    if row.is_empty() {
        return Err(fail("empty rule".into()));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(fail("negative or non-finite probability".into()));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > RULE_TOL {
        return Err(fail(format!("sums to {sum}")));
    }
    Ok(())
}

fn check_shape(rules: &[Vec<Vec<f64>>], counts: &[Vec<usize>]) -> Result<(), PolicyError> {
    if rules.len() != counts.len() {
        return Err(PolicyError::Shape(format!(
            "{} decision epochs, expected {}",
            rules.len(),
            counts.len()
        )));
    }
    for (t, (epoch, n)) in rules.iter().zip(counts).enumerate() {
        if epoch.len() != n.len() {
            return Err(PolicyError::Shape(format!(
                "epoch {t}: {} states, expected {}",
                epoch.len(),
                n.len()
            )));
        }
        for (x, (row, &k)) in epoch.iter().zip(n).enumerate() {
            if row.len() != k {
                return Err(PolicyError::Shape(format!(
                    "epoch {t}, state {x}: {} actions, expected {k}",
                    row.len()
                )));
            }
        }
    }
    Ok(())
}

fn same_shape(a: &Policy, b: &Policy) -> Result<(), PolicyError> {
    let counts: Vec<Vec<usize>> = a
        .rules
        .iter()
        .map(|epoch| epoch.iter().map(Vec::len).collect())
        .collect();
    check_shape(&b.rules, &counts)
}

/// How restart policies are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestartMode {
    /// Each rule uniform on its probability simplex (flat Dirichlet).
    Interior,
    /// Each rule a uniformly chosen one-hot vector.
    Corner,
}

impl std::str::FromStr for RestartMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interior" => Ok(RestartMode::Interior),
            "corner" => Ok(RestartMode::Corner),
            other => Err(format!("unknown restart mode `{other}` (expected interior|corner)")),
        }
    }
}

impl fmt::Display for RestartMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RestartMode::Interior => f.write_str("interior"),
            RestartMode::Corner => f.write_str("corner"),
        }
    }
}

/// Draw a random policy for `instance`.
pub fn random_policy<R: Rng + ?Sized>(instance: &RiskCmdpInstance, mode: RestartMode, rng: &mut R) -> Policy {
    let rules = instance
        .action_counts()
        .iter()
        .map(|epoch| epoch.iter().map(|&n| random_rule(n, mode, rng)).collect())
        .collect();
    Policy { rules }
}

fn random_rule<R: Rng + ?Sized>(n: usize, mode: RestartMode, rng: &mut R) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    match mode {
        RestartMode::Corner => one_hot(n, rng.random_range(0..n)),
        RestartMode::Interior => {
            // Normalized i.i.d. exponentials are uniform on the simplex.
            let mut row: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|p| *p /= total);
            } else {
                row = vec![1.0 / n as f64; n];
            }
            row
        }
    }
}

/// `max_{t,x,a} |d_t(x,a) - d'_t(x,a)|`.
pub fn policy_distance(a: &Policy, b: &Policy) -> Result<f64, PolicyError> {
    same_shape(a, b)?;
    Ok(a.rules
        .iter()
        .flatten()
        .zip(b.rules.iter().flatten())
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max))
}

/// `from + step * (toward - from)`, rule by rule.
pub(crate) fn convex_step(from: &Policy, toward: &Policy, step: f64) -> Result<Policy, PolicyError> {
    same_shape(from, toward)?;
    let rules = from
        .rules
        .iter()
        .zip(&toward.rules)
        .map(|(e0, e1)| {
            e0.iter()
                .zip(e1)
                .map(|(r0, r1)| {
                    let mut row: Vec<f64> = r0.iter().zip(r1).map(|(p, q)| p + step * (q - p)).collect();
                    renormalize(&mut row);
                    row
                })
                .collect()
        })
        .collect();
    Ok(Policy { rules })
}

/// Clamp rounding negatives and rescale to sum one.
fn renormalize(row: &mut [f64]) {
    for p in row.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = row.iter().sum();
    if total > 0.0 && total != 1.0 {
        row.iter_mut().for_each(|p| *p /= total);
    }
}
