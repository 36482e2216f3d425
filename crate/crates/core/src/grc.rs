//! Local fixed-point iteration and the global random-restart search.
//!
//! The local step moves a policy toward a solution of its own linear program,
//! `d_{k+1} = d_k + eps_k (Psi(d_k) - d_k)`, with `eps_k = c / (k0 + k)`.
//! The global search interleaves this step with restarts drawn with
//! probability `min(1, w / k)`, replaces any policy that violates the bound
//! by a fresh random one, and keeps the best feasible policy seen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::FactorSet;
use crate::lp::{solve_with_factors, LpError, LpOptions, PolicyLpSolution, LP_TOL};
use crate::model::{convex_step, random_policy, CostKind, Policy, PolicyError, RestartMode, RiskCmdpInstance};

/// Consecutive non-restart iterates with a small residual needed to stop early.
pub const EARLY_STOP_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrcConfig {
    /// Iterate budget `K`.
    pub max_iters: usize,
    /// Restart weight `w` in `p_k = min(1, w / k)`.
    pub restart_weight: f64,
    /// `c` in `eps_k = c / (k0 + k)`.
    pub step_scale: f64,
    /// `k0` in `eps_k = c / (k0 + k)`.
    pub step_offset: f64,
    pub restart_mode: RestartMode,
    pub seed: u64,
    /// Relative slack on the bound: feasible means `J_c <= B (1 + tol)`.
    pub feasibility_tol: f64,
    pub residual_tol: f64,
    /// Stop once the residual stays below `residual_tol` for
    /// [`EARLY_STOP_WINDOW`] consecutive local steps.
    pub early_stop: bool,
    /// Record every `trace_stride`-th iterate (plus the first and last).
    pub trace_stride: usize,
    /// Shuffle LP columns with the run generator, picking a random optimal
    /// vertex when the optimum is not unique.
    pub randomize_lp: bool,
}

impl Default for GrcConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            restart_weight: 1.0,
            step_scale: 20.0,
            step_offset: 20.0,
            restart_mode: RestartMode::Corner,
            seed: 0,
            feasibility_tol: 1e-6,
            residual_tol: 1e-9,
            early_stop: false,
            trace_stride: 1,
            randomize_lp: false,
        }
    }
}

impl GrcConfig {
    pub fn validate(&self) -> Result<(), GrcError> {
        let bad = |msg: String| Err(GrcError::InvalidConfig(msg));
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.restart_weight > 0.0 && self.restart_weight.is_finite()) {
            return bad(format!("restart weight must be positive, got {}", self.restart_weight));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return bad(format!("step scale must be positive, got {}", self.step_scale));
        }
        if !(self.step_offset >= 0.0 && self.step_offset.is_finite()) {
            return bad(format!("step offset must be nonnegative, got {}", self.step_offset));
        }
        // eps_k is decreasing in k, so eps_1 < 1 keeps every step in (0, 1).
        if self.step_scale >= self.step_offset + 1.0 {
            return bad(format!(
                "first step {}/({}+1) must be below 1",
                self.step_scale, self.step_offset
            ));
        }
        if !(self.feasibility_tol >= 0.0) || !(self.residual_tol >= 0.0) {
            return bad("tolerances must be nonnegative".into());
        }
        if self.trace_stride == 0 {
            return bad("trace stride must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrcError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("iterate {iteration}: non-finite {what}")]
    NonFinite { iteration: usize, what: &'static str },
    #[error("iterate {iteration}: {source}")]
    Lp {
        iteration: usize,
        #[source]
        source: LpError,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// `eps_k = c / (k0 + k)` for `k >= 1`.
pub fn step_size(k: usize, config: &GrcConfig) -> f64 {
    config.step_scale / (config.step_offset + k as f64)
}

/// `min(1, w / k)` for `k >= 1`.
pub fn restart_probability(k: usize, weight: f64) -> f64 {
    (weight / k as f64).min(1.0)
}

/// One local improvement step `policy + eps (psi - policy)`.
pub fn local_improve(policy: &Policy, psi: &Policy, eps: f64) -> Result<Policy, PolicyError> {
    convex_step(policy, psi, eps)
}

/// `sum_t [f_t(Psi(d)) - f_t(d)]` with the reward factors of `d`, signed so
/// that it is nonnegative under either sense. Zero certifies that `d` solves
/// its own program. Fails when the program of `d` is infeasible.
pub fn fixed_point_residual(instance: &RiskCmdpInstance, policy: &Policy) -> Result<f64, LpError> {
    let reward = FactorSet::new(instance, CostKind::Reward, policy);
    let constraint = instance
        .is_constrained()
        .then(|| FactorSet::new(instance, CostKind::Constraint, policy));
    let mut options: LpOptions<'_, ChaCha8Rng> = LpOptions {
        tol: LP_TOL,
        shuffle: None,
    };
    let sol = solve_with_factors(instance, &reward, constraint.as_ref(), &mut options)?;
    Ok(residual_from(instance, &reward, policy, &sol))
}

fn residual_from(instance: &RiskCmdpInstance, reward: &FactorSet, policy: &Policy, sol: &PolicyLpSolution) -> f64 {
    instance.sense().sign() * (sol.objective() - reward.linear_sum(policy))
}

/// One row of the iterate trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub restarted: bool,
    pub reward_value: f64,
    pub constraint_value: f64,
    pub feasible: bool,
    pub best_reward: Option<f64>,
    /// Residual of this iterate when it was feasible and its program solved.
    pub residual: Option<f64>,
}

/// The best feasible policy seen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub policy: Policy,
    pub reward_value: f64,
    pub constraint_value: f64,
    /// Iterate at which it was recorded.
    pub found_at: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartCounts {
    /// Restarts drawn with probability `p_k`.
    pub scheduled: usize,
    /// Local steps abandoned because the program of the current policy was infeasible.
    pub infeasible_program: usize,
    /// Policies replaced because they violated the bound.
    pub infeasible_policy: usize,
}

impl RestartCounts {
    pub fn total(&self) -> usize {
        self.scheduled + self.infeasible_program + self.infeasible_policy
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrcResult {
    pub best: Option<Incumbent>,
    /// Fixed-point residual at the best policy, if its program is feasible.
    pub residual: Option<f64>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub restarts: RestartCounts,
    pub seed: u64,
}

impl GrcResult {
    pub fn feasible_ever(&self) -> bool {
        self.best.is_some()
    }
}

/// Run the global search with a generator seeded from `config.seed`.
pub fn run_grc_seeded(instance: &RiskCmdpInstance, config: &GrcConfig) -> Result<GrcResult, GrcError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_grc(instance, config, &mut rng)
}

struct Evaluated {
    reward: FactorSet,
    reward_value: f64,
    constraint_value: f64,
}

fn evaluate(instance: &RiskCmdpInstance, policy: &Policy, iteration: usize) -> Result<Evaluated, GrcError> {
    let reward = FactorSet::new(instance, CostKind::Reward, policy);
    let reward_value = reward.value(policy);
    let constraint_value = crate::evaluate::evaluate_risk(instance, CostKind::Constraint, policy);
    if !reward_value.is_finite() {
        return Err(GrcError::NonFinite {
            iteration,
            what: "reward value",
        });
    }
    if !constraint_value.is_finite() {
        return Err(GrcError::NonFinite {
            iteration,
            what: "constraint value",
        });
    }
    Ok(Evaluated {
        reward,
        reward_value,
        constraint_value,
    })
}

fn solve_program<R: Rng + ?Sized>(
    instance: &RiskCmdpInstance,
    policy: &Policy,
    reward: &FactorSet,
    config: &GrcConfig,
    rng: &mut R,
) -> Result<PolicyLpSolution, LpError> {
    let constraint = instance
        .is_constrained()
        .then(|| FactorSet::new(instance, CostKind::Constraint, policy));
    let mut options = LpOptions {
        tol: LP_TOL,
        shuffle: config.randomize_lp.then_some(rng),
    };
    solve_with_factors(instance, reward, constraint.as_ref(), &mut options)
}

/// Run the global search for `config.max_iters` iterates.
pub fn run_grc<R: Rng + ?Sized>(
    instance: &RiskCmdpInstance,
    config: &GrcConfig,
    rng: &mut R,
) -> Result<GrcResult, GrcError> {
    config.validate()?;
    let sense = instance.sense();
    let limit = instance.bound() * (1.0 + config.feasibility_tol);

    let mut current = random_policy(instance, config.restart_mode, rng);
    // Program of `current`, solved when it was evaluated.
    let mut program: Option<PolicyLpSolution> = None;
    let mut best: Option<Incumbent> = None;
    let mut trace = Vec::new();
    let mut restarts = RestartCounts::default();
    let mut settled = 0usize;
    let mut iterations = 0;

    for k in 1..=config.max_iters {
        iterations = k;
        let mut restarted = false;
        if rng.random_bool(restart_probability(k, config.restart_weight)) {
            current = random_policy(instance, config.restart_mode, rng);
            program = None;
            restarts.scheduled += 1;
            restarted = true;
        } else {
            let solved = match program.take() {
                Some(sol) => Ok(sol),
                None => {
                    let reward = FactorSet::new(instance, CostKind::Reward, &current);
                    solve_program(instance, &current, &reward, config, rng)
                }
            };
            match solved {
                Ok(sol) => current = local_improve(&current, &sol.psi, step_size(k, config))?,
                Err(LpError::Infeasible { .. }) => {
                    current = random_policy(instance, config.restart_mode, rng);
                    restarts.infeasible_program += 1;
                    restarted = true;
                }
                Err(source) => return Err(GrcError::Lp { iteration: k, source }),
            }
        }

        let eval = evaluate(instance, &current, k)?;
        let feasible = eval.constraint_value <= limit;
        let mut residual = None;
        if feasible {
            let improves = best
                .as_ref()
                .is_none_or(|b| sense.improves(eval.reward_value, b.reward_value));
            if improves {
                best = Some(Incumbent {
                    policy: current.clone(),
                    reward_value: eval.reward_value,
                    constraint_value: eval.constraint_value,
                    found_at: k,
                });
            }
            match solve_program(instance, &current, &eval.reward, config, rng) {
                Ok(sol) => {
                    residual = Some(residual_from(instance, &eval.reward, &current, &sol));
                    program = Some(sol);
                }
                Err(LpError::Infeasible { .. }) => program = None,
                Err(source) => return Err(GrcError::Lp { iteration: k, source }),
            }
        }

        if k == 1 || k == config.max_iters || k % config.trace_stride == 0 {
            trace.push(TraceRow {
                k,
                restarted,
                reward_value: eval.reward_value,
                constraint_value: eval.constraint_value,
                feasible,
                best_reward: best.as_ref().map(|b| b.reward_value),
                residual,
            });
        }

        if !feasible {
            current = random_policy(instance, config.restart_mode, rng);
            program = None;
            restarts.infeasible_policy += 1;
        }

        if config.early_stop {
            match residual {
                Some(r) if !restarted && r.abs() < config.residual_tol => settled += 1,
                _ => settled = 0,
            }
            if settled >= EARLY_STOP_WINDOW {
                if trace.last().map(|row| row.k) != Some(k) {
                    trace.push(TraceRow {
                        k,
                        restarted,
                        reward_value: eval.reward_value,
                        constraint_value: eval.constraint_value,
                        feasible,
                        best_reward: best.as_ref().map(|b| b.reward_value),
                        residual,
                    });
                }
                break;
            }
        }
    }

    let residual = best
        .as_ref()
        .and_then(|b| fixed_point_residual(instance, &b.policy).ok());
    Ok(GrcResult {
        best,
        residual,
        trace,
        iterations,
        restarts,
        seed: config.seed,
    })
}

/// Independent runs over `seeds`, executed on scoped threads. Returns the
/// per-seed results in seed order and the index of the best feasible one.
pub fn run_grc_multi(
    instance: &RiskCmdpInstance,
    config: &GrcConfig,
    seeds: &[u64],
) -> Result<(Vec<GrcResult>, Option<usize>), GrcError> {
    config.validate()?;
    let results: Vec<Result<GrcResult, GrcError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = GrcConfig { seed, ..config.clone() };
                scope.spawn(move || run_grc_seeded(instance, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let sense = instance.sense();
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(inc) = &r.best {
            let better = match best.and_then(|j| results[j].best.as_ref()) {
                None => true,
                Some(b) => sense.improves(inc.reward_value, b.reward_value),
            };
            if better {
                best = Some(i);
            }
        }
    }
    Ok((results, best))
}
