//! Small reference instances and a random instance generator for tests,
//! verification runs and documentation.

use rand::Rng;

use crate::model::{CostSpec, InstanceParts, RiskCmdpInstance, Sense};

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// One state, two actions, `T = 2`. Reward and constraint both cost the
/// action index at the single decision epoch (`gamma = beta = 1`), terminal
/// cost zero. With `bound = e^0.5` and maximize the optimum randomizes with
/// `P(a = 1) = (e^0.5 - 1) / (e - 1)`.
pub fn toy(bound: f64) -> RiskCmdpInstance {
    let spec = CostSpec {
        running: vec![vec![vec![vec![0.0], vec![1.0]]]],
        terminal: vec![0.0],
        gamma: 1.0,
        beta: 1.0,
        alpha: vec![1.0],
    };
    RiskCmdpInstance::new(InstanceParts {
        horizon: 2,
        states: vec![labels(1); 2],
        actions: vec![vec![2]],
        kernel: vec![vec![vec![vec![1.0], vec![1.0]]]],
        reward: spec.clone(),
        constraint: spec,
        bound,
        sense: Sense::Maximize,
    })
    .expect("toy instance is valid")
}

/// `P(a = 1)` of the constrained toy optimum.
pub fn toy_optimal_mix(bound: f64) -> f64 {
    ((bound - 1.0) / (std::f64::consts::E - 1.0)).clamp(0.0, 1.0)
}

/// All costs zero, uniform kernel, `alpha` concentrated on state 0.
pub fn zero_cost(n_states: usize, n_actions: usize, horizon: usize, bound: f64) -> RiskCmdpInstance {
    let mut alpha = vec![0.0; n_states];
    alpha[0] = 1.0;
    let spec = CostSpec {
        running: vec![vec![vec![vec![0.0; n_states]; n_actions]; n_states]; horizon - 1],
        terminal: vec![0.0; n_states],
        gamma: 1.0,
        beta: 0.5,
        alpha,
    };
    RiskCmdpInstance::new(InstanceParts {
        horizon,
        states: vec![labels(n_states); horizon],
        actions: vec![vec![n_actions; n_states]; horizon - 1],
        kernel: vec![vec![vec![vec![1.0 / n_states as f64; n_states]; n_actions]; n_states]; horizon - 1],
        reward: spec.clone(),
        constraint: spec,
        bound,
        sense: Sense::Maximize,
    })
    .expect("zero-cost instance is valid")
}

/// Size limits and scalar choices for [`random_instance`].
#[derive(Clone, Debug)]
pub struct RandomInstanceSpec {
    pub max_states: usize,
    pub max_actions: usize,
    pub min_horizon: usize,
    pub max_horizon: usize,
    /// Raw costs are uniform on `[-cost_range, cost_range]`.
    pub cost_range: f64,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub bound: f64,
    pub sense: Sense,
}

impl Default for RandomInstanceSpec {
    fn default() -> Self {
        Self {
            max_states: 4,
            max_actions: 3,
            min_horizon: 2,
            max_horizon: 5,
            cost_range: 1.0,
            gammas: vec![-1.0, 1.0],
            betas: vec![0.5, 1.0],
            bound: f64::INFINITY,
            sense: Sense::Maximize,
        }
    }
}

fn distribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Strictly positive weights; exact normalization is checked at build time.
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let drift: f64 = 1.0 - p.iter().sum::<f64>();
    p[0] += drift;
    p
}

/// A random time-varying instance: state-space sizes, action counts,
/// kernels and costs all vary by epoch.
pub fn random_instance<R: Rng + ?Sized>(spec: &RandomInstanceSpec, rng: &mut R) -> RiskCmdpInstance {
    let horizon = rng.random_range(spec.min_horizon.max(2)..=spec.max_horizon.max(2));
    let states: Vec<Vec<String>> = (0..horizon)
        .map(|_| labels(rng.random_range(1..=spec.max_states)))
        .collect();
    let actions: Vec<Vec<usize>> = (0..horizon - 1)
        .map(|t| {
            (0..states[t].len())
                .map(|_| rng.random_range(1..=spec.max_actions))
                .collect()
        })
        .collect();
    let kernel = (0..horizon - 1)
        .map(|t| {
            actions[t]
                .iter()
                .map(|&n| (0..n).map(|_| distribution(states[t + 1].len(), rng)).collect())
                .collect()
        })
        .collect();
    let cost = |rng: &mut R| -> CostSpec {
        let running = (0..horizon - 1)
            .map(|t| {
                actions[t]
                    .iter()
                    .map(|&n| {
                        (0..n)
                            .map(|_| {
                                (0..states[t + 1].len())
                                    .map(|_| rng.random_range(-spec.cost_range..=spec.cost_range))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let terminal = (0..states[horizon - 1].len())
            .map(|_| rng.random_range(-spec.cost_range..=spec.cost_range))
            .collect();
        CostSpec {
            running,
            terminal,
            gamma: spec.gammas[rng.random_range(0..spec.gammas.len())],
            beta: spec.betas[rng.random_range(0..spec.betas.len())],
            alpha: distribution(states[0].len(), rng),
        }
    };
    let reward = cost(rng);
    let constraint = cost(rng);
    RiskCmdpInstance::new(InstanceParts {
        horizon,
        states,
        actions,
        kernel,
        reward,
        constraint,
        bound: spec.bound,
        sense: spec.sense,
    })
    .expect("generated instance is valid")
}
