//! Oracle and invariant battery behind `riskcmdp verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use riskcmdp::evaluate::{backward_factors, dp_with_sense, forward_factors, unconstrained_dp};
use riskcmdp::fixtures::{random_instance, toy, RandomInstanceSpec};
use riskcmdp::grc::{fixed_point_residual, run_grc_seeded};
use riskcmdp::lp::{solve_epoch_lp, solve_lp_of_policy, EpochLp, LpStatus, LP_TOL};
use riskcmdp::model::{random_policy, CostKind, RestartMode, Sense};
use riskcmdp::oracle::{
    corner_policy_search, enumerate_backward_factors, enumerate_forward_factors, enumerate_lp_vertices,
    enumerate_paths_eval, no_better_than, randomized_grid_search, trajectory_count, PATH_CAP,
};
use riskcmdp::{evaluate_risk, f_linear, FactorSet, GrcConfig, Policy, RiskCmdpInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Small,
    Full,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl Check {
    fn new(name: &'static str, tolerance: f64, cases: usize, max_deviation: f64) -> Self {
        Self {
            name,
            passed: max_deviation <= tolerance,
            max_deviation,
            tolerance,
            cases,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub scale: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn factor_deviation(inst: &RiskCmdpInstance, pol: &Policy) -> f64 {
    let mut worst: f64 = 0.0;
    for kind in [CostKind::Reward, CostKind::Constraint] {
        let direct = enumerate_paths_eval(inst, kind, pol).expect("instance under the path cap");
        worst = worst.max(rel_err(evaluate_risk(inst, kind, pol), direct));
        let theta = forward_factors(inst, kind, pol).theta;
        let want = enumerate_forward_factors(inst, kind, pol).expect("instance under the path cap");
        for (a, b) in theta.iter().flatten().zip(want.iter().flatten()) {
            worst = worst.max(rel_err(*a, *b));
        }
        let q = backward_factors(inst, kind, pol).q;
        let want = enumerate_backward_factors(inst, kind, pol).expect("instance under the path cap");
        for (a, b) in q.iter().flatten().flatten().zip(want.iter().flatten().flatten()) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    worst
}

fn with_bound_between(inst: RiskCmdpInstance, rng: &mut ChaCha8Rng) -> RiskCmdpInstance {
    let alpha = inst.alpha(CostKind::Constraint).to_vec();
    let lo = dp_with_sense(&inst, CostKind::Constraint, Sense::Minimize).value(&alpha);
    let hi = dp_with_sense(&inst, CostKind::Constraint, Sense::Maximize).value(&alpha);
    let b = lo + rng.random_range(0.2..0.8) * (hi - lo);
    inst.with_bound(b).expect("bound above the minimum is valid")
}

fn random_lp(rng: &mut ChaCha8Rng) -> EpochLp {
    let states = rng.random_range(1..=3usize);
    let mut widths: Vec<usize> = (0..states).map(|_| rng.random_range(1..=3usize)).collect();
    while widths.iter().sum::<usize>() > 6 {
        let i = widths.iter().position(|&w| w > 1).unwrap();
        widths[i] -= 1;
    }
    let mut table = || -> Vec<Vec<f64>> {
        widths.iter().map(|&w| (0..w).map(|_| rng.random_range(0.1..2.0)).collect()).collect()
    };
    let objective = table();
    let constraint = table();
    let lo: f64 = constraint.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).sum();
    let hi: f64 = constraint.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum();
    let bound = lo + rng.random_range(-0.1..1.1) * (hi - lo);
    EpochLp {
        epoch: 0,
        objective,
        constraint,
        bound,
        sense: if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize },
    }
}

/// Run the battery. `extra` is checked against path enumeration too when
/// it is small enough.
pub fn run(scale: Scale, extra: Option<&RiskCmdpInstance>) -> Report {
    let n = |small: usize, full: usize| if scale == Scale::Small { small } else { full };
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e51);
    let spec = RandomInstanceSpec::default();
    let mut checks = Vec::new();

    let battery: Vec<(RiskCmdpInstance, Policy, Policy)> = (0..n(40, 100))
        .map(|i| {
            let inst = random_instance(&spec, &mut rng);
            let mode = if i % 2 == 0 { RestartMode::Interior } else { RestartMode::Corner };
            let pol = random_policy(&inst, mode, &mut rng);
            let other = random_policy(&inst, RestartMode::Interior, &mut rng);
            (inst, pol, other)
        })
        .collect();

    let worst = battery.iter().map(|(i, p, _)| factor_deviation(i, p)).fold(0.0, f64::max);
    checks.push(Check::new("factor_oracle", 1e-12, battery.len(), worst));

    let mut worst: f64 = 0.0;
    for (inst, pol, other) in &battery {
        let t = rng.random_range(0..inst.decision_epochs());
        let fwd = forward_factors(inst, CostKind::Reward, pol);
        let bwd = backward_factors(inst, CostKind::Reward, pol);
        let surrogate = f_linear(t, other, &fwd, &bwd).expect("epoch in range");
        let spliced = pol.splice(other, t).expect("same shape");
        let direct = enumerate_paths_eval(inst, CostKind::Reward, &spliced).expect("under the path cap");
        worst = worst.max(rel_err(surrogate, direct));
    }
    checks.push(Check::new("splice_identity", 1e-10, battery.len(), worst));

    let mut worst: f64 = 0.0;
    for (inst, pol, _) in &battery {
        for kind in [CostKind::Reward, CostKind::Constraint] {
            let fwd = forward_factors(inst, kind, pol);
            let bwd = backward_factors(inst, kind, pol);
            let value = evaluate_risk(inst, kind, pol);
            for t in 0..inst.decision_epochs() {
                worst = worst.max(rel_err(f_linear(t, pol, &fwd, &bwd).expect("epoch in range"), value));
            }
        }
    }
    checks.push(Check::new("epoch_invariance", 1e-10, battery.len(), worst));

    let lps = n(300, 2000);
    let mut worst: f64 = 0.0;
    for _ in 0..lps {
        let lp = random_lp(&mut rng);
        let deviation = match (solve_epoch_lp(&lp, LP_TOL), enumerate_lp_vertices(&lp)) {
            (Ok(sol), None) if sol.status == LpStatus::Infeasible => 0.0,
            (Ok(sol), Some((_, value))) if sol.status == LpStatus::Optimal => rel_err(sol.objective, value),
            _ => f64::INFINITY,
        };
        worst = worst.max(deviation);
    }
    checks.push(Check::new("simplex_vs_vertices", 1e-9, lps, worst));

    let constrained: Vec<RiskCmdpInstance> = (0..n(20, 50))
        .map(|_| {
            let inst = random_instance(&spec, &mut rng);
            with_bound_between(inst, &mut rng)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for inst in &constrained {
        let pol = random_policy(inst, RestartMode::Interior, &mut rng);
        if let Ok(sol) = solve_lp_of_policy(inst, &pol) {
            let reward = FactorSet::new(inst, CostKind::Reward, &pol);
            worst = worst.max(rel_err(reward.linear_sum(&sol.psi), sol.objective()));
        }
    }
    checks.push(Check::new("decomposition_exact", 1e-10, constrained.len(), worst));

    let dp_spec = RandomInstanceSpec { max_horizon: 6, ..spec.clone() };
    let cases = n(5, 20);
    let mut worst: f64 = 0.0;
    for seed in 0..cases as u64 {
        let inst = random_instance(&dp_spec, &mut rng);
        let dp = unconstrained_dp(&inst, CostKind::Reward).value(inst.alpha(CostKind::Reward));
        let cfg = GrcConfig { max_iters: 3000, seed, ..GrcConfig::default() };
        worst = worst.max(match run_grc_seeded(&inst, &cfg).ok().and_then(|r| r.best) {
            Some(best) => (best.reward_value - dp).abs(),
            None => f64::INFINITY,
        });
    }
    checks.push(Check::new("unconstrained_consistency", 1e-4, cases, worst));

    let toy_run = run_grc_seeded(&toy(0.5f64.exp()), &GrcConfig::default());
    let worst = match toy_run.ok().and_then(|r| r.best) {
        Some(best) => (best.reward_value - 0.5f64.exp()).abs(),
        None => f64::INFINITY,
    };
    checks.push(Check::new("constrained_toy", 1e-4, 1, worst));

    if scale == Scale::Full {
        let tiny = RandomInstanceSpec {
            max_states: 2,
            max_actions: 2,
            max_horizon: 3,
            ..spec.clone()
        };
        let cases = 10;
        let mut worst: f64 = 0.0;
        for seed in 0..cases as u64 {
            let inst = with_bound_between(random_instance(&tiny, &mut rng), &mut rng);
            let sense = inst.sense();
            let dp = unconstrained_dp(&inst, CostKind::Reward).value(inst.alpha(CostKind::Reward));
            let corner = corner_policy_search(&inst).ok().and_then(|o| o.best).map(|b| b.reward_value);
            let cfg = GrcConfig { max_iters: 2000, seed, ..GrcConfig::default() };
            let found = run_grc_seeded(&inst, &cfg).ok().and_then(|r| r.best).map(|b| b.reward_value);
            // Size of the worst violation of corner <= grc <= dp.
            let gap = |a: f64, b: f64| if no_better_than(sense, a, b, 0.0) { 0.0 } else { (a - b).abs() };
            worst = worst.max(match found {
                Some(g) => gap(g, dp).max(corner.map_or(0.0, |c| gap(c, g))),
                None => f64::INFINITY,
            });
        }
        checks.push(Check::new("sandwich", 1e-4, cases, worst));

        let mut worst: f64 = 0.0;
        let mut done = 0;
        while done < 5 {
            let inst = random_instance(&tiny, &mut rng);
            let rules = inst.action_counts().iter().flatten().filter(|&&k| k > 1).count();
            if !(2..=3).contains(&rules) {
                continue;
            }
            let inst = with_bound_between(inst, &mut rng);
            let residual = randomized_grid_search(&inst, 200)
                .ok()
                .and_then(|o| o.best)
                .and_then(|b| solve_lp_of_policy(&inst, &b.policy).ok())
                .and_then(|sol| fixed_point_residual(&inst, &sol.psi).ok());
            worst = worst.max(residual.map_or(f64::INFINITY, f64::abs));
            done += 1;
        }
        checks.push(Check::new("grid_fixed_point", 5e-3, done, worst));
    }

    if let Some(inst) = extra {
        if trajectory_count(inst) <= PATH_CAP {
            let pol = Policy::uniform(inst);
            checks.push(Check::new("config_factor_oracle", 1e-12, 1, factor_deviation(inst, &pol)));
        }
    }

    Report {
        scale: match scale {
            Scale::Small => "small",
            Scale::Full => "full",
        },
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
