use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskcmdp::evaluate::{dp_with_sense, unconstrained_dp};
use riskcmdp::fixtures::{random_instance, RandomInstanceSpec};
use riskcmdp::grc::{fixed_point_residual, run_grc_seeded};
use riskcmdp::lp::{solve_epoch_lp, solve_lp_of_policy, EpochLp, LpStatus, LP_TOL};
use riskcmdp::model::{random_policy, CostKind, RestartMode, Sense};
use riskcmdp::oracle::{corner_policy_search, enumerate_lp_vertices, no_better_than, randomized_grid_search};
use riskcmdp::{evaluate_risk, FactorSet, GrcConfig, RiskCmdpInstance};

/// A random instance whose bound lies strictly between the smallest and
/// largest achievable constraint values.
fn constrained_instance(seed: u64, spec: &RandomInstanceSpec) -> RiskCmdpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(spec, &mut rng);
    let alpha = inst.alpha(CostKind::Constraint).to_vec();
    let lo = dp_with_sense(&inst, CostKind::Constraint, Sense::Minimize).value(&alpha);
    let hi = dp_with_sense(&inst, CostKind::Constraint, Sense::Maximize).value(&alpha);
    let bound = lo + rng.random_range(0.2..0.8) * (hi - lo);
    inst.with_bound(bound).unwrap()
}

fn random_epoch_lp(rng: &mut ChaCha8Rng) -> EpochLp {
    let states = rng.random_range(1..=3usize);
    let mut widths: Vec<usize> = (0..states).map(|_| rng.random_range(1..=3usize)).collect();
    while widths.iter().sum::<usize>() > 6 {
        let i = widths.iter().position(|&w| w > 1).unwrap();
        widths[i] -= 1;
    }
    let table = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        widths.iter().map(|&w| (0..w).map(|_| rng.random_range(0.1..2.0)).collect()).collect()
    };
    let objective = table(rng);
    let constraint = table(rng);
    let lo: f64 = constraint.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).sum();
    let hi: f64 = constraint.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum();
    // Roughly one program in ten is infeasible.
    let bound = lo + rng.random_range(-0.1..1.1) * (hi - lo);
    EpochLp {
        epoch: 0,
        objective,
        constraint,
        bound,
        sense: if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_matches_vertex_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_epoch_lp(&mut rng);
        let sol = solve_epoch_lp(&lp, LP_TOL).unwrap();
        match enumerate_lp_vertices(&lp) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some((_, value)) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - value).abs() <= 1e-9 * value.abs().max(1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposed_program_is_exact(seed in any::<u64>()) {
        let inst = constrained_instance(seed, &RandomInstanceSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let pol = random_policy(&inst, RestartMode::Interior, &mut rng);
        let Ok(sol) = solve_lp_of_policy(&inst, &pol) else {
            return Ok(());
        };
        let reward = FactorSet::new(&inst, CostKind::Reward, &pol);
        let constraint = FactorSet::new(&inst, CostKind::Constraint, &pol);
        let joint = reward.linear_sum(&sol.psi);
        prop_assert!((joint - sol.objective()).abs() <= 1e-10 * joint.abs().max(1.0));
        for t in 0..inst.decision_epochs() {
            let g = constraint.epoch_value(t, &sol.psi.rules()[t]);
            prop_assert!(g <= inst.bound() * (1.0 + 1e-9));
            // At most one state randomizes, over at most two actions.
            let mixed: Vec<usize> = sol.psi.rules()[t]
                .iter()
                .map(|rule| rule.iter().filter(|&&q| q > 1e-12).count())
                .filter(|&n| n > 1)
                .collect();
            prop_assert!(mixed.len() <= 1 && mixed.iter().all(|&n| n == 2));
        }
        if constraint.value(&pol) <= inst.bound() {
            // A feasible policy is a candidate of its own program.
            let own = reward.linear_sum(&pol);
            prop_assert!(no_better_than(inst.sense(), own, sol.objective(), 1e-10 * own.abs().max(1.0)));
        }
    }

    #[test]
    fn grc_run_invariants(seed in any::<u64>()) {
        let inst = constrained_instance(seed, &RandomInstanceSpec::default());
        let cfg = GrcConfig { max_iters: 300, seed, ..GrcConfig::default() };
        let run = run_grc_seeded(&inst, &cfg).unwrap();
        let limit = inst.bound() * (1.0 + cfg.feasibility_tol);
        let bests: Vec<f64> = run.trace.iter().filter_map(|r| r.best_reward).collect();
        for w in bests.windows(2) {
            prop_assert!(!inst.sense().improves(w[0], w[1]));
        }
        let restarted = run.trace.iter().filter(|r| r.restarted).count();
        let infeasible = run.trace.iter().filter(|r| !r.feasible).count();
        prop_assert_eq!(run.trace.len(), cfg.max_iters);
        prop_assert_eq!(restarted, run.restarts.scheduled + run.restarts.infeasible_program);
        prop_assert_eq!(infeasible, run.restarts.infeasible_policy);
        prop_assert_eq!(&run, &run_grc_seeded(&inst, &cfg).unwrap());
        if let Some(best) = &run.best {
            prop_assert!(best.constraint_value <= limit);
            let reward = FactorSet::new(&inst, CostKind::Reward, &best.policy);
            let go = reward.linear_sum(&best.policy);
            let gf = inst.decision_epochs() as f64 * best.reward_value;
            prop_assert!((go - gf).abs() <= 1e-8 * gf.abs().max(1.0));
        }
    }
}

fn tiny_spec() -> RandomInstanceSpec {
    RandomInstanceSpec {
        max_states: 2,
        max_actions: 2,
        max_horizon: 3,
        ..RandomInstanceSpec::default()
    }
}

#[test]
fn oracle_sandwich_and_grc_dominance() {
    for seed in 0..12 {
        let inst = constrained_instance(seed, &tiny_spec());
        let sense = inst.sense();
        let dp = unconstrained_dp(&inst, CostKind::Reward).value(inst.alpha(CostKind::Reward));
        let corner = corner_policy_search(&inst).unwrap();
        let grid = randomized_grid_search(&inst, 20).unwrap();
        let grid_best = grid.best.as_ref().expect("bound lies above the minimum").reward_value;
        if let Some(c) = &corner.best {
            assert!(no_better_than(sense, c.reward_value, grid_best, 1e-9), "seed {seed}");
        }
        assert!(no_better_than(sense, grid_best, dp, 1e-9), "seed {seed}");

        let cfg = GrcConfig { max_iters: 2000, seed, ..GrcConfig::default() };
        let run = run_grc_seeded(&inst, &cfg).unwrap();
        let found = run.best.as_ref().expect("grc finds a feasible policy").reward_value;
        if let Some(c) = &corner.best {
            assert!(no_better_than(sense, c.reward_value, found, 1e-4), "seed {seed}");
        }
        assert!(no_better_than(sense, found, dp, 1e-9), "seed {seed}");
    }
}

#[test]
fn grid_optimum_is_nearly_fixed() {
    for seed in 20..25 {
        let inst = constrained_instance(seed, &tiny_spec());
        let grid = randomized_grid_search(&inst, 40).unwrap();
        let best = grid.best.unwrap().policy;
        let refined = solve_lp_of_policy(&inst, &best).unwrap().psi;
        let value = evaluate_risk(&inst, CostKind::Constraint, &refined);
        let residual = if value <= inst.bound() * (1.0 + 1e-9) {
            fixed_point_residual(&inst, &refined).unwrap()
        } else {
            fixed_point_residual(&inst, &best).unwrap()
        };
        assert!(residual <= 5e-2, "seed {seed}: residual {residual}");
    }
}
