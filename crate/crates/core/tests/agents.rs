use bernstein_rl::bandit::{self, AgentSpec, BanditEnv, LearnerSpec, SigmaSchedule};
use bernstein_rl::discounted::{self, DiscountedConfig, DiscountedVariant};
use bernstein_rl::envs::{random_tabular, Setting};
use bernstein_rl::episodic::{self, EpisodicConfig, EpisodicVariant};
use bernstein_rl::rng::stream_rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn episodic_traces_are_ordered_and_optimistic(
        env_seed in 0u64..1000,
        states in 2usize..5,
        actions in 1usize..4,
        horizon in 1usize..5,
        seed in 0u64..1000,
    ) {
        let env = random_tabular(states, actions, Setting::Episodic { horizon }, &mut stream_rng(env_seed, 0));
        let cfg = EpisodicConfig::for_env(&env, EpisodicVariant::UcrlVtrPlus, 0.1);
        let run = episodic::run_seed(&env, &cfg, 20, 3, seed).unwrap();
        prop_assert!(run.trace.is_well_ordered());
        prop_assert!(run.trace.records.windows(2).all(|w| w[1].cumulative_regret >= w[0].cumulative_regret));
        prop_assert!(run.q_dominates);
        prop_assert!(run.potentials_ok);
        prop_assert_eq!(run.steps, 20 * horizon as u64);
    }

    #[test]
    fn discounted_epochs_within_bound(env_seed in 0u64..1000, gamma in 0.5f64..0.95, seed in 0u64..1000) {
        let env = random_tabular(3, 2, Setting::Discounted { gamma }, &mut stream_rng(env_seed, 0));
        let cfg = DiscountedConfig::for_env(&env, DiscountedVariant::UclkPlus, 0.1, 300);
        let run = discounted::run_seed(&env, &cfg, 300, 3, seed).unwrap();
        prop_assert!(run.trace.is_well_ordered());
        prop_assert!(run.epochs as f64 <= run.epoch_bound);
        prop_assert_eq!(run.optimistic_plans, run.plans);
        prop_assert!(run.trace.records.iter().all(|r| r.proxy_regret >= -1e-9));
    }

    #[test]
    fn bandit_runs_keep_truth_covered(dim in 1usize..6, env_seed in 0u64..1000, seed in 0u64..1000) {
        let env = BanditEnv::unit_sphere(dim, 8, 1.0, 1.0, SigmaSchedule::Cyclic(vec![0.05, 0.5, 1.0]), true, env_seed)
            .unwrap();
        for spec in [AgentSpec::weighted_oful(dim, 1.0, 0.1, 1.0, 1.0, 1.0), AgentSpec::oful(dim, 1.0, 0.1, 1.0, 1.0, 1.0)] {
            let run = bandit::run_seed(&env, &LearnerSpec::Agent(spec), 200, 0, seed).unwrap();
            prop_assert!(run.always_covered);
            prop_assert!(run.potential <= run.potential_bound);
            prop_assert!(run.trace.records.iter().all(|r| r.regret >= 0.0));
        }
    }
}

#[test]
fn oracles_have_zero_regret() {
    let env = random_tabular(4, 3, Setting::Episodic { horizon: 3 }, &mut stream_rng(1, 0));
    let cfg = EpisodicConfig::for_env(&env, EpisodicVariant::Oracle, 0.1);
    assert!(episodic::run_seed(&env, &cfg, 30, 0, 0).unwrap().trace.final_cumulative().abs() < 1e-9);

    let env = BanditEnv::unit_sphere(3, 6, 1.0, 1.0, SigmaSchedule::Constant(0.1), false, 2).unwrap();
    let run = bandit::run_seed(&env, &LearnerSpec::Oracle, 100, 0, 0).unwrap();
    assert_eq!(run.trace.final_cumulative(), 0.0);
}
