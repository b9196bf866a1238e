//! Exact planning on the true model, used to score the learners.

use nalgebra::{DMatrix, DVector};

use super::{MixtureEnv, Setting};

/// Sup-norm stopping tolerance of discounted value iteration.
pub const VI_TOL: f64 = 1e-10;

/// Per-stage action values, state values (with the terminal `V_{H+1} ≡ 0`)
/// and greedy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StageValues {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub policy: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedValues {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub policy: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimalValues {
    Episodic(StageValues),
    Discounted(DiscountedValues),
}

pub fn optimal_values(env: &MixtureEnv) -> OptimalValues {
    match env.setting() {
        Setting::Episodic { .. } => OptimalValues::Episodic(episodic_optimal(env)),
        Setting::Discounted { .. } => OptimalValues::Discounted(discounted_optimal(env)),
    }
}

/// First index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn backup(env: &MixtureEnv, stage: usize, next: &[f64], scale: f64) -> Vec<f64> {
    let (ns, na) = (env.n_states(), env.n_actions());
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            q[s * na + a] = env.reward(stage, s, a) + scale * env.expected_value(stage, s, a, next);
        }
    }
    q
}

/// Backward induction `Q*_h = r_h + P_h V*_{h+1}`.
pub fn episodic_optimal(env: &MixtureEnv) -> StageValues {
    let horizon = env.horizon().expect("episodic environment");
    let (ns, na) = (env.n_states(), env.n_actions());
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    let mut q = vec![Vec::new(); horizon];
    let mut policy = vec![vec![0; ns]; horizon];
    for h in (0..horizon).rev() {
        let qh = backup(env, h, &v[h + 1], 1.0);
        for s in 0..ns {
            let (a, best) = argmax(&qh[s * na..(s + 1) * na]);
            policy[h][s] = a;
            v[h][s] = best;
        }
        q[h] = qh;
    }
    StageValues { q, v, policy }
}

/// State values of a deterministic stage-dependent policy; `H+1` rows.
pub fn episodic_policy_value(env: &MixtureEnv, policy: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let horizon = env.horizon().expect("episodic environment");
    let ns = env.n_states();
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..ns {
            let a = policy[h][s];
            v[h][s] = env.reward(h, s, a) + env.expected_value(h, s, a, &v[h + 1]);
        }
    }
    v
}

/// Exact value of a stationary deterministic policy: solves `(I − γP_π)V = r_π`.
pub fn discounted_policy_value(env: &MixtureEnv, policy: &[usize]) -> Vec<f64> {
    let gamma = env.gamma().expect("discounted environment");
    let ns = env.n_states();
    let mut m = DMatrix::<f64>::identity(ns, ns);
    let mut r = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        let a = policy[s];
        r[s] = env.reward(0, s, a);
        for (sp, p) in env.transition(0, s, a).iter().enumerate() {
            m[(s, sp)] -= gamma * p;
        }
    }
    let sol = m.lu().solve(&r).expect("I − γP is nonsingular for γ < 1");
    sol.iter().copied().collect()
}

/// Value iteration to [`VI_TOL`], then policy iteration on the greedy
/// policy so that `v` is the exact value of `policy`.
pub fn discounted_optimal(env: &MixtureEnv) -> DiscountedValues {
    let gamma = env.gamma().expect("discounted environment");
    let (ns, na) = (env.n_states(), env.n_actions());
    let mut v = vec![0.0; ns];
    loop {
        let q = backup(env, 0, &v, gamma);
        let next: Vec<f64> = (0..ns).map(|s| argmax(&q[s * na..(s + 1) * na]).1).collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff <= VI_TOL {
            break;
        }
    }
    let q = backup(env, 0, &v, gamma);
    let mut policy: Vec<usize> = (0..ns).map(|s| argmax(&q[s * na..(s + 1) * na]).0).collect();
    let mut v = discounted_policy_value(env, &policy);
    for _ in 0..100 {
        let q = backup(env, 0, &v, gamma);
        let mut changed = false;
        for s in 0..ns {
            let row = &q[s * na..(s + 1) * na];
            let (a, best) = argmax(row);
            if best > row[policy[s]] + 1e-12 {
                policy[s] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        v = discounted_policy_value(env, &policy);
    }
    let q = backup(env, 0, &v, gamma);
    DiscountedValues { q, v, policy }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{deterministic_chain, hard_mdp_episodic, random_tabular, HardInstanceParams, TabularTables};
    use crate::rng::stream_rng;

    #[test]
    fn zero_rewards_give_zero_values() {
        let mut rng = stream_rng(0, 0);
        let env = random_tabular(3, 2, Setting::Episodic { horizon: 4 }, &mut rng);
        let mut rec = env.record().clone();
        for r in rec.rewards.iter_mut() {
            r.iter_mut().for_each(|x| *x = 0.0);
        }
        let env = MixtureEnv::new(rec).unwrap();
        let vals = episodic_optimal(&env);
        assert!(vals.v.iter().flatten().all(|&x| x == 0.0));

        let env = random_tabular(3, 2, Setting::Discounted { gamma: 0.8 }, &mut rng);
        let mut rec = env.record().clone();
        rec.rewards[0].iter_mut().for_each(|x| *x = 0.0);
        let env = MixtureEnv::new(rec).unwrap();
        assert!(discounted_optimal(&env).v.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn hard_instance_optimal_actions_follow_mu() {
        let p = HardInstanceParams {
            dim: 4,
            horizon: 4,
            episodes: 100,
            param_bound: 2.0,
            delta: None,
            mu_signs: vec![vec![1, -1, 1], vec![-1, -1, 1], vec![1, 1, 1], vec![-1, 1, -1]],
        };
        let hard = hard_mdp_episodic(&p).unwrap();
        let vals = episodic_optimal(&hard.env);
        // In stage h the learner sits in x_{h+1} (index h); the last stage
        // has no reward-relevant choice, so check all earlier ones.
        for h in 0..3 {
            assert_eq!(vals.policy[h][h], hard.optimal_action(h), "stage {h}");
        }
    }

    #[test]
    fn chain_closed_form() {
        let gamma = 0.9;
        let env = deterministic_chain(2, Setting::Discounted { gamma });
        let vals = discounted_optimal(&env);
        assert!((vals.v[1] - 1.0 / (1.0 - gamma)).abs() < 1e-12);
        assert!((vals.v[0] - gamma / (1.0 - gamma)).abs() < 1e-12);
        assert_eq!(vals.policy[0], 0);
    }

    #[test]
    fn policy_evaluation_matches_optimal_for_optimal_policy() {
        let mut rng = stream_rng(1, 0);
        let env = random_tabular(5, 3, Setting::Episodic { horizon: 4 }, &mut rng);
        let opt = episodic_optimal(&env);
        assert_eq!(episodic_policy_value(&env, &opt.policy), opt.v);

        let env = random_tabular(5, 3, Setting::Discounted { gamma: 0.9 }, &mut rng);
        let opt = discounted_optimal(&env);
        // Bellman optimality residual
        let na = 3;
        for s in 0..5 {
            let best = (0..na).map(|a| opt.q[s * na + a]).fold(f64::MIN, f64::max);
            assert!((best - opt.v[s]).abs() < 1e-10);
        }
        let any = vec![2usize; 5];
        let v = discounted_policy_value(&env, &any);
        assert!(v.iter().zip(&opt.v).all(|(a, b)| a <= &(b + 1e-10)));
    }

    #[test]
    fn policy_value_of_deterministic_tables() {
        let tables = TabularTables {
            n_states: 2,
            n_actions: 1,
            setting: Setting::Episodic { horizon: 3 },
            kernels: vec![vec![0.0, 1.0, 0.0, 1.0]; 3],
            rewards: vec![vec![0.5, 1.0]; 3],
            initial_state: 0,
        };
        let env = crate::envs::tabular_as_mixture("t", &tables).unwrap();
        let v = episodic_policy_value(&env, &vec![vec![0, 0]; 3]);
        assert!((v[0][0] - 2.5).abs() < 1e-12);
        assert!((v[0][1] - 3.0).abs() < 1e-12);
    }
}
