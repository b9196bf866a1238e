use rand::Rng;

use super::{EnvError, EnvRecord, MixtureEnv, Setting, KERNEL_TOL};

/// Largest dimension accepted by the hard-instance builders (`2^12` actions).
pub const HARD_MAX_DIM: usize = 13;

/// Inputs of the episodic hard instance.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstanceParams {
    pub dim: usize,
    pub horizon: usize,
    /// Number of episodes `K`; sets the gap `Δ = √(δ/K)/(4√2)`.
    pub episodes: usize,
    pub param_bound: f64,
    /// Reach probability offset; `1/H` when `None`.
    pub delta: Option<f64>,
    /// `H × (d−1)` matrix of ±1 entries; `μ_h = Δ · mu_signs[h]`.
    pub mu_signs: Vec<Vec<i8>>,
}

/// A hard instance together with the constants used to build it.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub env: MixtureEnv,
    pub delta: f64,
    pub gap: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Per-stage `μ_h` (length `d−1`).
    pub mu: Vec<Vec<f64>>,
}

impl HardInstance {
    /// Index of `argmax_a ⟨μ_h, a⟩` (the sign pattern of `μ_h`).
    pub fn optimal_action(&self, stage: usize) -> usize {
        sign_index(&self.mu[stage])
    }
}

/// Action `index` of the hypercube `{−1,+1}^{m}`: bit `j` set means `a_j = +1`.
pub fn hard_action_vector(index: usize, m: usize) -> Vec<f64> {
    (0..m).map(|j| if (index >> j) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

fn sign_index(mu: &[f64]) -> usize {
    mu.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(j, _)| 1usize << j).sum()
}

fn action_label(index: usize, m: usize) -> String {
    hard_action_vector(index, m).iter().map(|&v| if v > 0.0 { '+' } else { '-' }).collect()
}

fn hard_constants(dim: usize, gap: f64) -> (f64, f64) {
    let spread = 1.0 + gap * (dim - 1) as f64;
    ((1.0 / spread).sqrt(), (gap / spread).sqrt())
}

fn check_signs(signs: &[i8], m: usize, what: &str) -> Result<(), EnvError> {
    if signs.len() != m {
        return Err(EnvError::Constraint(format!("{what} must have d−1 = {m} entries, got {}", signs.len())));
    }
    if signs.iter().any(|&v| v != 1 && v != -1) {
        return Err(EnvError::Constraint(format!("{what} entries must be ±1")));
    }
    Ok(())
}

/// Episodic hard-to-learn linear mixture MDP.
///
/// States `x_1..x_{H+2}` map to indices `0..=H+1`; `x_{H+1}` (index `H`) and
/// `x_{H+2}` (index `H+1`, the goal) are absorbing and only the goal pays
/// reward 1. From `x_i`, `i ≤ H`, action `a` leads to the goal with
/// probability `δ + ⟨μ_h, a⟩` and to `x_{i+1}` otherwise.
pub fn hard_mdp_episodic(params: &HardInstanceParams) -> Result<HardInstance, EnvError> {
    let HardInstanceParams { dim, horizon, episodes, param_bound, .. } = *params;
    if dim < 4 {
        return Err(EnvError::Constraint(format!("d ≥ 4 (got d = {dim})")));
    }
    if dim > HARD_MAX_DIM {
        return Err(EnvError::Constraint(format!("d ≤ {HARD_MAX_DIM} (got d = {dim})")));
    }
    if horizon < 3 {
        return Err(EnvError::Constraint(format!("H ≥ 3 (got H = {horizon})")));
    }
    if !(param_bound > 1.0) {
        return Err(EnvError::Constraint(format!("B > 1 (got B = {param_bound})")));
    }
    let m = dim - 1;
    let (k, h) = (episodes as f64, horizon as f64);
    let k_min_a = (m * m) as f64 * h / 2.0;
    let k_min_b = m as f64 / (32.0 * h * (param_bound - 1.0));
    if k < k_min_a {
        return Err(EnvError::Constraint(format!("K ≥ (d−1)²H/2 = {k_min_a} (got K = {episodes})")));
    }
    if k < k_min_b {
        return Err(EnvError::Constraint(format!("K ≥ (d−1)/(32H(B−1)) = {k_min_b} (got K = {episodes})")));
    }
    let delta = params.delta.unwrap_or(1.0 / h);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EnvError::Constraint(format!("0 < δ < 1 (got δ = {delta})")));
    }
    let gap = (delta / k).sqrt() / (4.0 * 2f64.sqrt());
    if 3.0 * m as f64 * gap > delta {
        return Err(EnvError::Constraint(format!("3(d−1)Δ ≤ δ (got 3(d−1)Δ = {}, δ = {delta})", 3.0 * m as f64 * gap)));
    }
    if params.mu_signs.len() != horizon {
        return Err(EnvError::Constraint(format!("mu_signs must have H = {horizon} rows")));
    }
    for (i, row) in params.mu_signs.iter().enumerate() {
        check_signs(row, m, &format!("mu_signs[{i}]"))?;
    }
    let (alpha, beta) = hard_constants(dim, gap);

    let ns = horizon + 2;
    let na = 1usize << m;
    let goal = horizon + 1;
    let mut features = vec![0.0; ns * na * ns * dim];
    let mut put = |s: usize, a: usize, sp: usize, first: f64, tail: &[f64]| {
        let off = ((s * na + a) * ns + sp) * dim;
        features[off] = first;
        features[off + 1..off + dim].copy_from_slice(tail);
    };
    for a in 0..na {
        let av = hard_action_vector(a, m);
        let neg: Vec<f64> = av.iter().map(|v| -beta * v).collect();
        let pos: Vec<f64> = av.iter().map(|v| beta * v).collect();
        for s in 0..horizon {
            put(s, a, s + 1, alpha * (1.0 - delta), &neg);
            put(s, a, goal, alpha * delta, &pos);
        }
        let zeros = vec![0.0; m];
        put(horizon, a, horizon, alpha, &zeros);
        put(goal, a, goal, alpha, &zeros);
    }

    let mu: Vec<Vec<f64>> = params.mu_signs.iter().map(|r| r.iter().map(|&v| gap * v as f64).collect()).collect();
    let thetas = mu
        .iter()
        .map(|mh| std::iter::once(1.0 / alpha).chain(mh.iter().map(|v| v / beta)).collect())
        .collect();
    let mut reward = vec![0.0; ns * na];
    for a in 0..na {
        reward[goal * na + a] = 1.0;
    }
    let mut states: Vec<String> = (1..=horizon + 2).map(|i| format!("x{i}")).collect();
    states[goal] = format!("x{} (goal)", horizon + 2);
    let record = EnvRecord {
        name: format!("hard-episodic-d{dim}-H{horizon}"),
        dim,
        states,
        actions: (0..na).map(|a| action_label(a, m)).collect(),
        setting: Setting::Episodic { horizon },
        initial_state: 0,
        rewards: vec![reward; horizon],
        features,
        thetas,
    };
    let env = MixtureEnv::new(record)?;
    Ok(HardInstance { env, delta, gap, alpha, beta, mu })
}

/// Stationary two-state variant of the hard instance for the discounted
/// setting (a constructed test environment).
///
/// From the start state, action `a` reaches the goal with probability
/// `δ + ⟨μ, a⟩`; the goal pays reward 1 and falls back to the start with
/// probability `δ`. Features reuse the episodic layout with `θ = (1/α, μ/β)`.
pub fn hard_mdp_discounted(dim: usize, gamma: f64, delta: f64, gap: f64, mu_signs: &[i8]) -> Result<HardInstance, EnvError> {
    if !(2..=HARD_MAX_DIM).contains(&dim) {
        return Err(EnvError::Constraint(format!("2 ≤ d ≤ {HARD_MAX_DIM} (got d = {dim})")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EnvError::Constraint(format!("0 < δ < 1 (got δ = {delta})")));
    }
    let m = dim - 1;
    if !(gap >= 0.0) || 3.0 * m as f64 * gap > delta {
        return Err(EnvError::Constraint(format!("0 ≤ Δ and 3(d−1)Δ ≤ δ (got Δ = {gap}, δ = {delta})")));
    }
    check_signs(mu_signs, m, "mu_signs")?;
    let (alpha, beta) = hard_constants(dim, gap);
    let (ns, na) = (2usize, 1usize << m);
    let (start, goal) = (0usize, 1usize);
    let mut features = vec![0.0; ns * na * ns * dim];
    for a in 0..na {
        let av = hard_action_vector(a, m);
        let base = |s: usize, sp: usize| ((s * na + a) * ns + sp) * dim;
        let o = base(start, start);
        features[o] = alpha * (1.0 - delta);
        for j in 0..m {
            features[o + 1 + j] = -beta * av[j];
        }
        let o = base(start, goal);
        features[o] = alpha * delta;
        for j in 0..m {
            features[o + 1 + j] = beta * av[j];
        }
        features[base(goal, goal)] = alpha * (1.0 - delta);
        features[base(goal, start)] = alpha * delta;
    }
    let mu: Vec<f64> = mu_signs.iter().map(|&v| gap * v as f64).collect();
    let theta: Vec<f64> = std::iter::once(1.0 / alpha).chain(mu.iter().map(|v| if beta > 0.0 { v / beta } else { 0.0 })).collect();
    let mut reward = vec![0.0; ns * na];
    for a in 0..na {
        reward[goal * na + a] = 1.0;
    }
    let record = EnvRecord {
        name: format!("hard-discounted-d{dim}"),
        dim,
        states: vec!["start".into(), "goal".into()],
        actions: (0..na).map(|a| action_label(a, m)).collect(),
        setting: Setting::Discounted { gamma },
        initial_state: start,
        rewards: vec![reward],
        features,
        thetas: vec![theta],
    };
    let env = MixtureEnv::new(record)?;
    Ok(HardInstance { env, delta, gap, alpha, beta, mu: vec![mu] })
}

/// Explicit tabular model: per-stage kernels `[s][a][s']` and rewards `[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularTables {
    pub n_states: usize,
    pub n_actions: usize,
    pub setting: Setting,
    pub kernels: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub initial_state: usize,
}

/// Re-encodes a tabular MDP as a linear mixture with `d = |S|·|A|·|S|`,
/// `φ(s'|s,a) = e_{(s,a,s')}/√|S|` and `θ_h = √|S|·P_h`.
pub fn tabular_as_mixture(name: &str, tables: &TabularTables) -> Result<MixtureEnv, EnvError> {
    let (ns, na) = (tables.n_states, tables.n_actions);
    let stages = match tables.setting {
        Setting::Episodic { horizon } => horizon,
        Setting::Discounted { .. } => 1,
    };
    if tables.kernels.len() != stages {
        return Err(EnvError::Shape { what: "kernel stages", expected: stages, got: tables.kernels.len() });
    }
    for (h, k) in tables.kernels.iter().enumerate() {
        if k.len() != ns * na * ns {
            return Err(EnvError::Shape { what: "kernel table", expected: ns * na * ns, got: k.len() });
        }
        for s in 0..ns {
            for a in 0..na {
                let row = &k[(s * na + a) * ns..(s * na + a + 1) * ns];
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(EnvError::Kernel { stage: h, state: s, action: a, reason: "entry outside [0,1]".into() });
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > KERNEL_TOL {
                    return Err(EnvError::Kernel { stage: h, state: s, action: a, reason: format!("row sums to {total}") });
                }
            }
        }
    }
    let d = ns * na * ns;
    let root = (ns as f64).sqrt();
    let mut features = vec![0.0; ns * na * ns * d];
    for idx in 0..d {
        features[idx * d + idx] = 1.0 / root;
    }
    let thetas = tables.kernels.iter().map(|k| k.iter().map(|p| p * root).collect()).collect();
    let record = EnvRecord {
        name: name.to_string(),
        dim: d,
        states: (0..ns).map(|s| format!("s{s}")).collect(),
        actions: (0..na).map(|a| format!("a{a}")).collect(),
        setting: tables.setting,
        initial_state: tables.initial_state,
        rewards: tables.rewards.clone(),
        features,
        thetas,
    };
    MixtureEnv::new(record)
}

/// Random tabular mixture: Dirichlet(1) transition rows, uniform rewards,
/// a fresh kernel per stage in the episodic setting. Starts in state 0.
pub fn random_tabular<R: Rng + ?Sized>(n_states: usize, n_actions: usize, setting: Setting, rng: &mut R) -> MixtureEnv {
    let stages = match setting {
        Setting::Episodic { horizon } => horizon,
        Setting::Discounted { .. } => 1,
    };
    let mut kernels = Vec::with_capacity(stages);
    let mut rewards = Vec::with_capacity(stages);
    for _ in 0..stages {
        let mut k = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let raw: Vec<f64> = (0..n_states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = raw.iter().sum();
            k.extend(raw.iter().map(|v| v / total));
        }
        kernels.push(k);
        rewards.push((0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect());
    }
    let tables = TabularTables { n_states, n_actions, setting, kernels, rewards, initial_state: 0 };
    tabular_as_mixture(&format!("random-tabular-S{n_states}-A{n_actions}"), &tables)
        .expect("random tabular tables are valid")
}

/// Chain `0 → 1 → … → n−1` (absorbing) with reward 1 in the last state.
/// Action 0 advances, action 1 stays put.
pub fn deterministic_chain(n_states: usize, setting: Setting) -> MixtureEnv {
    let stages = match setting {
        Setting::Episodic { horizon } => horizon,
        Setting::Discounted { .. } => 1,
    };
    let na = 2;
    let mut k = vec![0.0; n_states * na * n_states];
    let mut r = vec![0.0; n_states * na];
    for s in 0..n_states {
        let next = (s + 1).min(n_states - 1);
        k[(s * na) * n_states + next] = 1.0;
        k[(s * na + 1) * n_states + s] = 1.0;
    }
    for a in 0..na {
        r[(n_states - 1) * na + a] = 1.0;
    }
    let tables = TabularTables {
        n_states,
        n_actions: na,
        setting,
        kernels: vec![k; stages],
        rewards: vec![r; stages],
        initial_state: 0,
    };
    tabular_as_mixture(&format!("chain-{n_states}"), &tables).expect("chain tables are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn params(dim: usize, horizon: usize, episodes: usize) -> HardInstanceParams {
        let m = dim - 1;
        HardInstanceParams {
            dim,
            horizon,
            episodes,
            param_bound: 2.0,
            delta: None,
            mu_signs: (0..horizon).map(|h| (0..m).map(|j| if (h + j) % 3 == 0 { -1 } else { 1 }).collect()).collect(),
        }
    }

    #[test]
    fn hard_instance_d4_h3() {
        let hard = hard_mdp_episodic(&params(4, 3, 100)).unwrap();
        let want_gap = (1.0f64 / 300.0).sqrt() / (4.0 * 2f64.sqrt());
        assert!((hard.gap - want_gap).abs() < 1e-15);
        assert!((hard.delta - 1.0 / 3.0).abs() < 1e-15);
        let env = &hard.env;
        assert_eq!(env.n_actions(), 8);
        assert_eq!(env.n_states(), 5);
        for h in 0..3 {
            for s in 0..5 {
                for a in 0..8 {
                    let total: f64 = env.transition(h, s, a).iter().sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hard_instance_goal_probability() {
        let hard = hard_mdp_episodic(&params(5, 4, 200)).unwrap();
        let goal = 5;
        for h in 0..4 {
            for a in 0..16 {
                let av = hard_action_vector(a, 4);
                let ip: f64 = hard.mu[h].iter().zip(&av).map(|(m, x)| m * x).sum();
                for s in 0..4 {
                    let p = hard.env.transition(h, s, a)[goal];
                    assert!((p - (hard.delta + ip)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hard_instance_feature_and_norms() {
        let p = params(4, 3, 100);
        let hard = hard_mdp_episodic(&p).unwrap();
        let env = &hard.env;
        let goal = 4;
        let mut ind = vec![0.0; 5];
        ind[goal] = 1.0;
        for a in 0..8 {
            let phi = env.feature_expectation(&ind, 1, a);
            let av = hard_action_vector(a, 3);
            assert!((phi[0] - hard.alpha * hard.delta).abs() < 1e-15);
            for j in 0..3 {
                assert!((phi[1 + j] - hard.beta * av[j]).abs() < 1e-15);
            }
        }
        let spread = 1.0 + hard.gap * 3.0;
        for h in 0..3 {
            let n2 = env.theta(h).norm_squared();
            assert!((n2 - spread * spread).abs() < 1e-10);
            assert!(n2 <= p.param_bound * p.param_bound);
        }
        let mut rng = stream_rng(0, 0);
        assert!(env.max_feature_norm(12, 0, &mut rng) <= 1.0 + 1e-12);
    }

    #[test]
    fn hard_instance_absorbing_goal() {
        let hard = hard_mdp_episodic(&params(4, 3, 100)).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..200 {
            assert_eq!(hard.env.sample_transition(1, 4, 5, &mut rng), 4);
            assert_eq!(hard.env.sample_transition(2, 3, 2, &mut rng), 3);
        }
    }

    #[test]
    fn hard_instance_rejects_bad_parameters() {
        let err = |p: HardInstanceParams| hard_mdp_episodic(&p).unwrap_err().to_string();
        assert!(err(params(4, 3, 10)).contains("(d−1)²H/2"));
        let mut p = params(4, 3, 100);
        p.param_bound = 1.0;
        assert!(err(p).contains("B > 1"));
        let mut p = params(4, 3, 100);
        p.param_bound = 1.0 + 1e-6;
        assert!(err(p).contains("32H(B−1)"));
        assert!(err(params(4, 2, 100)).contains("H ≥ 3"));
        let mut p = params(4, 3, 100);
        p.mu_signs[1][0] = 0;
        assert!(err(p).contains("±1"));
        let m = 13;
        let mut p = params(4, 3, 100);
        p.dim = 14;
        p.mu_signs = vec![vec![1; m]; 3];
        assert!(err(p).contains("d ≤ 13"));
    }

    #[test]
    fn tabular_round_trips_kernel() {
        let mut rng = stream_rng(2, 0);
        let env = random_tabular(5, 3, Setting::Episodic { horizon: 2 }, &mut rng);
        assert_eq!(env.dim(), 75);
        let rec = env.record();
        for h in 0..2 {
            let theta = env.theta(h);
            for s in 0..5 {
                for a in 0..3 {
                    for sp in 0..5 {
                        let from_features: f64 = env.feature(s, a, sp).iter().zip(theta.iter()).map(|(f, t)| f * t).sum();
                        let orig = rec.thetas[h][(s * 3 + a) * 5 + sp] / 5f64.sqrt();
                        assert!((from_features - orig).abs() < 1e-12);
                    }
                }
            }
            // ‖θ_h‖ = √(|S| Σ P²) ≤ |S|√|A|
            let sum_sq: f64 = rec.thetas[h].iter().map(|t| t * t / 5.0).sum();
            assert!((theta.norm() - (5.0 * sum_sq).sqrt()).abs() < 1e-12);
            assert!(theta.norm() <= 5.0 * 3f64.sqrt());
        }
        assert!(env.max_feature_norm(12, 0, &mut rng) <= 1.0 + 1e-12);
    }

    #[test]
    fn chain_round_trips_one_hot() {
        let env = deterministic_chain(3, Setting::Discounted { gamma: 0.9 });
        let th = env.theta(0);
        for s in 0..3 {
            let next = (s + 1).min(2);
            for sp in 0..3 {
                let p: f64 = env.feature(s, 0, sp).iter().zip(th.iter()).map(|(f, t)| f * t).sum();
                assert!((p - if sp == next { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tabular_rejects_malformed_rows() {
        let tables = TabularTables {
            n_states: 2,
            n_actions: 1,
            setting: Setting::Discounted { gamma: 0.5 },
            kernels: vec![vec![0.5, 0.6, 1.0, 0.0]],
            rewards: vec![vec![0.0, 1.0]],
            initial_state: 0,
        };
        assert!(matches!(tabular_as_mixture("bad", &tables), Err(EnvError::Kernel { .. })));
    }

    #[test]
    fn discounted_hard_variant_is_valid() {
        let hard = hard_mdp_discounted(4, 0.9, 0.2, 0.01, &[1, -1, 1]).unwrap();
        assert_eq!(hard.env.n_states(), 2);
        let a = hard.optimal_action(0);
        let p = hard.env.transition(0, 0, a)[1];
        assert!((p - (0.2 + 0.03)).abs() < 1e-12);
        let mut rng = stream_rng(3, 0);
        assert!(hard.env.max_feature_norm(12, 0, &mut rng) <= 1.0 + 1e-12);
        assert!(hard_mdp_discounted(4, 0.9, 0.05, 0.01, &[1, 1, 1]).is_err());
    }
}
