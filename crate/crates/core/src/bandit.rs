//! Weighted OFUL and OFUL over finite decision sets.
//!
//! The optimistic choice `argmax_{a ∈ D_t, μ ∈ C_{t-1}} ⟨a, μ⟩` over an
//! ellipsoid `C = {μ : ‖μ − μ̂‖_A ≤ w}` is `argmax_a ⟨a, μ̂⟩ + w‖a‖_{A⁻¹}`,
//! so selection scores each action in closed form. Ties go to the lowest
//! index.

use std::borrow::Cow;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::regression::{hoeffding_radius, weighted_oful_radius, ConfidenceSpec, RegressionError, WlsState};
use crate::rng::{stream_rng, ChaCha8Rng};
use crate::trace::{fmt_float, RegretTrace, TraceRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),
    #[error("sigma_t must be finite and nonnegative, got {0}")]
    BadSigma(f64),
    #[error("invalid bandit configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Per-round noise level `σ_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSchedule {
    Constant(f64),
    /// `σ_t = levels[(t−1) mod len]`.
    Cyclic(Vec<f64>),
    /// `σ_t` depends on the chosen action:
    /// `low + (high − low)(1 + a₀/A)/2`.
    StateDependent { low: f64, high: f64 },
}

impl SigmaSchedule {
    fn sigma(&self, t: u64, action: &DVector<f64>, action_bound: f64) -> f64 {
        match self {
            SigmaSchedule::Constant(s) => *s,
            SigmaSchedule::Cyclic(levels) => levels[((t - 1) % levels.len() as u64) as usize],
            SigmaSchedule::StateDependent { low, high } => {
                let frac = (1.0 + (action[0] / action_bound).clamp(-1.0, 1.0)) / 2.0;
                low + (high - low) * frac
            }
        }
    }

    fn max_level(&self) -> f64 {
        match self {
            SigmaSchedule::Constant(s) => *s,
            SigmaSchedule::Cyclic(levels) => levels.iter().copied().fold(0.0, f64::max),
            SigmaSchedule::StateDependent { low, high } => low.max(*high),
        }
    }

    fn min_level(&self) -> f64 {
        match self {
            SigmaSchedule::Constant(s) => *s,
            SigmaSchedule::Cyclic(levels) => levels.iter().copied().fold(f64::INFINITY, f64::min),
            SigmaSchedule::StateDependent { low, high } => low.min(*high),
        }
    }
}

/// Linear bandit with Rademacher noise `ε_t = ±σ_t`.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    dim: usize,
    mu_star: DVector<f64>,
    noise_bound: f64,
    action_bound: f64,
    schedule: SigmaSchedule,
    fixed: Vec<DVector<f64>>,
    // Some(n): n fresh unit vectors per round drawn from stream (seed, t)
    per_round: Option<(usize, u64)>,
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        // Box-Muller normals keep the direction uniform on the sphere
        let v = DVector::from_fn(dim, |_, _| {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

impl BanditEnv {
    /// Unit-sphere actions and a random `μ*` of norm `param_norm ≤ 1`, so
    /// every mean reward lies in `[−1, 1]`.
    pub fn unit_sphere(
        dim: usize,
        n_actions: usize,
        param_norm: f64,
        noise_bound: f64,
        schedule: SigmaSchedule,
        per_round: bool,
        env_seed: u64,
    ) -> Result<Self, BanditError> {
        if dim == 0 || n_actions == 0 {
            return Err(BanditError::Config("dim and action count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&param_norm) {
            return Err(BanditError::Config(format!("param_norm must lie in [0,1], got {param_norm}")));
        }
        let mut rng = stream_rng(env_seed, u64::MAX);
        let mu_star = unit_vector(dim, &mut rng) * param_norm;
        let fixed = if per_round { Vec::new() } else { (0..n_actions).map(|_| unit_vector(dim, &mut rng)).collect() };
        Self::new(mu_star, noise_bound, 1.0, schedule, fixed, per_round.then_some((n_actions, env_seed)))
    }

    /// Fixed decision set with an explicit parameter.
    pub fn with_actions(
        mu_star: DVector<f64>,
        actions: Vec<DVector<f64>>,
        noise_bound: f64,
        schedule: SigmaSchedule,
    ) -> Result<Self, BanditError> {
        let bound = actions.iter().map(|a| a.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        Self::new(mu_star, noise_bound, bound, schedule, actions, None)
    }

    fn new(
        mu_star: DVector<f64>,
        noise_bound: f64,
        action_bound: f64,
        schedule: SigmaSchedule,
        fixed: Vec<DVector<f64>>,
        per_round: Option<(usize, u64)>,
    ) -> Result<Self, BanditError> {
        if !(noise_bound.is_finite() && noise_bound > 0.0) {
            return Err(BanditError::Config(format!("noise_bound must be positive, got {noise_bound}")));
        }
        if let SigmaSchedule::Cyclic(levels) = &schedule {
            if levels.is_empty() {
                return Err(BanditError::Config("cyclic schedule needs at least one level".into()));
            }
        }
        if !(schedule.min_level() >= 0.0) || schedule.max_level() > noise_bound {
            return Err(BanditError::Config(format!("noise levels must lie in [0, R = {noise_bound}]")));
        }
        let dim = mu_star.len();
        if fixed.iter().any(|a| a.len() != dim) {
            return Err(BanditError::Config("action dimension mismatch".into()));
        }
        if per_round.is_none() && fixed.is_empty() {
            return Err(BanditError::Config("decision set is empty".into()));
        }
        Ok(Self { dim, mu_star, noise_bound, action_bound, schedule, fixed, per_round })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu_star(&self) -> &DVector<f64> {
        &self.mu_star
    }

    pub fn noise_bound(&self) -> f64 {
        self.noise_bound
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    /// Decision set `D_t` for round `t ≥ 1`.
    pub fn decision_set(&self, t: u64) -> Cow<'_, [DVector<f64>]> {
        match self.per_round {
            None => Cow::Borrowed(&self.fixed),
            Some((n, seed)) => {
                let mut rng = stream_rng(seed, t);
                Cow::Owned((0..n).map(|_| unit_vector(self.dim, &mut rng)).collect())
            }
        }
    }

    /// Best mean reward in `set`.
    pub fn best_value(&self, set: &[DVector<f64>]) -> f64 {
        set.iter().map(|a| a.dot(&self.mu_star)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Reward and `σ_t` for playing `action` in round `t`; `σ_t` is revealed
    /// only together with the reward.
    pub fn pull<R: Rng + ?Sized>(&self, t: u64, action: &DVector<f64>, rng: &mut R) -> (f64, f64) {
        let sigma = self.schedule.sigma(t, action, self.action_bound);
        let eps = if rng.gen::<bool>() { sigma } else { -sigma };
        (action.dot(&self.mu_star) + eps, sigma)
    }
}

/// Rule turning the revealed `σ_t` into the regression weight `σ̄_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// `σ̄_t = max{R/√d, σ_t}`.
    VarianceFloor,
    /// `σ̄_t = max{floor, σ_t}`.
    Floor(f64),
    /// `σ̄_t = 1` (ordinary ridge regression).
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusPolicy {
    WeightedOful,
    Hoeffding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSpec {
    pub dim: usize,
    pub lambda: f64,
    pub delta: f64,
    pub param_bound: f64,
    pub noise_bound: f64,
    pub action_bound: f64,
    pub weighting: Weighting,
    pub radius: RadiusPolicy,
}

impl AgentSpec {
    pub fn weighted_oful(dim: usize, lambda: f64, delta: f64, param_bound: f64, noise_bound: f64, action_bound: f64) -> Self {
        Self { dim, lambda, delta, param_bound, noise_bound, action_bound, weighting: Weighting::VarianceFloor, radius: RadiusPolicy::WeightedOful }
    }

    pub fn oful(dim: usize, lambda: f64, delta: f64, param_bound: f64, noise_bound: f64, action_bound: f64) -> Self {
        Self { dim, lambda, delta, param_bound, noise_bound, action_bound, weighting: Weighting::Unit, radius: RadiusPolicy::Hoeffding }
    }

    fn confidence(&self, sigma_bar_min: f64) -> ConfidenceSpec {
        ConfidenceSpec {
            dim: self.dim,
            noise_bound: self.noise_bound,
            sigma: self.noise_bound,
            context_bound: self.action_bound,
            lambda: self.lambda,
            delta: self.delta,
            param_bound: self.param_bound,
            sigma_bar_min,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightedOfulAgent {
    spec: AgentSpec,
    state: WlsState,
    mu_hat: DVector<f64>,
    sigma_bar_min: f64,
    rounds: u64,
    beta: f64,
}

impl WeightedOfulAgent {
    pub fn new(spec: AgentSpec) -> Result<Self, BanditError> {
        spec.confidence(1.0).validate().map_err(BanditError::Config)?;
        let state = WlsState::new(spec.dim, spec.lambda)?;
        Ok(Self { spec, mu_hat: DVector::zeros(spec.dim), state, sigma_bar_min: f64::INFINITY, rounds: 0, beta: 0.0 })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn state(&self) -> &WlsState {
        &self.state
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.mu_hat
    }

    /// Smallest `σ̄` absorbed so far (`+∞` before the first round).
    pub fn sigma_bar_min(&self) -> f64 {
        self.sigma_bar_min
    }

    /// Rounds absorbed.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Current `β̂_t` (without the `√λB` term).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Ellipsoid radius `w` of the current confidence set `C_t`.
    pub fn width(&self) -> f64 {
        match self.spec.radius {
            RadiusPolicy::WeightedOful => self.beta + self.spec.lambda.sqrt() * self.spec.param_bound,
            RadiusPolicy::Hoeffding => hoeffding_radius(&self.spec.confidence(1.0), self.rounds),
        }
    }

    pub fn score(&self, action: &DVector<f64>) -> f64 {
        action.dot(&self.mu_hat) + self.width() * self.state.bonus(action)
    }

    /// Optimistic action index and its score.
    pub fn select_action(&self, decision_set: &[DVector<f64>]) -> (usize, f64) {
        assert!(!decision_set.is_empty(), "decision set must be nonempty");
        let width = self.width();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, a) in decision_set.iter().enumerate() {
            let score = a.dot(&self.mu_hat) + width * self.state.bonus(a);
            if score > best.1 {
                best = (i, score);
            }
        }
        best
    }

    pub fn sigma_bar(&self, sigma_t: f64) -> f64 {
        match self.spec.weighting {
            Weighting::VarianceFloor => (self.spec.noise_bound / (self.spec.dim as f64).sqrt()).max(sigma_t),
            Weighting::Floor(f) => f.max(sigma_t),
            Weighting::Unit => 1.0,
        }
    }

    /// Absorbs a round; returns the `σ̄_t` used.
    pub fn observe(&mut self, action: &DVector<f64>, reward: f64, sigma_t: f64) -> Result<f64, BanditError> {
        if !reward.is_finite() {
            return Err(BanditError::NonFiniteReward(reward));
        }
        if !(sigma_t.is_finite() && sigma_t >= 0.0) {
            return Err(BanditError::BadSigma(sigma_t));
        }
        let sigma_bar = self.sigma_bar(sigma_t);
        self.state.update(action, reward, sigma_bar)?;
        self.rounds += 1;
        self.sigma_bar_min = self.sigma_bar_min.min(sigma_bar);
        self.beta = weighted_oful_radius(&self.spec.confidence(self.sigma_bar_min), self.rounds);
        self.mu_hat = self.state.estimate();
        Ok(sigma_bar)
    }

    /// Whether `mu` lies in the current confidence ellipsoid.
    pub fn contains(&self, mu: &DVector<f64>) -> bool {
        self.state.gram_norm(&(&self.mu_hat - mu)) <= self.width()
    }
}

/// Learner driven by [`run_experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    Agent(AgentSpec),
    /// Plays `argmax ⟨a, μ*⟩` using the hidden parameter.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditRecord {
    pub t: u64,
    pub regret: f64,
    pub cumulative_regret: f64,
    /// Ellipsoid radius used to select the action of round `t`.
    pub radius: f64,
    pub sigma_bar: f64,
}

impl TraceRecord for BanditRecord {
    const COLUMNS: &'static [&'static str] = &["t", "cumulative_regret", "radius", "sigma_bar"];

    fn step(&self) -> u64 {
        self.t
    }

    fn cumulative(&self) -> f64 {
        self.cumulative_regret
    }

    fn cells(&self) -> Vec<String> {
        vec![self.t.to_string(), fmt_float(self.cumulative_regret), fmt_float(self.radius), fmt_float(self.sigma_bar)]
    }
}

/// One seeded bandit run.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditRun {
    pub trace: RegretTrace<BanditRecord>,
    /// `μ* ∈ C_t` held after every round.
    pub always_covered: bool,
    /// Elliptical potential of the agent's regression and its bound.
    pub potential: f64,
    pub potential_bound: f64,
}

/// Runs one seed; noise is drawn from stream `(base_seed, seed)`.
pub fn run_seed(env: &BanditEnv, learner: &LearnerSpec, horizon: u64, base_seed: u64, seed: u64) -> Result<BanditRun, BanditError> {
    let mut rng: ChaCha8Rng = stream_rng(base_seed, seed);
    let mut agent = match learner {
        LearnerSpec::Agent(spec) => Some(WeightedOfulAgent::new(*spec)?),
        LearnerSpec::Oracle => None,
    };
    let mut records = Vec::with_capacity(horizon as usize);
    let mut cumulative = 0.0;
    let mut always_covered = true;
    for t in 1..=horizon {
        let set = env.decision_set(t);
        let (idx, radius) = match &agent {
            Some(ag) => (ag.select_action(&set).0, ag.width()),
            None => {
                let vals: Vec<f64> = set.iter().map(|a| a.dot(env.mu_star())).collect();
                (crate::envs::argmax(&vals).0, 0.0)
            }
        };
        let action = &set[idx];
        let (reward, sigma_t) = env.pull(t, action, &mut rng);
        let sigma_bar = match &mut agent {
            Some(ag) => {
                let sb = ag.observe(action, reward, sigma_t)?;
                always_covered &= ag.contains(env.mu_star());
                sb
            }
            None => sigma_t,
        };
        let regret = env.best_value(&set) - action.dot(env.mu_star());
        cumulative += regret;
        records.push(BanditRecord { t, regret, cumulative_regret: cumulative, radius, sigma_bar });
    }
    let (potential, potential_bound) = agent.as_ref().map_or((0.0, 0.0), |a| (a.state().potential(), a.state().potential_bound()));
    Ok(BanditRun { trace: RegretTrace { seed, records }, always_covered, potential, potential_bound })
}

/// Runs every seed in parallel; results come back in seed order.
pub fn run_experiment(
    env: &BanditEnv,
    learner: &LearnerSpec,
    horizon: u64,
    base_seed: u64,
    seeds: &[u64],
) -> Result<Vec<BanditRun>, BanditError> {
    seeds.par_iter().map(|&s| run_seed(env, learner, horizon, base_seed, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, d: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn first_round_picks_longest_action() {
        let spec = AgentSpec::weighted_oful(3, 1.0, 0.1, 2.0, 1.0, 2.0);
        let agent = WeightedOfulAgent::new(spec).unwrap();
        let set = vec![e(0, 3) * 0.5, e(1, 3) * 1.5, e(2, 3)];
        let (idx, score) = agent.select_action(&set);
        assert_eq!(idx, 1);
        assert!((score - 2.0 * 1.5).abs() < 1e-12);
        assert_eq!(agent.select_action(&set[..1]).0, 0);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let agent = WeightedOfulAgent::new(AgentSpec::oful(2, 1.0, 0.1, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(agent.select_action(&[e(1, 2), e(0, 2), e(1, 2)]).0, 0);
    }

    #[test]
    fn bonus_overtakes_mean_after_repeated_pulls() {
        let mut agent = WeightedOfulAgent::new(AgentSpec::weighted_oful(2, 1.0, 0.1, 1.0, 1.0, 1.0)).unwrap();
        let e1 = e(0, 2);
        let e2 = e(1, 2);
        for _ in 0..50 {
            agent.observe(&e1, 1.0, 0.0).unwrap();
        }
        // Hand oracle: A = I + 50·e1e1ᵀ/σ̄² with σ̄ = 1/√2, b = 50·e1/σ̄².
        let a11: f64 = 1.0 + 50.0 * 2.0;
        let mu1 = 100.0 / a11;
        let w = agent.width();
        let score1 = mu1 + w * (1.0 / a11).sqrt();
        let score2 = 0.0 + w * 1.0;
        assert!((agent.score(&e1) - score1).abs() < 1e-10);
        assert!((agent.score(&e2) - score2).abs() < 1e-10);
        assert!(score2 > score1);
        assert_eq!(agent.select_action(&[e1, e2]).0, 1);
    }

    #[test]
    fn sigma_bar_rules() {
        let mut agent = WeightedOfulAgent::new(AgentSpec::weighted_oful(4, 1.0, 0.1, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(agent.sigma_bar(0.0), 0.5);
        assert_eq!(agent.sigma_bar(1.0), 1.0);
        let a = e(0, 4);
        for s in [0.1, 0.7, 0.3] {
            let sb = agent.observe(&a, 0.0, s).unwrap();
            assert!(sb >= s);
        }
        assert_eq!(agent.sigma_bar_min(), 0.5);
        assert!(matches!(agent.observe(&a, f64::NAN, 0.1), Err(BanditError::NonFiniteReward(_))));
        assert!(matches!(agent.observe(&a, 0.0, -0.1), Err(BanditError::BadSigma(_))));
    }

    #[test]
    fn zero_parameter_has_zero_regret() {
        let env = BanditEnv::unit_sphere(4, 10, 0.0, 1.0, SigmaSchedule::Constant(0.5), false, 1).unwrap();
        let spec = AgentSpec::weighted_oful(4, 1.0, 0.1, 1.0, 1.0, 1.0);
        let run = run_seed(&env, &LearnerSpec::Agent(spec), 200, 0, 0).unwrap();
        assert!(run.trace.records.iter().all(|r| r.cumulative_regret == 0.0));
    }

    #[test]
    fn oracle_has_zero_regret() {
        let env = BanditEnv::unit_sphere(5, 12, 0.8, 1.0, SigmaSchedule::Cyclic(vec![0.1, 0.9]), true, 2).unwrap();
        let run = run_seed(&env, &LearnerSpec::Oracle, 300, 0, 4).unwrap();
        assert_eq!(run.trace.final_cumulative(), 0.0);
    }

    #[test]
    fn regret_increments_stay_in_range() {
        let env = BanditEnv::unit_sphere(3, 8, 1.0, 1.0, SigmaSchedule::StateDependent { low: 0.05, high: 0.5 }, false, 3).unwrap();
        for learner in [
            LearnerSpec::Agent(AgentSpec::weighted_oful(3, 1.0, 0.1, 1.0, 1.0, 1.0)),
            LearnerSpec::Agent(AgentSpec::oful(3, 1.0, 0.1, 1.0, 1.0, 1.0)),
        ] {
            let run = run_seed(&env, &learner, 500, 9, 1).unwrap();
            let mut prev = 0.0;
            for r in &run.trace.records {
                assert!((0.0..=2.0).contains(&r.regret));
                assert!(r.cumulative_regret >= prev);
                prev = r.cumulative_regret;
            }
            assert!(run.potential <= run.potential_bound);
        }
    }

    #[test]
    fn rejects_noise_above_bound() {
        assert!(BanditEnv::unit_sphere(3, 4, 1.0, 1.0, SigmaSchedule::Constant(1.5), false, 0).is_err());
        assert!(BanditEnv::unit_sphere(3, 4, 1.5, 1.0, SigmaSchedule::Constant(0.5), false, 0).is_err());
    }

    #[test]
    fn runs_are_reproducible() {
        let env = BanditEnv::unit_sphere(4, 6, 0.9, 1.0, SigmaSchedule::Constant(0.2), false, 5).unwrap();
        let learner = LearnerSpec::Agent(AgentSpec::weighted_oful(4, 1.0, 0.1, 1.0, 1.0, 1.0));
        let a = run_experiment(&env, &learner, 300, 11, &[0, 1, 2]).unwrap();
        let b = run_experiment(&env, &learner, 300, 11, &[0, 1, 2]).unwrap();
        assert_eq!(a, b);
    }
}
