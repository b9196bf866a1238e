//! UCLK+ for discounted linear mixture MDPs.
//!
//! The policy is recomputed by extended value iteration only when the
//! determinant of the first-moment Gram matrix has doubled since the start of
//! the current epoch. Regret is scored by a stationary proxy: the exact value
//! of the current greedy policy if it were followed forever.

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::envs::{argmax, discounted_optimal, discounted_policy_value, DiscountedValues, MixtureEnv};
use crate::episodic::{BetaSchedule, OPTIMISM_TOL};
use crate::regression::{RegressionError, WlsState};
use crate::rng::stream_rng;
use crate::trace::{fmt_float, RegretTrace, TraceRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscountedError {
    #[error("environment is not discounted")]
    NotDiscounted,
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// `(β̂_t, β̌_t, β̃_t)` with effective horizon `H̄ = 1/(1−γ)`.
pub fn discounted_beta_schedules(d: usize, t: u64, hbar: f64, lambda: f64, delta: f64, b: f64) -> BetaSchedule {
    let t = t.max(1) as f64;
    let d = d as f64;
    let log_union = (4.0 * t * t / delta).ln();
    let log_det = (t / lambda).ln_1p();
    let reg = lambda.sqrt() * b;
    let tail = 4.0 * d.sqrt() * log_union + reg;
    let h4 = hbar.powi(4);
    BetaSchedule {
        hat: 8.0 * (d * log_det * log_union).sqrt() + tail,
        check: 8.0 * d * (log_det * log_union).sqrt() + tail,
        tilde: 8.0 * (d * h4 * (t * h4 / (d * lambda)).ln_1p() * log_union).sqrt() + 4.0 * hbar * hbar * log_union + reg,
    }
}

/// `⌈(1−γ)⁻¹ log(T/(1−γ))⌉`, at least 1.
pub fn default_evi_rounds(gamma: f64, horizon: u64) -> usize {
    let g = 1.0 - gamma;
    let u = ((horizon.max(1) as f64 / g).ln() / g).ceil();
    if u.is_finite() && u >= 1.0 {
        u as usize
    } else {
        1
    }
}

/// Completed-epoch bound `2d log(1 + Td/λ)`.
pub fn epoch_bound(d: usize, horizon: u64, lambda: f64) -> f64 {
    let d = d as f64;
    2.0 * d * (horizon as f64 * d / lambda).ln_1p()
}

/// Output of [`evi`].
#[derive(Debug, Clone, PartialEq)]
pub struct EviResult {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub policy: Vec<usize>,
    /// `‖V⁽ᵘ⁾ − V⁽ᵘ⁻¹⁾‖∞` for `u = 1..=U`, with `V⁽⁰⁾ ≡ H̄`.
    pub deltas: Vec<f64>,
}

/// Extended value iteration over the ellipsoid `‖θ − θ̂‖_{Σ̂} ≤ β̂`, clipped
/// to `[0, H̄]`.
pub fn evi(env: &MixtureEnv, theta_hat: &DVector<f64>, shape: &WlsState, beta: f64, rounds: usize) -> EviResult {
    let gamma = env.gamma().expect("discounted environment");
    let hbar = 1.0 / (1.0 - gamma);
    let (ns, na) = (env.n_states(), env.n_actions());
    let mut q = vec![hbar; ns * na];
    let mut v = vec![hbar; ns];
    let mut policy = vec![0; ns];
    let mut deltas = Vec::with_capacity(rounds);
    for _ in 0..rounds.max(1) {
        for s in 0..ns {
            for a in 0..na {
                let phi = env.feature_expectation(&v, s, a);
                let bonus = if beta > 0.0 { beta * shape.bonus(&phi) } else { 0.0 };
                q[s * na + a] = (env.reward(0, s, a) + gamma * (theta_hat.dot(&phi) + bonus)).clamp(0.0, hbar);
            }
        }
        let mut delta = 0.0f64;
        for s in 0..ns {
            let (a, best) = argmax(&q[s * na..(s + 1) * na]);
            policy[s] = a;
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        deltas.push(delta);
    }
    EviResult { q, v, policy, deltas }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscountedVariant {
    UclkPlus,
    /// Plans once with the true parameter and no bonus.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedConfig {
    pub variant: DiscountedVariant,
    pub lambda: f64,
    pub delta: f64,
    pub param_bound: f64,
    pub evi_rounds: usize,
}

impl DiscountedConfig {
    /// `λ = 1/B²` and the default number of EVI rounds for horizon `T`.
    pub fn for_env(env: &MixtureEnv, variant: DiscountedVariant, delta: f64, horizon: u64) -> Self {
        let b = env.param_norm().max(f64::MIN_POSITIVE);
        let rounds = env.gamma().map_or(1, |g| default_evi_rounds(g, horizon));
        Self { variant, lambda: 1.0 / (b * b), delta, param_bound: b, evi_rounds: rounds }
    }

    fn validate(&self) -> Result<(), DiscountedError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(DiscountedError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DiscountedError::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.param_bound >= 0.0 && self.param_bound.is_finite()) {
            return Err(DiscountedError::Config(format!("param_bound must be nonnegative, got {}", self.param_bound)));
        }
        if self.evi_rounds == 0 {
            return Err(DiscountedError::Config("evi_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Quantities produced by one [`UclkAgent::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub action: usize,
    pub next: usize,
    pub replanned: bool,
    pub sigma_bar: f64,
    pub variance_estimate: f64,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct UclkAgent<'e> {
    env: &'e MixtureEnv,
    config: DiscountedConfig,
    gamma: f64,
    hbar: f64,
    first: WlsState,
    second: WlsState,
    theta_hat: DVector<f64>,
    theta_tilde: DVector<f64>,
    t: u64,
    epoch: u64,
    epoch_logdet: f64,
    plan: EviResult,
    // φ_V and φ_{V²} per (s, a); fixed within an epoch
    phi_v: Vec<DVector<f64>>,
    phi_v2: Vec<DVector<f64>>,
}

impl<'e> UclkAgent<'e> {
    pub fn new(env: &'e MixtureEnv, config: DiscountedConfig) -> Result<Self, DiscountedError> {
        let gamma = env.gamma().ok_or(DiscountedError::NotDiscounted)?;
        config.validate()?;
        let d = env.dim();
        let first = WlsState::new(d, config.lambda)?;
        let theta_hat = match config.variant {
            DiscountedVariant::Oracle => env.theta(0),
            DiscountedVariant::UclkPlus => DVector::zeros(d),
        };
        let mut agent = Self {
            env,
            config,
            gamma,
            hbar: 1.0 / (1.0 - gamma),
            second: first.clone(),
            epoch_logdet: first.logdet(),
            first,
            theta_hat,
            theta_tilde: DVector::zeros(d),
            t: 0,
            epoch: 0,
            plan: EviResult { q: Vec::new(), v: Vec::new(), policy: Vec::new(), deltas: Vec::new() },
            phi_v: Vec::new(),
            phi_v2: Vec::new(),
        };
        agent.replan();
        Ok(agent)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Steps absorbed so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Completed epochs (replans after the initial plan).
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn plan(&self) -> &EviResult {
        &self.plan
    }

    pub fn policy(&self) -> &[usize] {
        &self.plan.policy
    }

    pub fn first_moment(&self) -> &WlsState {
        &self.first
    }

    pub fn second_moment(&self) -> &WlsState {
        &self.second
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// Overrides the estimates and replans; used to test against known parameters.
    pub fn set_estimates(&mut self, theta_hat: DVector<f64>, theta_tilde: DVector<f64>) {
        self.theta_hat = theta_hat;
        self.theta_tilde = theta_tilde;
        self.replan();
    }

    /// Radii for the step about to be taken.
    pub fn betas(&self) -> BetaSchedule {
        match self.config.variant {
            DiscountedVariant::Oracle => BetaSchedule { hat: 0.0, check: 0.0, tilde: 0.0 },
            DiscountedVariant::UclkPlus => {
                let c = &self.config;
                discounted_beta_schedules(self.env.dim(), self.t + 1, self.hbar, c.lambda, c.delta, c.param_bound)
            }
        }
    }

    fn replan(&mut self) {
        let beta = self.betas().hat;
        self.plan = evi(self.env, &self.theta_hat, &self.first, beta, self.config.evi_rounds);
        let (ns, na) = (self.env.n_states(), self.env.n_actions());
        let sq: Vec<f64> = self.plan.v.iter().map(|x| x * x).collect();
        self.phi_v.clear();
        self.phi_v2.clear();
        for s in 0..ns {
            for a in 0..na {
                self.phi_v.push(self.env.feature_expectation(&self.plan.v, s, a));
                self.phi_v2.push(self.env.feature_expectation(&sq, s, a));
            }
        }
        self.epoch_logdet = self.first.logdet();
    }

    /// Starts a new epoch if `det Σ̂_t > 2 det Σ̂_{t_k}`; returns whether it did.
    pub fn maybe_replan(&mut self) -> bool {
        if self.first.logdet() - self.epoch_logdet > std::f64::consts::LN_2 {
            self.epoch += 1;
            self.replan();
            true
        } else {
            false
        }
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.env.n_actions() + a
    }

    /// `clip(⟨φ_{V²}, θ̃⟩, [0,H̄²]) − clip(⟨φ_V, θ̂⟩, [0,H̄])²`.
    pub fn variance_estimate(&self, s: usize, a: usize) -> f64 {
        let i = self.idx(s, a);
        let m2 = self.phi_v2[i].dot(&self.theta_tilde).clamp(0.0, self.hbar * self.hbar);
        let m1 = self.phi_v[i].dot(&self.theta_hat).clamp(0.0, self.hbar);
        m2 - m1 * m1
    }

    /// `min{H̄², 2H̄β̌‖φ_V‖_{Σ̂⁻¹}} + min{H̄², β̃‖φ_{V²}‖_{Σ̃⁻¹}}`.
    pub fn offset(&self, s: usize, a: usize) -> f64 {
        let i = self.idx(s, a);
        let betas = self.betas();
        let cap = self.hbar * self.hbar;
        (2.0 * self.hbar * betas.check * self.first.bonus(&self.phi_v[i])).min(cap)
            + (betas.tilde * self.second.bonus(&self.phi_v2[i])).min(cap)
    }

    pub fn sigma_bar(&self, s: usize, a: usize) -> f64 {
        let floor = self.hbar * self.hbar / self.env.dim() as f64;
        floor.max(self.variance_estimate(s, a) + self.offset(s, a)).sqrt()
    }

    /// Acts from `s`, samples the successor and absorbs the transition.
    pub fn step<R: rand::Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> Result<StepOutcome, DiscountedError> {
        let replanned = self.maybe_replan();
        let a = self.plan.policy[s];
        let next = self.env.sample_transition(0, s, a, rng);
        if self.config.variant == DiscountedVariant::Oracle {
            self.t += 1;
            return Ok(StepOutcome { action: a, next, replanned, sigma_bar: 1.0, variance_estimate: 0.0, offset: 0.0 });
        }
        let variance_estimate = self.variance_estimate(s, a);
        let offset = self.offset(s, a);
        let floor = self.hbar * self.hbar / self.env.dim() as f64;
        let sigma_bar = floor.max(variance_estimate + offset).sqrt();
        let i = self.idx(s, a);
        let y = self.plan.v[next];
        self.first.update(&self.phi_v[i], y, sigma_bar)?;
        self.second.update(&self.phi_v2[i], y * y, 1.0)?;
        self.theta_hat = self.first.estimate();
        self.theta_tilde = self.second.estimate();
        self.t += 1;
        Ok(StepOutcome { action: a, next, replanned, sigma_bar, variance_estimate, offset })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedRecord {
    pub t: u64,
    pub epoch: u64,
    pub proxy_regret: f64,
    pub cumulative: f64,
    pub replanned: bool,
    /// `log det Σ̂` after the step.
    pub logdet: f64,
}

impl TraceRecord for DiscountedRecord {
    const COLUMNS: &'static [&'static str] =
        &["t", "epoch", "proxy_regret_increment", "cumulative", "replanned_flag", "logdet"];

    fn step(&self) -> u64 {
        self.t
    }

    fn cumulative(&self) -> f64 {
        self.cumulative
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            self.epoch.to_string(),
            fmt_float(self.proxy_regret),
            fmt_float(self.cumulative),
            u8::from(self.replanned).to_string(),
            fmt_float(self.logdet),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedRun {
    pub trace: RegretTrace<DiscountedRecord>,
    pub epochs: u64,
    pub epoch_bound: f64,
    /// Plans (initial one included) with `Q ≥ Q*` pointwise, and all plans.
    pub optimistic_plans: u64,
    pub plans: u64,
    /// Plans whose final EVI residual is within `H̄γ^{U−1}(1−γ)`.
    pub residual_within_bound: u64,
    pub potentials_ok: bool,
}

/// Runs `horizon` steps from stream `(base_seed, seed)`.
pub fn run_seed(
    env: &MixtureEnv,
    config: &DiscountedConfig,
    horizon: u64,
    base_seed: u64,
    seed: u64,
) -> Result<DiscountedRun, DiscountedError> {
    if env.gamma().is_none() {
        return Err(DiscountedError::NotDiscounted);
    }
    run_seed_with(env, &discounted_optimal(env), config, horizon, base_seed, seed)
}

fn run_seed_with(
    env: &MixtureEnv,
    optimal: &DiscountedValues,
    config: &DiscountedConfig,
    horizon: u64,
    base_seed: u64,
    seed: u64,
) -> Result<DiscountedRun, DiscountedError> {
    let mut agent = UclkAgent::new(env, *config)?;
    let mut rng = stream_rng(base_seed, seed);
    let gamma = agent.gamma;
    let residual_cap = agent.hbar * gamma.powi(config.evi_rounds as i32 - 1) * (1.0 - gamma);
    let dominates = |plan: &EviResult| plan.q.iter().zip(&optimal.q).all(|(q, qs)| *q >= qs - OPTIMISM_TOL);
    let within = |plan: &EviResult| plan.deltas.last().is_none_or(|&d| d <= residual_cap);
    let mut optimistic_plans = u64::from(dominates(agent.plan()));
    let mut residual_within_bound = u64::from(within(agent.plan()));
    let mut plans = 1;
    let mut value = discounted_policy_value(env, agent.policy());
    let mut records = Vec::with_capacity(horizon as usize);
    let mut cumulative = 0.0;
    let mut s = env.initial_state();
    for t in 1..=horizon {
        let out = agent.step(s, &mut rng)?;
        if out.replanned {
            plans += 1;
            optimistic_plans += u64::from(dominates(agent.plan()));
            residual_within_bound += u64::from(within(agent.plan()));
            value = discounted_policy_value(env, agent.policy());
        }
        let proxy_regret = optimal.v[s] - value[s];
        cumulative += proxy_regret;
        records.push(DiscountedRecord {
            t,
            epoch: agent.epoch(),
            proxy_regret,
            cumulative,
            replanned: out.replanned,
            logdet: agent.first.logdet(),
        });
        s = out.next;
    }
    Ok(DiscountedRun {
        trace: RegretTrace { seed, records },
        epochs: agent.epoch(),
        epoch_bound: epoch_bound(env.dim(), horizon, config.lambda),
        optimistic_plans,
        plans,
        residual_within_bound,
        potentials_ok: agent.first.potential() <= agent.first.potential_bound()
            && agent.second.potential() <= agent.second.potential_bound(),
    })
}

/// Runs every seed in parallel; results come back in seed order.
pub fn run_experiment(
    env: &MixtureEnv,
    config: &DiscountedConfig,
    horizon: u64,
    base_seed: u64,
    seeds: &[u64],
) -> Result<Vec<DiscountedRun>, DiscountedError> {
    if env.gamma().is_none() {
        return Err(DiscountedError::NotDiscounted);
    }
    let optimal = discounted_optimal(env);
    seeds.par_iter().map(|&s| run_seed_with(env, &optimal, config, horizon, base_seed, s)).collect()
}
