//! UCRL-VTR+ and the UCRL-VTR baseline for episodic linear mixture MDPs.
//!
//! Each stage keeps a first-moment regression of `V_{k,h+1}(s')` on
//! `φ_{V_{k,h+1}}(s,a)`, weighted by the estimated standard deviation `σ̄`.
//! UCRL-VTR+ also keeps an unweighted second-moment regression of
//! `V²_{k,h+1}(s')` on `φ_{V²_{k,h+1}}(s,a)`, which feeds the variance estimate.

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::envs::{argmax, episodic_optimal, episodic_policy_value, MixtureEnv, StageValues};
use crate::regression::{RegressionError, WlsState};
use crate::rng::stream_rng;
use crate::trace::{fmt_float, RegretTrace, TraceRecord};

/// Slack allowed when comparing optimistic and optimal values.
pub const OPTIMISM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodicError {
    #[error("environment is not episodic")]
    NotEpisodic,
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodicVariant {
    UcrlVtrPlus,
    UcrlVtr,
    /// Plans with the true parameters and no bonus.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodicConfig {
    pub variant: EpisodicVariant,
    pub lambda: f64,
    pub delta: f64,
    pub param_bound: f64,
}

impl EpisodicConfig {
    /// `λ = 1/B²` and `B` the largest true parameter norm of `env`.
    pub fn for_env(env: &MixtureEnv, variant: EpisodicVariant, delta: f64) -> Self {
        let b = env.param_norm().max(f64::MIN_POSITIVE);
        Self { variant, lambda: 1.0 / (b * b), delta, param_bound: b }
    }

    fn validate(&self) -> Result<(), EpisodicError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(EpisodicError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(EpisodicError::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.param_bound >= 0.0 && self.param_bound.is_finite()) {
            return Err(EpisodicError::Config(format!("param_bound must be nonnegative, got {}", self.param_bound)));
        }
        Ok(())
    }
}

/// Radii `(β̂_k, β̌_k, β̃_k)` of episode `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub hat: f64,
    pub check: f64,
    pub tilde: f64,
}

pub fn beta_schedules(d: usize, k: u64, horizon: usize, lambda: f64, delta: f64, b: f64) -> BetaSchedule {
    assert!(k >= 1, "episodes are numbered from 1");
    let (d, k, h) = (d as f64, k as f64, horizon as f64);
    let log_union = (4.0 * k * k * h / delta).ln();
    let log_det = (k / lambda).ln_1p();
    let reg = lambda.sqrt() * b;
    let tail = 4.0 * d.sqrt() * log_union + reg;
    let h4 = h.powi(4);
    BetaSchedule {
        hat: 8.0 * (d * log_det * log_union).sqrt() + tail,
        check: 8.0 * d * (log_det * log_union).sqrt() + tail,
        tilde: 8.0 * (d * h4 * (k * h4 / (d * lambda)).ln_1p() * log_union).sqrt() + 4.0 * h * h * log_union + reg,
    }
}

/// UCRL-VTR radius `H(√(d log((1 + kH²/λ)/δ)) + √λB/H)`.
pub fn baseline_beta(d: usize, k: u64, horizon: usize, lambda: f64, delta: f64, b: f64) -> f64 {
    let h = horizon as f64;
    let inner = (1.0 + k as f64 * h * h / lambda) / delta;
    h * ((d as f64 * inner.ln()).sqrt() + lambda.sqrt() * b / h)
}

/// `√max{H²/d, V̄ + E}`.
pub fn sigma_bar_from(horizon: usize, d: usize, variance: f64, offset: f64) -> f64 {
    let h = horizon as f64;
    (h * h / d as f64).max(variance + offset).sqrt()
}

/// Quantities computed for one absorbed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub sigma_bar: f64,
    pub variance_estimate: f64,
    pub offset: f64,
    /// `‖φ_V(s,a)‖_{Σ̂⁻¹}` before the update.
    pub bonus: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodicAgent<'e> {
    env: &'e MixtureEnv,
    config: EpisodicConfig,
    horizon: usize,
    first: Vec<WlsState>,
    second: Vec<WlsState>,
    theta_hat: Vec<DVector<f64>>,
    theta_tilde: Vec<DVector<f64>>,
    k: u64,
    q: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    policy: Vec<Vec<usize>>,
    phi_v: Vec<Vec<DVector<f64>>>,
}

impl<'e> EpisodicAgent<'e> {
    pub fn new(env: &'e MixtureEnv, config: EpisodicConfig) -> Result<Self, EpisodicError> {
        let horizon = env.horizon().ok_or(EpisodicError::NotEpisodic)?;
        config.validate()?;
        let d = env.dim();
        let fresh = || (0..horizon).map(|_| WlsState::new(d, config.lambda)).collect::<Result<Vec<_>, _>>();
        let (ns, na) = (env.n_states(), env.n_actions());
        let mut agent = Self {
            env,
            config,
            horizon,
            first: fresh()?,
            second: fresh()?,
            theta_hat: vec![DVector::zeros(d); horizon],
            theta_tilde: vec![DVector::zeros(d); horizon],
            k: 1,
            q: vec![vec![0.0; ns * na]; horizon],
            v: vec![vec![0.0; ns]; horizon + 1],
            policy: vec![vec![0; ns]; horizon],
            phi_v: vec![Vec::new(); horizon],
        };
        if config.variant == EpisodicVariant::Oracle {
            agent.theta_hat = (0..horizon).map(|h| env.theta(h)).collect();
        }
        Ok(agent)
    }

    /// Current episode index, starting at 1.
    pub fn episode(&self) -> u64 {
        self.k
    }

    pub fn config(&self) -> &EpisodicConfig {
        &self.config
    }

    pub fn betas(&self) -> BetaSchedule {
        let c = &self.config;
        let d = self.env.dim();
        match c.variant {
            EpisodicVariant::UcrlVtrPlus => beta_schedules(d, self.k, self.horizon, c.lambda, c.delta, c.param_bound),
            EpisodicVariant::UcrlVtr => {
                let b = baseline_beta(d, self.k, self.horizon, c.lambda, c.delta, c.param_bound);
                BetaSchedule { hat: b, check: b, tilde: 0.0 }
            }
            EpisodicVariant::Oracle => BetaSchedule { hat: 0.0, check: 0.0, tilde: 0.0 },
        }
    }

    /// `Q_{k,h}` indexed by `s·|A| + a`; `h` is zero-based.
    pub fn q(&self, h: usize) -> &[f64] {
        &self.q[h]
    }

    /// `V_{k,h}`; row `H` is identically zero.
    pub fn v(&self, h: usize) -> &[f64] {
        &self.v[h]
    }

    pub fn policy(&self) -> &[Vec<usize>] {
        &self.policy
    }

    pub fn theta_hat(&self, h: usize) -> &DVector<f64> {
        &self.theta_hat[h]
    }

    pub fn theta_tilde(&self, h: usize) -> &DVector<f64> {
        &self.theta_tilde[h]
    }

    pub fn first_moment(&self, h: usize) -> &WlsState {
        &self.first[h]
    }

    pub fn second_moment(&self, h: usize) -> &WlsState {
        &self.second[h]
    }

    /// Overrides the estimates; used to test the planner against known parameters.
    pub fn set_estimates(&mut self, h: usize, theta_hat: DVector<f64>, theta_tilde: DVector<f64>) {
        self.theta_hat[h] = theta_hat;
        self.theta_tilde[h] = theta_tilde;
    }

    /// Optimistic backward induction for the current episode.
    pub fn backward_pass(&mut self) {
        self.backward_pass_with(self.betas().hat);
    }

    pub fn backward_pass_with(&mut self, beta_hat: f64) {
        let (ns, na) = (self.env.n_states(), self.env.n_actions());
        let cap = self.horizon as f64;
        for h in (0..self.horizon).rev() {
            let next = &self.v[h + 1];
            let mut phis = Vec::with_capacity(ns * na);
            let mut qh = vec![0.0; ns * na];
            for s in 0..ns {
                for a in 0..na {
                    let phi = self.env.feature_expectation(next, s, a);
                    let bonus = if beta_hat > 0.0 { beta_hat * self.first[h].bonus(&phi) } else { 0.0 };
                    let raw = self.env.reward(h, s, a) + self.theta_hat[h].dot(&phi) + bonus;
                    qh[s * na + a] = raw.clamp(0.0, cap);
                    phis.push(phi);
                }
            }
            for s in 0..ns {
                let (a, best) = argmax(&qh[s * na..(s + 1) * na]);
                self.policy[h][s] = a;
                self.v[h][s] = best;
            }
            self.q[h] = qh;
            self.phi_v[h] = phis;
        }
    }

    fn phi_v_at(&self, h: usize, s: usize, a: usize) -> DVector<f64> {
        let na = self.env.n_actions();
        match self.phi_v[h].get(s * na + a) {
            Some(p) => p.clone(),
            None => self.env.feature_expectation(&self.v[h + 1], s, a),
        }
    }

    fn phi_v2_at(&self, h: usize, s: usize, a: usize) -> DVector<f64> {
        let sq: Vec<f64> = self.v[h + 1].iter().map(|x| x * x).collect();
        self.env.feature_expectation(&sq, s, a)
    }

    /// `clip(⟨φ_{V²}, θ̃⟩, [0,H²]) − clip(⟨φ_V, θ̂⟩, [0,H])²`; may be negative.
    pub fn variance_estimate(&self, s: usize, a: usize, h: usize) -> f64 {
        let hf = self.horizon as f64;
        let m2 = self.phi_v2_at(h, s, a).dot(&self.theta_tilde[h]).clamp(0.0, hf * hf);
        let m1 = self.phi_v_at(h, s, a).dot(&self.theta_hat[h]).clamp(0.0, hf);
        m2 - m1 * m1
    }

    /// `min{H², 2Hβ̌‖φ_V‖_{Σ̂⁻¹}} + min{H², β̃‖φ_{V²}‖_{Σ̃⁻¹}}`.
    pub fn offset(&self, s: usize, a: usize, h: usize) -> f64 {
        let betas = self.betas();
        let hf = self.horizon as f64;
        let b1 = self.first[h].bonus(&self.phi_v_at(h, s, a));
        let b2 = self.second[h].bonus(&self.phi_v2_at(h, s, a));
        (2.0 * hf * betas.check * b1).min(hf * hf) + (betas.tilde * b2).min(hf * hf)
    }

    pub fn sigma_bar(&self, s: usize, a: usize, h: usize) -> f64 {
        match self.config.variant {
            EpisodicVariant::UcrlVtrPlus => {
                sigma_bar_from(self.horizon, self.env.dim(), self.variance_estimate(s, a, h), self.offset(s, a, h))
            }
            _ => 1.0,
        }
    }

    /// Absorbs transition `(s, a) → s'` observed at stage `h`.
    pub fn absorb_step(&mut self, s: usize, a: usize, next: usize, h: usize) -> Result<StepInfo, EpisodicError> {
        let phi = self.phi_v_at(h, s, a);
        let bonus = self.first[h].bonus(&phi);
        if self.config.variant == EpisodicVariant::Oracle {
            return Ok(StepInfo { sigma_bar: 1.0, variance_estimate: 0.0, offset: 0.0, bonus });
        }
        let y = self.v[h + 1][next];
        let info = match self.config.variant {
            EpisodicVariant::UcrlVtrPlus => {
                let variance_estimate = self.variance_estimate(s, a, h);
                let offset = self.offset(s, a, h);
                let sigma_bar = sigma_bar_from(self.horizon, self.env.dim(), variance_estimate, offset);
                let phi2 = self.phi_v2_at(h, s, a);
                self.second[h].update(&phi2, y * y, 1.0)?;
                self.theta_tilde[h] = self.second[h].estimate();
                StepInfo { sigma_bar, variance_estimate, offset, bonus }
            }
            _ => StepInfo { sigma_bar: 1.0, variance_estimate: 0.0, offset: 0.0, bonus },
        };
        self.first[h].update(&phi, y, info.sigma_bar)?;
        self.theta_hat[h] = self.first[h].estimate();
        Ok(info)
    }

    pub fn finish_episode(&mut self) {
        self.k += 1;
    }

    /// Every stage regression satisfies its elliptical potential bound.
    pub fn potentials_within_bound(&self) -> bool {
        self.first.iter().chain(&self.second).all(|w| w.potential() <= w.potential_bound())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub k: u64,
    pub episode_regret: f64,
    pub cumulative_regret: f64,
    pub min_sigma_bar: f64,
    pub max_bonus: f64,
    /// `V_{k,1}(s₁) ≥ V*₁(s₁)`.
    pub optimistic: bool,
}

impl TraceRecord for EpisodeRecord {
    const COLUMNS: &'static [&'static str] =
        &["k", "episode_regret", "cumulative_regret", "min_sigma_bar", "max_bonus", "optimistic_flag"];

    fn step(&self) -> u64 {
        self.k
    }

    fn cumulative(&self) -> f64 {
        self.cumulative_regret
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            fmt_float(self.episode_regret),
            fmt_float(self.cumulative_regret),
            fmt_float(self.min_sigma_bar),
            fmt_float(self.max_bonus),
            u8::from(self.optimistic).to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicRun {
    pub trace: RegretTrace<EpisodeRecord>,
    /// `Q_{k,1} ≥ Q*₁` at every state-action pair in every episode.
    pub q_dominates: bool,
    /// Steps with `σ̄²_{k,h} ≥ [V_h V_{k,h+1}](s_h, a_h)`, and all steps.
    pub variance_dominated: u64,
    pub steps: u64,
    /// `Σ_{k,h} [V_h V^{π_k}_{h+1}](s_h, a_h)`.
    pub total_variance: f64,
    /// `3(HT + H³ log(1/δ))` with `T = KH`.
    pub total_variance_bound: f64,
    pub potentials_ok: bool,
}

impl EpisodicRun {
    pub fn variance_domination_rate(&self) -> f64 {
        if self.steps == 0 {
            1.0
        } else {
            self.variance_dominated as f64 / self.steps as f64
        }
    }
}

/// Runs `episodes` episodes from stream `(base_seed, seed)`.
pub fn run_seed(
    env: &MixtureEnv,
    config: &EpisodicConfig,
    episodes: u64,
    base_seed: u64,
    seed: u64,
) -> Result<EpisodicRun, EpisodicError> {
    let optimal = episodic_optimal(env);
    run_seed_with(env, &optimal, config, episodes, base_seed, seed)
}

fn run_seed_with(
    env: &MixtureEnv,
    optimal: &StageValues,
    config: &EpisodicConfig,
    episodes: u64,
    base_seed: u64,
    seed: u64,
) -> Result<EpisodicRun, EpisodicError> {
    let mut agent = EpisodicAgent::new(env, *config)?;
    let horizon = agent.horizon;
    let mut rng = stream_rng(base_seed, seed);
    let s1 = env.initial_state();
    let v_star = optimal.v[0][s1];
    let mut records = Vec::with_capacity(episodes as usize);
    let mut cumulative = 0.0;
    let mut q_dominates = true;
    let (mut dominated, mut steps, mut total_variance) = (0u64, 0u64, 0.0);
    for k in 1..=episodes {
        agent.backward_pass();
        q_dominates &= agent.q[0].iter().zip(&optimal.q[0]).all(|(q, qs)| *q >= qs - OPTIMISM_TOL);
        let optimistic = agent.v[0][s1] >= v_star - OPTIMISM_TOL;
        let policy_value = episodic_policy_value(env, &agent.policy);
        let regret = v_star - policy_value[0][s1];
        let mut s = s1;
        let mut min_sigma_bar = f64::INFINITY;
        let mut max_bonus = 0.0f64;
        for h in 0..horizon {
            let a = agent.policy[h][s];
            let next = env.sample_transition(h, s, a, &mut rng);
            let true_var = env.value_variance(h, s, a, &agent.v[h + 1]);
            total_variance += env.value_variance(h, s, a, &policy_value[h + 1]);
            let info = agent.absorb_step(s, a, next, h)?;
            if info.sigma_bar * info.sigma_bar >= true_var {
                dominated += 1;
            }
            steps += 1;
            min_sigma_bar = min_sigma_bar.min(info.sigma_bar);
            max_bonus = max_bonus.max(info.bonus);
            s = next;
        }
        agent.finish_episode();
        cumulative += regret;
        records.push(EpisodeRecord { k, episode_regret: regret, cumulative_regret: cumulative, min_sigma_bar, max_bonus, optimistic });
    }
    let h = horizon as f64;
    let t = episodes as f64 * h;
    Ok(EpisodicRun {
        trace: RegretTrace { seed, records },
        q_dominates,
        variance_dominated: dominated,
        steps,
        total_variance,
        total_variance_bound: 3.0 * (h * t + h.powi(3) * (1.0 / config.delta).ln()),
        potentials_ok: agent.potentials_within_bound(),
    })
}

/// Runs every seed in parallel; results come back in seed order.
pub fn run_experiment(
    env: &MixtureEnv,
    config: &EpisodicConfig,
    episodes: u64,
    base_seed: u64,
    seeds: &[u64],
) -> Result<Vec<EpisodicRun>, EpisodicError> {
    if env.horizon().is_none() {
        return Err(EpisodicError::NotEpisodic);
    }
    let optimal = episodic_optimal(env);
    seeds.par_iter().map(|&s| run_seed_with(env, &optimal, config, episodes, base_seed, s)).collect()
}
