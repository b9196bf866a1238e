//! Finite linear mixture MDPs.
//!
//! A [`MixtureEnv`] stores an explicit feature table `φ(s'|s,a) ∈ ℝᵈ`, one
//! parameter vector per stage (a single one in the discounted setting) and
//! the reward tables. The transition kernel `P_h(s'|s,a) = ⟨φ(s'|s,a), θ_h⟩`
//! is materialized and validated at construction.
//!
//! Stages are 0-based in code: an episodic environment with horizon `H` has
//! stages `0..H`.

mod builders;
mod planning;

pub use builders::{
    deterministic_chain, hard_mdp_discounted, hard_mdp_episodic, hard_action_vector, random_tabular,
    tabular_as_mixture, HardInstance, HardInstanceParams, TabularTables,
};
pub use planning::{
    argmax, discounted_optimal, discounted_policy_value, episodic_optimal, episodic_policy_value, optimal_values,
    DiscountedValues, OptimalValues, StageValues,
};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for kernel validity checks.
pub const KERNEL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("reward r[{stage}][{state}][{action}] = {value} outside [0,1]")]
    Reward { stage: usize, state: usize, action: usize, value: f64 },
    #[error("invalid kernel at stage {stage}, state {state}, action {action}: {reason}")]
    Kernel { stage: usize, state: usize, action: usize, reason: String },
    #[error("parameter constraint violated: {0}")]
    Constraint(String),
    #[error("malformed environment record: {0}")]
    Record(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Setting {
    Episodic { horizon: usize },
    Discounted { gamma: f64 },
}

/// Flat serializable form of a [`MixtureEnv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRecord {
    pub name: String,
    pub dim: usize,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub setting: Setting,
    pub initial_state: usize,
    /// Per stage, row-major `[s][a]`.
    pub rewards: Vec<Vec<f64>>,
    /// Row-major `[s][a][s'][i]`.
    pub features: Vec<f64>,
    /// Per stage parameter vector.
    pub thetas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MixtureEnv {
    record: EnvRecord,
    // per stage, row-major [s][a][s']
    kernel: Vec<Vec<f64>>,
}

impl MixtureEnv {
    pub fn new(record: EnvRecord) -> Result<Self, EnvError> {
        let ns = record.states.len();
        let na = record.actions.len();
        let d = record.dim;
        let stages = match record.setting {
            Setting::Episodic { horizon } => {
                if horizon == 0 {
                    return Err(EnvError::Constraint("horizon ≥ 1".into()));
                }
                horizon
            }
            Setting::Discounted { gamma } => {
                if !(0.0..1.0).contains(&gamma) {
                    return Err(EnvError::Constraint(format!("0 ≤ gamma < 1 (got {gamma})")));
                }
                1
            }
        };
        if ns == 0 || na == 0 || d == 0 {
            return Err(EnvError::Constraint("states, actions and dim must be nonempty".into()));
        }
        if record.initial_state >= ns {
            return Err(EnvError::Constraint(format!("initial_state < {ns}")));
        }
        shape("features", ns * na * ns * d, record.features.len())?;
        shape("stage count (thetas)", stages, record.thetas.len())?;
        shape("stage count (rewards)", stages, record.rewards.len())?;
        for (h, r) in record.rewards.iter().enumerate() {
            shape("reward table", ns * na, r.len())?;
            for (i, &value) in r.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(EnvError::Reward { stage: h, state: i / na, action: i % na, value });
                }
            }
        }
        for th in &record.thetas {
            shape("theta", d, th.len())?;
        }
        if record.features.iter().chain(record.thetas.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(EnvError::Record("non-finite feature or parameter".into()));
        }

        let mut kernel = Vec::with_capacity(stages);
        for (h, theta) in record.thetas.iter().enumerate() {
            let mut table = vec![0.0; ns * na * ns];
            for s in 0..ns {
                for a in 0..na {
                    let mut total = 0.0;
                    for sp in 0..ns {
                        let off = ((s * na + a) * ns + sp) * d;
                        let p: f64 = record.features[off..off + d].iter().zip(theta).map(|(f, t)| f * t).sum();
                        if !(-KERNEL_TOL..=1.0 + KERNEL_TOL).contains(&p) {
                            return Err(EnvError::Kernel {
                                stage: h,
                                state: s,
                                action: a,
                                reason: format!("P(s'={sp}) = {p} outside [0,1]"),
                            });
                        }
                        table[(s * na + a) * ns + sp] = p;
                        total += p;
                    }
                    if (total - 1.0).abs() > KERNEL_TOL {
                        return Err(EnvError::Kernel {
                            stage: h,
                            state: s,
                            action: a,
                            reason: format!("row sums to {total}"),
                        });
                    }
                }
            }
            kernel.push(table);
        }
        Ok(Self { record, kernel })
    }

    pub fn record(&self) -> &EnvRecord {
        &self.record
    }

    pub fn name(&self) -> &str {
        &self.record.name
    }

    pub fn dim(&self) -> usize {
        self.record.dim
    }

    pub fn n_states(&self) -> usize {
        self.record.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.record.actions.len()
    }

    pub fn setting(&self) -> Setting {
        self.record.setting
    }

    pub fn horizon(&self) -> Option<usize> {
        match self.record.setting {
            Setting::Episodic { horizon } => Some(horizon),
            Setting::Discounted { .. } => None,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.record.setting {
            Setting::Discounted { gamma } => Some(gamma),
            Setting::Episodic { .. } => None,
        }
    }

    pub fn initial_state(&self) -> usize {
        self.record.initial_state
    }

    pub fn n_stages(&self) -> usize {
        self.record.thetas.len()
    }

    pub fn reward(&self, stage: usize, s: usize, a: usize) -> f64 {
        self.record.rewards[stage][s * self.n_actions() + a]
    }

    pub fn theta(&self, stage: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.record.thetas[stage])
    }

    /// Largest `‖θ_h‖₂` over stages.
    pub fn param_norm(&self) -> f64 {
        self.record
            .thetas
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn feature(&self, s: usize, a: usize, next: usize) -> &[f64] {
        let (ns, na, d) = (self.n_states(), self.n_actions(), self.dim());
        let off = ((s * na + a) * ns + next) * d;
        &self.record.features[off..off + d]
    }

    /// Transition row `P_h(·|s,a)`.
    pub fn transition(&self, stage: usize, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states();
        let off = (s * self.n_actions() + a) * ns;
        &self.kernel[stage][off..off + ns]
    }

    /// Integration oracle `φ_V(s,a) = Σ_{s'} φ(s'|s,a) V(s')`.
    pub fn feature_expectation(&self, v: &[f64], s: usize, a: usize) -> DVector<f64> {
        let (ns, na, d) = (self.n_states(), self.n_actions(), self.dim());
        debug_assert_eq!(v.len(), ns);
        let mut out = DVector::zeros(d);
        let base = (s * na + a) * ns * d;
        for (sp, &vs) in v.iter().enumerate() {
            if vs == 0.0 {
                continue;
            }
            let row = &self.record.features[base + sp * d..base + (sp + 1) * d];
            for (o, f) in out.iter_mut().zip(row) {
                *o += f * vs;
            }
        }
        out
    }

    /// `[P_h V](s,a)` computed from the materialized kernel.
    pub fn expected_value(&self, stage: usize, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition(stage, s, a).iter().zip(v).map(|(p, x)| p * x).sum()
    }

    /// `[V_h V](s,a) = [P_h V²](s,a) − ([P_h V](s,a))²`, clamped at zero.
    pub fn value_variance(&self, stage: usize, s: usize, a: usize, v: &[f64]) -> f64 {
        let row = self.transition(stage, s, a);
        let m1: f64 = row.iter().zip(v).map(|(p, x)| p * x).sum();
        let m2: f64 = row.iter().zip(v).map(|(p, x)| p * x * x).sum();
        (m2 - m1 * m1).max(0.0)
    }

    /// Draws `s' ~ P_h(·|s,a)` by inverse CDF over the declared state order.
    pub fn sample_transition<R: Rng + ?Sized>(&self, stage: usize, s: usize, a: usize, rng: &mut R) -> usize {
        let row = self.transition(stage, s, a);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (sp, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = sp;
            if u < acc {
                return sp;
            }
        }
        last
    }

    /// Largest `‖φ_V(s,a)‖₂` over `V ∈ [0,1]^S`.
    ///
    /// The norm is convex in `V`, so its maximum over the cube sits at a
    /// vertex. With at most `exact_up_to` states every vertex is enumerated;
    /// otherwise indicators, their complements, `V ≡ 1` and `samples` random
    /// vertices are checked.
    pub fn max_feature_norm<R: Rng + ?Sized>(&self, exact_up_to: usize, samples: usize, rng: &mut R) -> f64 {
        let ns = self.n_states();
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if ns <= exact_up_to {
            for mask in 1u64..(1u64 << ns) {
                candidates.push((0..ns).map(|i| ((mask >> i) & 1) as f64).collect());
            }
        } else {
            candidates.push(vec![1.0; ns]);
            for i in 0..ns {
                let mut e = vec![0.0; ns];
                e[i] = 1.0;
                candidates.push(e);
                let mut c = vec![1.0; ns];
                c[i] = 0.0;
                candidates.push(c);
            }
            for _ in 0..samples {
                candidates.push((0..ns).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect());
            }
        }
        let mut best = 0.0f64;
        for v in &candidates {
            for s in 0..ns {
                for a in 0..self.n_actions() {
                    best = best.max(self.feature_expectation(v, s, a).norm());
                }
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.record).expect("environment record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let record: EnvRecord = serde_json::from_str(text).map_err(|e| EnvError::Record(e.to_string()))?;
        Self::new(record)
    }
}

fn shape(what: &'static str, expected: usize, got: usize) -> Result<(), EnvError> {
    if expected != got {
        return Err(EnvError::Shape { what, expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn feature_expectation_basics() {
        let mut rng = stream_rng(1, 0);
        let env = random_tabular(4, 2, Setting::Episodic { horizon: 3 }, &mut rng);
        let zero = vec![0.0; 4];
        assert_eq!(env.feature_expectation(&zero, 1, 1), DVector::zeros(env.dim()));
        let ones = vec![1.0; 4];
        for h in 0..3 {
            for s in 0..4 {
                for a in 0..2 {
                    let phi = env.feature_expectation(&ones, s, a);
                    assert!((phi.dot(&env.theta(h)) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn feature_expectation_is_linear() {
        let mut rng = stream_rng(2, 0);
        let env = random_tabular(5, 3, Setting::Discounted { gamma: 0.9 }, &mut rng);
        let u: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (ca, cb) = (0.3, -1.7);
        let mix: Vec<f64> = u.iter().zip(&w).map(|(x, y)| ca * x + cb * y).collect();
        for s in 0..5 {
            for a in 0..3 {
                let lhs = env.feature_expectation(&mix, s, a);
                let rhs = env.feature_expectation(&u, s, a) * ca + env.feature_expectation(&w, s, a) * cb;
                assert!((lhs - rhs).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_invalid_kernel() {
        let mut rng = stream_rng(3, 0);
        let env = random_tabular(3, 2, Setting::Episodic { horizon: 2 }, &mut rng);
        let mut rec = env.record().clone();
        rec.thetas[1][0] += 0.5;
        assert!(matches!(MixtureEnv::new(rec), Err(EnvError::Kernel { stage: 1, .. })));
        let mut rec = env.record().clone();
        rec.rewards[0][2] = 1.5;
        assert!(matches!(MixtureEnv::new(rec), Err(EnvError::Reward { .. })));
        let mut rec = env.record().clone();
        rec.features.pop();
        assert!(matches!(MixtureEnv::new(rec), Err(EnvError::Shape { .. })));
    }

    #[test]
    fn sampling_deterministic_row() {
        let env = deterministic_chain(4, Setting::Episodic { horizon: 3 });
        let mut rng = stream_rng(4, 0);
        for _ in 0..100 {
            assert_eq!(env.sample_transition(0, 1, 0, &mut rng), 2);
            assert_eq!(env.sample_transition(0, 3, 0, &mut rng), 3);
        }
    }

    #[test]
    fn sampling_frequencies_match_kernel() {
        let mut rng = stream_rng(5, 0);
        let env = random_tabular(5, 2, Setting::Discounted { gamma: 0.5 }, &mut rng);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[env.sample_transition(0, 2, 1, &mut rng)] += 1;
        }
        for (sp, &p) in env.transition(0, 2, 1).iter().enumerate() {
            let freq = counts[sp] as f64 / n as f64;
            let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= tol.max(1e-12), "s'={sp}: {freq} vs {p}");
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = stream_rng(6, 0);
        let env = random_tabular(3, 2, Setting::Episodic { horizon: 2 }, &mut rng);
        let back = MixtureEnv::from_json(&env.to_json()).unwrap();
        assert_eq!(back.record(), env.record());
        let bits = |r: &EnvRecord| r.features.iter().chain(r.thetas.iter().flatten()).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.record()), bits(env.record()));
        assert!(MixtureEnv::from_json("{\"dim\": 3}").is_err());
    }

    #[test]
    fn variance_matches_moments() {
        let mut rng = stream_rng(7, 0);
        let env = random_tabular(4, 2, Setting::Episodic { horizon: 2 }, &mut rng);
        let v = [0.0, 1.0, 2.0, 0.5];
        let row = env.transition(1, 3, 0);
        let m1: f64 = row.iter().zip(&v).map(|(p, x)| p * x).sum();
        let m2: f64 = row.iter().zip(&v).map(|(p, x)| p * x * x).sum();
        assert!((env.value_variance(1, 3, 0, &v) - (m2 - m1 * m1)).abs() < 1e-14);
    }
}
