//! Incremental weighted ridge regression and confidence radii.
//!
//! [`WlsState`] keeps the weighted Gram matrix `Σ = λI + Σ xᵢxᵢᵀ/σ̄ᵢ²`, the
//! weighted response vector `b = Σ yᵢxᵢ/σ̄ᵢ²`, a rank-one-updated inverse and a
//! running log-determinant. Every radius used by the agents lives here as a
//! free function over a [`ConfidenceSpec`]. All logarithms are natural.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Number of rank-one updates between refactorizations of the inverse.
pub const REFACTOR_EVERY: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("context has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("sigma_bar must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("regularizer must be positive and finite, got {0}")]
    BadLambda(f64),
}

/// Sufficient statistics of a weighted ridge regression.
#[derive(Debug, Clone)]
pub struct WlsState {
    dim: usize,
    lambda: f64,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    response: DVector<f64>,
    count: u64,
    logdet: f64,
    since_refactor: u32,
    // Σ_t min{1, ‖x_t/σ̄_t‖²_{Σ_{t-1}⁻¹}} and max_t ‖x_t/σ̄_t‖²
    potential: f64,
    max_scaled_sq_norm: f64,
}

impl WlsState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self, RegressionError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(RegressionError::BadLambda(lambda));
        }
        Ok(Self {
            dim,
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            gram_inv: DMatrix::identity(dim, dim) / lambda,
            response: DVector::zeros(dim),
            count: 0,
            logdet: dim as f64 * lambda.ln(),
            since_refactor: 0,
            potential: 0.0,
            max_scaled_sq_norm: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// The weighted Gram matrix `Σ`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// The weighted response vector `b`.
    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// `log det Σ`, accumulated through the matrix determinant lemma.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// `log det Σ − d log λ`.
    pub fn logdet_ratio(&self) -> f64 {
        self.logdet - self.dim as f64 * self.lambda.ln()
    }

    /// Running elliptical potential `Σ min{1, ‖x/σ̄‖²_{Σ⁻¹}}` over absorbed updates.
    pub fn potential(&self) -> f64 {
        self.potential
    }

    pub fn max_scaled_sq_norm(&self) -> f64 {
        self.max_scaled_sq_norm
    }

    /// Upper bound `2d log((dλ + T L'²)/(dλ))` on [`Self::potential`], with
    /// `L'²` the largest scaled squared norm seen so far.
    pub fn potential_bound(&self) -> f64 {
        let d = self.dim as f64;
        let dl = d * self.lambda;
        2.0 * d * ((dl + self.count as f64 * self.max_scaled_sq_norm) / dl).ln()
    }

    fn check_context(&self, x: &DVector<f64>) -> Result<(), RegressionError> {
        if x.len() != self.dim {
            return Err(RegressionError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::NonFinite("context"));
        }
        Ok(())
    }

    /// Absorbs `(x, y)` with weight `1/σ̄²`.
    pub fn update(&mut self, x: &DVector<f64>, y: f64, sigma_bar: f64) -> Result<(), RegressionError> {
        self.check_context(x)?;
        if !y.is_finite() {
            return Err(RegressionError::NonFinite("response"));
        }
        if !sigma_bar.is_finite() {
            return Err(RegressionError::NonFinite("sigma_bar"));
        }
        if sigma_bar <= 0.0 {
            return Err(RegressionError::NonPositiveWeight(sigma_bar));
        }
        let w = 1.0 / (sigma_bar * sigma_bar);

        let u = &self.gram_inv * x;
        let q = x.dot(&u).max(0.0);
        let scaled = w * q;
        self.potential += scaled.min(1.0);
        self.max_scaled_sq_norm = self.max_scaled_sq_norm.max(w * x.norm_squared());
        self.logdet += scaled.ln_1p();

        self.gram.ger(w, x, x, 1.0);
        self.response.axpy(w * y, x, 1.0);
        self.gram_inv.ger(-w / (1.0 + scaled), &u, &u, 1.0);
        self.count += 1;

        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
        Ok(())
    }

    /// Recomputes the inverse from the Gram matrix.
    pub fn refactor(&mut self) {
        self.since_refactor = 0;
        let sym = (&self.gram + self.gram.transpose()) * 0.5;
        if let Some(chol) = sym.cholesky() {
            self.gram_inv = chol.inverse();
        }
    }

    /// Weighted ridge estimate `Σ⁻¹ b`, with one step of iterative refinement.
    pub fn estimate(&self) -> DVector<f64> {
        let mut mu = &self.gram_inv * &self.response;
        let residual = &self.response - &self.gram * &mu;
        mu += &self.gram_inv * residual;
        mu
    }

    /// `√(xᵀ Σ⁻¹ x)`.
    pub fn bonus(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        x.dot(&(&self.gram_inv * x)).max(0.0).sqrt()
    }

    /// `√(xᵀ Σ x)`.
    pub fn gram_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram * x)).max(0.0).sqrt()
    }
}

/// Tunables for evaluating a confidence radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSpec {
    pub dim: usize,
    /// Almost-sure bound `R` on the noise magnitude.
    pub noise_bound: f64,
    /// Standard-deviation bound `σ` on the noise.
    pub sigma: f64,
    /// Bound `L` (or `A`) on context norms.
    pub context_bound: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Bound `B` on the parameter norm.
    pub param_bound: f64,
    /// Smallest weight `σ̄` used so far (weighted bandit radius only).
    pub sigma_bar_min: f64,
}

impl ConfidenceSpec {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("noise_bound", self.noise_bound),
            ("context_bound", self.context_bound),
            ("lambda", self.lambda),
            ("param_bound", self.param_bound),
            ("sigma_bar_min", self.sigma_bar_min),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if self.dim == 0 {
            return Err("dim must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("delta must lie in (0,1), got {}", self.delta));
        }
        Ok(())
    }
}

fn union_log(t: f64, delta: f64) -> f64 {
    (4.0 * t * t / delta).ln()
}

/// Bernstein-type self-normalized radius
/// `8σ√(d log(1+tL²/(dλ)) log(4t²/δ)) + 4R log(4t²/δ)`; zero at `t = 0`.
pub fn bernstein_radius(spec: &ConfidenceSpec, t: u64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let d = spec.dim as f64;
    let t = t as f64;
    let l2 = spec.context_bound * spec.context_bound;
    let log_det = (t * l2 / (d * spec.lambda)).ln_1p();
    let log_union = union_log(t, spec.delta);
    8.0 * spec.sigma * (d * log_det * log_union).sqrt() + 4.0 * spec.noise_bound * log_union
}

/// Self-normalized part of the sub-Gaussian radius, `R√(d log((1+tL²/λ)/δ))`.
pub fn hoeffding_self_normalized(spec: &ConfidenceSpec, t: u64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let d = spec.dim as f64;
    let l2 = spec.context_bound * spec.context_bound;
    let inner = (1.0 + t as f64 * l2 / spec.lambda) / spec.delta;
    spec.noise_bound * (d * inner.ln()).sqrt()
}

/// Sub-Gaussian (OFUL) parameter radius `R√(d log((1+tL²/λ)/δ)) + √λB`.
/// At `t = 0` only the `√λB` term remains.
pub fn hoeffding_radius(spec: &ConfidenceSpec, t: u64) -> f64 {
    hoeffding_self_normalized(spec, t) + spec.lambda.sqrt() * spec.param_bound
}

/// Data-dependent sub-Gaussian radius `R√(2 log(1/δ) + log(det Σ/λᵈ)) + √λB`,
/// taking the log-determinant ratio directly.
pub fn hoeffding_radius_logdet(spec: &ConfidenceSpec, logdet_ratio: f64) -> f64 {
    let inner = 2.0 * (1.0 / spec.delta).ln() + logdet_ratio.max(0.0);
    spec.noise_bound * inner.sqrt() + spec.lambda.sqrt() * spec.param_bound
}

/// Radius of Weighted OFUL:
/// `8√(d log(1+tA²/(σ̄²_min dλ)) log(4t²/δ)) + (4R/σ̄_min) log(4t²/δ)`; zero at `t = 0`.
pub fn weighted_oful_radius(spec: &ConfidenceSpec, t: u64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let d = spec.dim as f64;
    let t = t as f64;
    let smin2 = spec.sigma_bar_min * spec.sigma_bar_min;
    let a2 = spec.context_bound * spec.context_bound;
    let log_det = (t * a2 / (smin2 * d * spec.lambda)).ln_1p();
    let log_union = union_log(t, spec.delta);
    8.0 * (d * log_det * log_union).sqrt() + 4.0 * spec.noise_bound / spec.sigma_bar_min * log_union
}

/// Parameter-deviation bound obtained from the Faury et al. inequality
/// rescaled to general `R`, `L`:
/// `σ²√λ/(2RL) + (dRL/√λ) log(1+tR²L²/λ) + (2d log 2 + 2 log(1/δ))RL/√λ + √λB`.
pub fn faury_radius(spec: &ConfidenceSpec, t: u64) -> f64 {
    let d = spec.dim as f64;
    let rl = spec.noise_bound * spec.context_bound;
    let sl = spec.lambda.sqrt();
    let t = t as f64;
    spec.sigma * spec.sigma * sl / (2.0 * rl)
        + d * rl / sl * (t * rl * rl / spec.lambda).ln_1p()
        + (2.0 * d * std::f64::consts::LN_2 + 2.0 * (1.0 / spec.delta).ln()) * rl / sl
        + sl * spec.param_bound
}
