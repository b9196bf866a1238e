//! Monte Carlo checks of the self-normalized Bernstein bound.
//!
//! Each replica simulates `S_t = Σ_{i≤t} x_i η_i` with `Z_t = λI + Σ x_i x_iᵀ`
//! and tracks, at every `t`, how far `‖S_t‖_{Z_t⁻¹}` and the estimation error
//! `‖μ_t − μ*‖_{Z_t}` exceed their radii.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::regression::{
    bernstein_radius, faury_radius, hoeffding_radius, hoeffding_self_normalized, ConfidenceSpec, WlsState,
};
use crate::rng::stream_rng;
use crate::trace::fmt_float;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextDist {
    /// Contexts drawn uniformly from a fixed list.
    Fixed(Vec<DVector<f64>>),
    /// Uniform on the sphere of radius `L`.
    Sphere,
    /// `x_t = L · Z_{t−1}⁻¹S_{t−1} / ‖Z_{t−1}⁻¹S_{t−1}‖`, the direction in
    /// which the current self-normalized sum is largest (`L·e₁` when `S = 0`).
    Adversarial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleScenario {
    pub dim: usize,
    pub horizon: u64,
    pub contexts: ContextDist,
    /// Context norm bound `L`.
    pub context_bound: f64,
    /// Almost-sure noise bound `R`.
    pub noise_bound: f64,
    /// Conditional standard deviation bound `σ` used by the radius.
    pub sigma: f64,
    /// Rademacher magnitude: `η = ±noise_scale`.
    pub noise_scale: f64,
    pub lambda: f64,
    pub delta: f64,
    pub mu_star: DVector<f64>,
    pub replicas: usize,
    pub base_seed: u64,
}

/// Smallest replica count accepted by [`run_tail_check`].
pub const MIN_REPLICAS: usize = 100;

impl MartingaleScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.dim == 0 || self.horizon == 0 {
            return bad("dim and horizon must be positive".into());
        }
        if self.mu_star.len() != self.dim {
            return bad(format!("mu_star has length {}, expected {}", self.mu_star.len(), self.dim));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale <= self.sigma && self.sigma <= self.noise_bound) {
            return bad(format!(
                "need 0 <= noise_scale <= sigma <= R, got {} / {} / {}",
                self.noise_scale, self.sigma, self.noise_bound
            ));
        }
        if !(self.context_bound > 0.0 && self.context_bound.is_finite()) {
            return bad(format!("context_bound must be positive, got {}", self.context_bound));
        }
        if let ContextDist::Fixed(set) = &self.contexts {
            if set.is_empty() {
                return bad("fixed context set is empty".into());
            }
            if let Some(x) = set.iter().find(|x| x.len() != self.dim || x.norm() > self.context_bound * (1.0 + 1e-12)) {
                return bad(format!("fixed context of norm {} violates the bound or dimension", x.norm()));
            }
        }
        self.confidence().validate().map_err(ScenarioError::Invalid)
    }

    pub fn confidence(&self) -> ConfidenceSpec {
        ConfidenceSpec {
            dim: self.dim,
            noise_bound: self.noise_bound,
            sigma: self.sigma,
            context_bound: self.context_bound,
            lambda: self.lambda,
            delta: self.delta,
            param_bound: self.mu_star.norm(),
            sigma_bar_min: 1.0,
        }
    }

    /// Powers of ten up to the horizon.
    pub fn decades(&self) -> Vec<u64> {
        std::iter::successors(Some(10u64), |t| t.checked_mul(10)).take_while(|&t| t <= self.horizon).collect()
    }
}

/// Sample of a point uniformly on the sphere of radius `radius`.
pub fn sphere_point<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let n = v.norm();
        if n > 1e-12 {
            return v * (radius / n);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaStats {
    pub replica: u64,
    /// `sup_t ‖S_t‖_{Z_t⁻¹} − β_t`.
    pub max_violation: f64,
    /// `sup_t ‖μ_t − μ*‖_{Z_t} − β_t − √λ‖μ*‖`.
    pub max_estimate_violation: f64,
    /// `sup_t ‖S_t‖_{Z_t⁻¹} − β^H_t` for the Hoeffding radius.
    pub max_hoeffding_violation: f64,
    /// `‖S_t‖_{Z_t⁻¹}` at the horizon.
    pub final_norm: f64,
    /// `‖S_t‖_{Z_t⁻¹} / β_t` at each decade.
    pub bernstein_ratios: Vec<f64>,
    pub hoeffding_ratios: Vec<f64>,
}

impl ReplicaStats {
    pub fn violated(&self) -> bool {
        self.max_violation > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub decades: Vec<u64>,
    pub replicas: Vec<ReplicaStats>,
    pub violation_fraction: f64,
    pub estimate_violation_fraction: f64,
    pub hoeffding_violation_fraction: f64,
    /// Median over replicas of `‖S_T‖_{Z_T⁻¹} / β_T`.
    pub median_ratio_bernstein: f64,
    pub median_ratio_hoeffding: f64,
}

/// Three-sigma binomial slack allowed above `δ`.
pub fn coverage_slack(delta: f64, replicas: usize) -> f64 {
    3.0 * (delta * (1.0 - delta) / replicas as f64).sqrt()
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn simulate(sc: &MartingaleScenario, replica: u64) -> ReplicaStats {
    let spec = sc.confidence();
    let mut rng = stream_rng(sc.base_seed, replica);
    let mut z = WlsState::new(sc.dim, sc.lambda).expect("validated lambda");
    let mut s = DVector::<f64>::zeros(sc.dim);
    let reg = &sc.mu_star * sc.lambda;
    let shift = sc.lambda.sqrt() * sc.mu_star.norm();
    let decades = sc.decades();
    let mut stats = ReplicaStats {
        replica,
        max_violation: f64::NEG_INFINITY,
        max_estimate_violation: f64::NEG_INFINITY,
        max_hoeffding_violation: f64::NEG_INFINITY,
        final_norm: 0.0,
        bernstein_ratios: Vec::with_capacity(decades.len()),
        hoeffding_ratios: Vec::with_capacity(decades.len()),
    };
    for t in 1..=sc.horizon {
        let x = match &sc.contexts {
            ContextDist::Fixed(set) => set[rng.gen_range(0..set.len())].clone(),
            ContextDist::Sphere => sphere_point(sc.dim, sc.context_bound, &mut rng),
            ContextDist::Adversarial => {
                let dir = z.gram_inv() * &s;
                let n = dir.norm();
                if n > 0.0 {
                    dir * (sc.context_bound / n)
                } else {
                    let mut e = DVector::zeros(sc.dim);
                    e[0] = sc.context_bound;
                    e
                }
            }
        };
        let eta = if rng.gen::<bool>() { sc.noise_scale } else { -sc.noise_scale };
        s.axpy(eta, &x, 1.0);
        z.update(&x, 0.0, 1.0).expect("finite context");
        let norm = z.bonus(&s);
        // μ_t − μ* = Z_t⁻¹(S_t − λμ*)
        let err = z.bonus(&(&s - &reg));
        let beta = bernstein_radius(&spec, t);
        let beta_h = hoeffding_self_normalized(&spec, t);
        stats.max_violation = stats.max_violation.max(norm - beta);
        stats.max_estimate_violation = stats.max_estimate_violation.max(err - beta - shift);
        stats.max_hoeffding_violation = stats.max_hoeffding_violation.max(norm - beta_h);
        if decades.contains(&t) {
            stats.bernstein_ratios.push(ratio(norm, beta));
            stats.hoeffding_ratios.push(ratio(norm, beta_h));
        }
        stats.final_norm = norm;
    }
    stats
}

/// Runs every replica in parallel from stream `(base_seed, replica)`.
pub fn run_tail_check(sc: &MartingaleScenario) -> Result<CoverageReport, ScenarioError> {
    sc.validate()?;
    if sc.replicas < MIN_REPLICAS {
        return Err(ScenarioError::Invalid(format!("need at least {MIN_REPLICAS} replicas, got {}", sc.replicas)));
    }
    let replicas: Vec<ReplicaStats> = (0..sc.replicas as u64).into_par_iter().map(|r| simulate(sc, r)).collect();
    let n = replicas.len() as f64;
    let frac = |f: &dyn Fn(&ReplicaStats) -> bool| replicas.iter().filter(|r| f(r)).count() as f64 / n;
    let spec = sc.confidence();
    let beta_t = bernstein_radius(&spec, sc.horizon);
    let beta_h = hoeffding_self_normalized(&spec, sc.horizon);
    Ok(CoverageReport {
        decades: sc.decades(),
        violation_fraction: frac(&|r| r.violated()),
        estimate_violation_fraction: frac(&|r| r.max_estimate_violation > 0.0),
        hoeffding_violation_fraction: frac(&|r| r.max_hoeffding_violation > 0.0),
        median_ratio_bernstein: median(replicas.iter().map(|r| ratio(r.final_norm, beta_t)).collect()),
        median_ratio_hoeffding: median(replicas.iter().map(|r| ratio(r.final_norm, beta_h)).collect()),
        replicas,
    })
}

impl CoverageReport {
    /// One row per replica.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replica,max_violation,max_estimate_violation,max_hoeffding_violation");
        for t in &self.decades {
            let _ = write!(out, ",ratio_bernstein_t{t}");
        }
        for t in &self.decades {
            let _ = write!(out, ",ratio_hoeffding_t{t}");
        }
        out.push('\n');
        for r in &self.replicas {
            let _ = write!(
                out,
                "{},{},{},{}",
                r.replica,
                fmt_float(r.max_violation),
                fmt_float(r.max_estimate_violation),
                fmt_float(r.max_hoeffding_violation)
            );
            for v in r.bernstein_ratios.iter().chain(&r.hoeffding_ratios) {
                out.push(',');
                out.push_str(&fmt_float(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// One grid point of [`compare_radii`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusPoint {
    pub spec: ConfidenceSpec,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusRow {
    pub point: RadiusPoint,
    /// Bernstein radius plus the `√λB` regularization term.
    pub bernstein: f64,
    pub hoeffding: f64,
    pub faury: f64,
}

impl RadiusRow {
    pub fn bernstein_tighter(&self) -> bool {
        self.bernstein < self.hoeffding
    }
}

/// Regularizer `λ = σ²d/B²` balancing the two terms of the Bernstein radius.
pub fn balanced_lambda(sigma: f64, dim: usize, param_bound: f64) -> f64 {
    sigma * sigma * dim as f64 / (param_bound * param_bound)
}

pub fn compare_radii(grid: &[RadiusPoint]) -> Vec<RadiusRow> {
    grid.iter()
        .map(|p| RadiusRow {
            point: *p,
            bernstein: bernstein_radius(&p.spec, p.t) + p.spec.lambda.sqrt() * p.spec.param_bound,
            hoeffding: hoeffding_radius(&p.spec, p.t),
            faury: faury_radius(&p.spec, p.t),
        })
        .collect()
}

pub fn radii_csv(rows: &[RadiusRow]) -> String {
    let mut out = String::from("dim,t,sigma,noise_bound,lambda,delta,param_bound,bernstein,hoeffding,faury\n");
    for r in rows {
        let s = &r.point.spec;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.dim,
            r.point.t,
            fmt_float(s.sigma),
            fmt_float(s.noise_bound),
            fmt_float(s.lambda),
            fmt_float(s.delta),
            fmt_float(s.param_bound),
            fmt_float(r.bernstein),
            fmt_float(r.hoeffding),
            fmt_float(r.faury)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(dim: usize, horizon: u64, noise_scale: f64, sigma: f64) -> MartingaleScenario {
        let mut mu = DVector::zeros(dim);
        mu[0] = 0.5;
        MartingaleScenario {
            dim,
            horizon,
            contexts: ContextDist::Sphere,
            context_bound: 1.0,
            noise_bound: 1.0,
            sigma,
            noise_scale,
            lambda: 1.0,
            delta: 0.1,
            mu_star: mu,
            replicas: 100,
            base_seed: 7,
        }
    }

    #[test]
    fn zero_noise_has_zero_sum() {
        for contexts in [ContextDist::Sphere, ContextDist::Adversarial] {
            let sc = MartingaleScenario { contexts, ..scenario(3, 200, 0.0, 0.5) };
            let rep = run_tail_check(&sc).unwrap();
            assert_eq!(rep.violation_fraction, 0.0);
            assert!(rep.replicas.iter().all(|r| r.final_norm == 0.0));
            assert!(rep.replicas.iter().all(|r| r.bernstein_ratios.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn rejects_noise_above_bound() {
        let sc = scenario(3, 10, 0.6, 0.5);
        assert!(sc.validate().is_err());
        let sc = MartingaleScenario { noise_bound: 0.4, ..scenario(3, 10, 0.3, 0.5) };
        assert!(sc.validate().is_err());
        let sc = MartingaleScenario { replicas: 99, ..scenario(3, 10, 0.3, 0.5) };
        assert!(run_tail_check(&sc).is_err());
    }

    #[test]
    fn coverage_on_small_runs() {
        for contexts in [
            ContextDist::Sphere,
            ContextDist::Adversarial,
            ContextDist::Fixed(vec![DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 0.6, 0.8])]),
        ] {
            let sc = MartingaleScenario { contexts, replicas: 200, ..scenario(3, 300, 1.0, 1.0) };
            let rep = run_tail_check(&sc).unwrap();
            assert!(rep.violation_fraction <= 0.1 + coverage_slack(0.1, 200));
            assert!(rep.estimate_violation_fraction <= 0.1 + coverage_slack(0.1, 200));
        }
    }

    #[test]
    fn estimate_error_matches_normal_equations() {
        // Direct oracle: rebuild Z and μ_t from the same contexts by dense solve.
        let dim = 3;
        let lambda = 0.7;
        let mu = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let mut rng = stream_rng(1, 1);
        let mut z = nalgebra::DMatrix::<f64>::identity(dim, dim) * lambda;
        let mut xy = DVector::<f64>::zeros(dim);
        let mut s = DVector::<f64>::zeros(dim);
        let mut w = WlsState::new(dim, lambda).unwrap();
        for _ in 0..50 {
            let x = sphere_point(dim, 1.0, &mut rng);
            let eta = if rng.gen::<bool>() { 0.4 } else { -0.4 };
            z += &x * x.transpose();
            xy += &x * (x.dot(&mu) + eta);
            s += &x * eta;
            w.update(&x, 0.0, 1.0).unwrap();
        }
        let mu_t = z.clone().lu().solve(&xy).unwrap();
        let direct = ((&mu_t - &mu).transpose() * &z * (&mu_t - &mu))[(0, 0)].sqrt();
        let via_sum = w.bonus(&(&s - &mu * lambda));
        assert!((direct - via_sum).abs() < 1e-10 * direct.max(1.0));
    }

    #[test]
    fn deterministic_reports() {
        let sc = MartingaleScenario { contexts: ContextDist::Adversarial, ..scenario(4, 150, 0.3, 0.5) };
        let a = run_tail_check(&sc).unwrap();
        let b = run_tail_check(&sc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("replica,max_violation,max_estimate_violation,max_hoeffding_violation,ratio_bernstein_t10,ratio_bernstein_t100,ratio_hoeffding_t10"));
    }

    #[test]
    #[ignore = "fails as stated: at d=8, T=1000 the 4R·log(4T²/δ) term alone exceeds the Hoeffding radius"]
    fn low_noise_bernstein_ratio_exceeds_hoeffding() {
        let sc = MartingaleScenario { replicas: 200, ..scenario(8, 1000, 0.05, 0.05) };
        let rep = run_tail_check(&sc).unwrap();
        assert!(rep.median_ratio_bernstein > rep.median_ratio_hoeffding);
    }

    #[test]
    fn low_noise_bernstein_tighter_in_high_dimension() {
        let base = ConfidenceSpec {
            dim: 4096,
            noise_bound: 1.0,
            sigma: 0.05,
            context_bound: 1.0,
            lambda: 1.0,
            delta: 0.1,
            param_bound: 1.0,
            sigma_bar_min: 1.0,
        };
        let row = compare_radii(&[RadiusPoint { spec: base, t: 1000 }])[0];
        assert!(row.bernstein_tighter(), "{row:?}");
        let low = ConfidenceSpec { dim: 8, ..base };
        assert!(!compare_radii(&[RadiusPoint { spec: low, t: 1000 }])[0].bernstein_tighter());
    }

    #[test]
    fn hoeffding_over_bernstein_grows_with_dim_at_sigma_r_over_root_d() {
        let rows = compare_radii(
            &[4usize, 16, 64, 256]
                .iter()
                .map(|&d| RadiusPoint {
                    spec: ConfidenceSpec {
                        dim: d,
                        noise_bound: 1.0,
                        sigma: 1.0 / (d as f64).sqrt(),
                        context_bound: 1.0,
                        lambda: 1.0,
                        delta: 0.1,
                        param_bound: 1.0,
                        sigma_bar_min: 1.0,
                    },
                    t: 10_000,
                })
                .collect::<Vec<_>>(),
        );
        let ratios: Vec<f64> = rows.iter().map(|r| r.hoeffding / r.bernstein).collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
    }

    #[test]
    fn balanced_lambda_matches_sigma_root_d_plus_r_scaling() {
        // With λ = σ²d/B² the regularization term √λB equals σ√d.
        let (sigma, d, b) = (0.3, 16usize, 2.0);
        let lambda = balanced_lambda(sigma, d, b);
        assert!((lambda.sqrt() * b - sigma * (d as f64).sqrt()).abs() < 1e-12);
        let spec = ConfidenceSpec {
            dim: d,
            noise_bound: 1.0,
            sigma,
            context_bound: 1.0,
            lambda,
            delta: 0.1,
            param_bound: b,
            sigma_bar_min: 1.0,
        };
        let row = compare_radii(&[RadiusPoint { spec, t: 1000 }])[0];
        let lu = (4.0 * 1e6 / 0.1f64).ln();
        let ld = (1000.0 / (d as f64 * lambda)).ln_1p();
        let want = 8.0 * sigma * (d as f64 * ld * lu).sqrt() + 4.0 * lu + sigma * (d as f64).sqrt();
        assert!((row.bernstein - want).abs() < 1e-9);
        assert!(radii_csv(&[row]).lines().count() == 2);
    }
}
