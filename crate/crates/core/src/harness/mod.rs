//! Configuration, seeded parallel execution and CSV output.

mod config;

pub use config::{
    fingerprint, parse_config, to_toml, validate, AgentSection, Algorithm, ConfigErrors, ConfigIssue, ContextSpec,
    EnvSpec, ExperimentConfig, ExperimentKind, RunSection, ScenarioSection, Seeds,
};

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::bandit::{self, AgentSpec, BanditEnv, LearnerSpec};
use crate::concentration::{self, sphere_point, ContextDist, MartingaleScenario, RadiusPoint};
use crate::discounted::{self, default_evi_rounds, DiscountedConfig, DiscountedVariant};
use crate::envs::{
    deterministic_chain, hard_mdp_discounted, hard_mdp_episodic, random_tabular, EnvError, HardInstanceParams,
    MixtureEnv,
};
use crate::episodic::{self, EpisodicConfig, EpisodicVariant};
use crate::regression::ConfidenceSpec;
use crate::rng::stream_rng;
use crate::trace::{fmt_float, to_csv, RegretTrace, TraceRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("{0}")]
    Setup(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn signs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i8> {
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

/// Builds the linear mixture MDP described by `spec`; `episodes` is `K`
/// for the episodic hard instance.
pub fn build_mixture(spec: &EnvSpec, episodes: u64) -> Result<MixtureEnv, EnvError> {
    match spec {
        EnvSpec::Tabular { states, actions, setting, env_seed } => {
            Ok(random_tabular(*states, *actions, *setting, &mut stream_rng(*env_seed, 0)))
        }
        EnvSpec::Chain { states, setting } => Ok(deterministic_chain(*states, *setting)),
        EnvSpec::Hard { dim, horizon, param_bound, delta, env_seed } => {
            let mut rng = stream_rng(*env_seed, 0);
            let m = dim.saturating_sub(1);
            let params = HardInstanceParams {
                dim: *dim,
                horizon: *horizon,
                episodes: episodes as usize,
                param_bound: *param_bound,
                delta: *delta,
                mu_signs: (0..*horizon).map(|_| signs(m, &mut rng)).collect(),
            };
            hard_mdp_episodic(&params).map(|h| h.env)
        }
        EnvSpec::HardDiscounted { dim, gamma, delta, gap, env_seed } => {
            let mut rng = stream_rng(*env_seed, 0);
            hard_mdp_discounted(*dim, *gamma, *delta, *gap, &signs(dim.saturating_sub(1), &mut rng)).map(|h| h.env)
        }
        EnvSpec::UnitSphere { .. } => Err(EnvError::Record("unit_sphere is a bandit environment".into())),
    }
}

fn build_bandit(spec: &EnvSpec) -> Result<BanditEnv, HarnessError> {
    match spec {
        EnvSpec::UnitSphere { dim, actions, param_norm, noise_bound, per_round, env_seed, schedule } => {
            BanditEnv::unit_sphere(*dim, *actions, *param_norm, *noise_bound, schedule.clone(), *per_round, *env_seed)
                .map_err(|e| HarnessError::Setup(e.to_string()))
        }
        other => Err(HarnessError::Setup(format!("{:?} is not a bandit environment", other.type_name()))),
    }
}

/// Builds the martingale scenario of a concentration config.
pub fn build_scenario(cfg: &ExperimentConfig) -> Result<MartingaleScenario, HarnessError> {
    let sc = cfg.scenario.as_ref().ok_or_else(|| HarnessError::Setup("missing [scenario]".into()))?;
    let mut rng = stream_rng(cfg.run.base_seed, u64::MAX);
    let mu_star = sphere_point(sc.dim, 1.0, &mut rng) * sc.mu_norm;
    let contexts = match sc.contexts {
        ContextSpec::Sphere => ContextDist::Sphere,
        ContextSpec::Adversarial => ContextDist::Adversarial,
        ContextSpec::Fixed { count } => {
            ContextDist::Fixed((0..count).map(|_| sphere_point(sc.dim, sc.context_bound, &mut rng)).collect())
        }
    };
    Ok(MartingaleScenario {
        dim: sc.dim,
        horizon: cfg.run.horizon,
        contexts,
        context_bound: sc.context_bound,
        noise_bound: sc.noise_bound,
        sigma: sc.sigma,
        noise_scale: sc.noise_scale,
        lambda: sc.lambda,
        delta: sc.delta,
        mu_star,
        replicas: sc.replicas,
        base_seed: cfg.run.base_seed,
    })
}

/// Result of one seed: its value, or the error or panic message.
pub type SeedResult<T> = (u64, Result<T, String>);

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    match p.downcast::<String>() {
        Ok(s) => format!("panicked: {s}"),
        Err(p) => match p.downcast::<&'static str>() {
            Ok(s) => format!("panicked: {s}"),
            Err(_) => "panicked".into(),
        },
    }
}

/// Runs `f` on every seed in parallel, isolating panics; results come back
/// in the order of `seeds`.
pub fn run_seeds_isolated<T, F>(seeds: &[u64], f: F) -> Vec<SeedResult<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T, String> + Sync,
{
    seeds
        .par_iter()
        .map(|&s| {
            let r = catch_unwind(AssertUnwindSafe(|| f(s))).unwrap_or_else(|p| Err(panic_message(p)));
            (s, r)
        })
        .collect()
}

/// Aggregate of cumulative regret across seeds at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub step: u64,
    pub count: u64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Up to `points` evenly spaced steps ending at `horizon`.
pub fn default_grid(horizon: u64, points: u64) -> Vec<u64> {
    let points = points.max(1).min(horizon.max(1));
    let mut grid: Vec<u64> = (1..=points).map(|i| (i * horizon).div_ceil(points)).filter(|&s| s > 0).collect();
    grid.dedup();
    grid
}

/// Streaming mean, population standard deviation, min and max of the
/// cumulative regret at each grid step. Traces lacking a step are skipped, and
/// steps no trace reaches are omitted.
pub fn summarize<R: TraceRecord>(traces: &[RegretTrace<R>], grid: &[u64]) -> Vec<SummaryRow> {
    grid.iter()
        .filter_map(|&step| {
            let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for tr in traces {
                let Ok(i) = tr.records.binary_search_by_key(&step, |r| r.step()) else { continue };
                let x = tr.records[i].cumulative();
                n += 1;
                let d = x - mean;
                mean += d / n as f64;
                m2 += d * (x - mean);
                min = min.min(x);
                max = max.max(x);
            }
            if n == 0 {
                return None;
            }
            Some(SummaryRow { step, count: n, mean, std: (m2 / n as f64).sqrt(), min, max })
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("step,count,mean,std,min,max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step,
            r.count,
            fmt_float(r.mean),
            fmt_float(r.std),
            fmt_float(r.min),
            fmt_float(r.max)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedFailure {
    pub algorithm: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub fingerprint: String,
    pub files: Vec<PathBuf>,
    pub failures: Vec<SeedFailure>,
    pub diagnostics: serde_json::Value,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }
}

fn split<T>(
    results: Vec<SeedResult<T>>,
    algorithm: &str,
    failures: &mut Vec<SeedFailure>,
) -> Vec<T> {
    results
        .into_iter()
        .filter_map(|(seed, r)| match r {
            Ok(v) => Some(v),
            Err(message) => {
                failures.push(SeedFailure { algorithm: algorithm.into(), seed, message });
                None
            }
        })
        .collect()
}

fn write_traces<R: TraceRecord>(
    w: &mut Writer<'_>,
    stem: &str,
    traces: &[RegretTrace<R>],
    horizon: u64,
) -> Result<(), HarnessError> {
    w.write(&format!("{stem}.csv"), &to_csv(traces))?;
    w.write(&format!("{stem}_summary.csv"), &summary_csv(&summarize(traces, &default_grid(horizon, 100))))
}

fn seed_summaries<R: TraceRecord>(traces: &[RegretTrace<R>]) -> serde_json::Value {
    traces
        .iter()
        .map(|t| {
            let s = t.summary();
            json!({"seed": t.seed, "final_cumulative": s.final_cumulative, "quartile_means": s.quartile_means})
        })
        .collect()
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Runs the configured experiment with at most `jobs` worker threads and
/// writes its CSV files into `out_dir`. Output bytes do not depend on `jobs`.
pub fn run_suite(cfg: &ExperimentConfig, jobs: usize, out_dir: &Path) -> Result<SuiteReport, HarnessError> {
    let issues = validate(cfg);
    if !issues.is_empty() {
        return Err(ConfigErrors(issues).into());
    }
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io { path: out_dir.into(), source })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let fp = fingerprint(cfg);
    let mut w = Writer { dir: out_dir, files: Vec::new() };
    w.write("config.toml", &to_toml(cfg))?;
    let mut failures = Vec::new();
    let seeds = cfg.run.seeds.list();
    let horizon = cfg.run.horizon;
    let kind = cfg.run.kind.as_str();
    let mut diag = serde_json::Map::new();

    pool.install(|| -> Result<(), HarnessError> {
        match cfg.run.kind {
            ExperimentKind::Bandit => {
                let env = build_bandit(cfg.env.as_ref().expect("validated"))?;
                let agent = cfg.agent.as_ref().expect("validated");
                let b = agent.param_bound.unwrap_or(1.0);
                let lambda = agent.lambda.unwrap_or(1.0 / (b * b));
                for alg in &agent.algorithms {
                    let (dim, r, a) = (env.dim(), env.noise_bound(), env.action_bound());
                    let learner = match alg {
                        Algorithm::WeightedOful => {
                            LearnerSpec::Agent(AgentSpec::weighted_oful(dim, lambda, agent.delta, b, r, a))
                        }
                        Algorithm::Oful => LearnerSpec::Agent(AgentSpec::oful(dim, lambda, agent.delta, b, r, a)),
                        _ => LearnerSpec::Oracle,
                    };
                    let results = run_seeds_isolated(&seeds, |s| {
                        bandit::run_seed(&env, &learner, horizon, cfg.run.base_seed, s).map_err(|e| e.to_string())
                    });
                    let runs = split(results, alg.as_str(), &mut failures);
                    let traces: Vec<_> = runs.iter().map(|r| r.trace.clone()).collect();
                    write_traces(&mut w, &format!("{kind}_{}", alg.as_str()), &traces, horizon)?;
                    diag.insert(
                        alg.as_str().into(),
                        json!({
                            "seeds_completed": runs.len(),
                            "seed_summaries": seed_summaries(&traces),
                            "coverage_fraction": fraction(runs.iter().filter(|r| r.always_covered).count(), runs.len()),
                            "potential_within_bound": runs.iter().all(|r| r.potential <= r.potential_bound),
                        }),
                    );
                }
            }
            ExperimentKind::Episodic => {
                let env = build_mixture(cfg.env.as_ref().expect("validated"), horizon)?;
                let agent = cfg.agent.as_ref().expect("validated");
                for alg in &agent.algorithms {
                    let variant = match alg {
                        Algorithm::UcrlVtrPlus => EpisodicVariant::UcrlVtrPlus,
                        Algorithm::UcrlVtr => EpisodicVariant::UcrlVtr,
                        _ => EpisodicVariant::Oracle,
                    };
                    let mut ec = EpisodicConfig::for_env(&env, variant, agent.delta);
                    if let Some(b) = agent.param_bound {
                        ec.param_bound = b;
                        ec.lambda = 1.0 / (b * b);
                    }
                    if let Some(l) = agent.lambda {
                        ec.lambda = l;
                    }
                    let results = run_seeds_isolated(&seeds, |s| {
                        episodic::run_seed(&env, &ec, horizon, cfg.run.base_seed, s).map_err(|e| e.to_string())
                    });
                    let runs = split(results, alg.as_str(), &mut failures);
                    let traces: Vec<_> = runs.iter().map(|r| r.trace.clone()).collect();
                    write_traces(&mut w, &format!("{kind}_{}", alg.as_str()), &traces, horizon)?;
                    diag.insert(
                        alg.as_str().into(),
                        json!({
                            "seeds_completed": runs.len(),
                            "seed_summaries": seed_summaries(&traces),
                            "q_dominance_fraction": fraction(runs.iter().filter(|r| r.q_dominates).count(), runs.len()),
                            "variance_domination_rates": runs.iter().map(|r| r.variance_domination_rate()).collect::<Vec<_>>(),
                            "total_variance_within_bound_fraction": fraction(
                                runs.iter().filter(|r| r.total_variance <= r.total_variance_bound).count(),
                                runs.len()
                            ),
                            "potentials_within_bound": runs.iter().all(|r| r.potentials_ok),
                        }),
                    );
                }
            }
            ExperimentKind::Discounted => {
                let env = build_mixture(cfg.env.as_ref().expect("validated"), horizon)?;
                let agent = cfg.agent.as_ref().expect("validated");
                for alg in &agent.algorithms {
                    let variant = match alg {
                        Algorithm::UclkPlus => DiscountedVariant::UclkPlus,
                        _ => DiscountedVariant::Oracle,
                    };
                    let mut dc = DiscountedConfig::for_env(&env, variant, agent.delta, horizon);
                    if let Some(b) = agent.param_bound {
                        dc.param_bound = b;
                        dc.lambda = 1.0 / (b * b);
                    }
                    if let Some(l) = agent.lambda {
                        dc.lambda = l;
                    }
                    dc.evi_rounds = agent
                        .evi_rounds
                        .unwrap_or_else(|| default_evi_rounds(env.gamma().expect("discounted"), horizon));
                    let results = run_seeds_isolated(&seeds, |s| {
                        discounted::run_seed(&env, &dc, horizon, cfg.run.base_seed, s).map_err(|e| e.to_string())
                    });
                    let runs = split(results, alg.as_str(), &mut failures);
                    let traces: Vec<_> = runs.iter().map(|r| r.trace.clone()).collect();
                    write_traces(&mut w, &format!("{kind}_{}", alg.as_str()), &traces, horizon)?;
                    diag.insert(
                        alg.as_str().into(),
                        json!({
                            "seeds_completed": runs.len(),
                            "seed_summaries": seed_summaries(&traces),
                            "regret": "proxy: exact value gap of the current stationary greedy policy",
                            "evi_rounds": dc.evi_rounds,
                            "epochs": runs.iter().map(|r| r.epochs).collect::<Vec<_>>(),
                            "epoch_bound": fmt_float(runs.first().map_or(f64::NAN, |r| r.epoch_bound)),
                            "optimistic_plan_fraction": fraction(
                                runs.iter().map(|r| r.optimistic_plans as usize).sum(),
                                runs.iter().map(|r| r.plans as usize).sum()
                            ),
                        }),
                    );
                }
            }
            ExperimentKind::Concentration => {
                let sc = build_scenario(cfg)?;
                let report = concentration::run_tail_check(&sc).map_err(|e| HarnessError::Setup(e.to_string()))?;
                w.write("concentration.csv", &report.to_csv())?;
                let spec = sc.confidence();
                let grid: Vec<RadiusPoint> = [4usize, 16, 64, 256]
                    .into_iter()
                    .flat_map(|d| {
                        sc.decades().into_iter().map(move |t| RadiusPoint { spec: ConfidenceSpec { dim: d, ..spec }, t })
                    })
                    .collect();
                w.write("radii.csv", &concentration::radii_csv(&concentration::compare_radii(&grid)))?;
                diag.insert(
                    "concentration".into(),
                    json!({
                        "replicas": report.replicas.len(),
                        "violation_fraction": report.violation_fraction,
                        "estimate_violation_fraction": report.estimate_violation_fraction,
                        "hoeffding_violation_fraction": report.hoeffding_violation_fraction,
                        "median_ratio_bernstein": fmt_float(report.median_ratio_bernstein),
                        "median_ratio_hoeffding": fmt_float(report.median_ratio_hoeffding),
                        "coverage_limit": sc.delta + concentration::coverage_slack(sc.delta, sc.replicas),
                    }),
                );
            }
        }
        Ok(())
    })?;

    let diagnostics = serde_json::Value::Object(diag);
    let meta = json!({
        "fingerprint": fp,
        "kind": kind,
        "seeds": seeds,
        "failures": failures.iter().map(|f| json!({"algorithm": f.algorithm, "seed": f.seed, "message": f.message})).collect::<Vec<_>>(),
        "diagnostics": diagnostics,
    });
    w.write("metadata.json", &(serde_json::to_string_pretty(&meta).expect("json values serialize") + "\n"))?;
    Ok(SuiteReport { fingerprint: fp, files: w.files, failures, diagnostics })
}

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Small, fast versions of the invariant checks.
pub fn check_invariants() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut push = |name, passed, detail: String| out.push(CheckOutcome { name, passed, detail });

    // regression estimate against a dense solve
    let mut rng = stream_rng(1, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d = rng.gen_range(1..=8);
        let mut w = crate::regression::WlsState::new(d, 0.5).expect("positive lambda");
        let mut gram = nalgebra::DMatrix::<f64>::identity(d, d) * 0.5;
        let mut rhs = DVector::<f64>::zeros(d);
        for _ in 0..rng.gen_range(1..200) {
            let x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let (y, sb) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.1..2.0));
            w.update(&x, y, sb).expect("finite data");
            gram += &x * x.transpose() / (sb * sb);
            rhs += &x * (y / (sb * sb));
        }
        let want = gram.lu().solve(&rhs).expect("positive definite");
        worst = worst.max((w.estimate() - &want).norm() / want.norm().max(1e-300));
    }
    push("regression_exactness", worst <= 1e-9, format!("max relative error {worst:.3e}"));

    let sc = MartingaleScenario {
        dim: 3,
        horizon: 200,
        contexts: ContextDist::Sphere,
        context_bound: 1.0,
        noise_bound: 1.0,
        sigma: 1.0,
        noise_scale: 1.0,
        lambda: 1.0,
        delta: 0.1,
        mu_star: DVector::from_vec(vec![0.5, 0.0, 0.0]),
        replicas: 200,
        base_seed: 0,
    };
    match concentration::run_tail_check(&sc) {
        Ok(rep) => {
            let limit = 0.1 + concentration::coverage_slack(0.1, 200);
            push("bernstein_coverage", rep.violation_fraction <= limit, format!("{} ≤ {limit:.4}", rep.violation_fraction))
        }
        Err(e) => push("bernstein_coverage", false, e.to_string()),
    }

    let env = BanditEnv::unit_sphere(4, 10, 1.0, 1.0, bandit::SigmaSchedule::Cyclic(vec![0.1, 0.5]), false, 0)
        .expect("valid bandit");
    let learner = LearnerSpec::Agent(AgentSpec::weighted_oful(4, 1.0, 0.1, 1.0, 1.0, 1.0));
    match bandit::run_experiment(&env, &learner, 500, 0, &[0, 1, 2]) {
        Ok(runs) => {
            let ok = runs.iter().all(|r| r.potential <= r.potential_bound);
            push("elliptical_potential", ok, format!("{} runs", runs.len()));
            let again = bandit::run_experiment(&env, &learner, 500, 0, &[0, 1, 2]).expect("same run");
            let a: Vec<_> = runs.iter().map(|r| r.trace.clone()).collect();
            let b: Vec<_> = again.iter().map(|r| r.trace.clone()).collect();
            push("reproducibility", to_csv(&a) == to_csv(&b), "bandit CSV repeated".into());
        }
        Err(e) => push("elliptical_potential", false, e.to_string()),
    }

    let env = random_tabular(3, 2, crate::envs::Setting::Episodic { horizon: 3 }, &mut stream_rng(2, 0));
    let cfg = EpisodicConfig::for_env(&env, EpisodicVariant::UcrlVtrPlus, 0.1);
    match episodic::run_seed(&env, &cfg, 50, 0, 0) {
        Ok(run) => push(
            "episodic_optimism",
            run.q_dominates,
            format!("variance domination rate {:.3}", run.variance_domination_rate()),
        ),
        Err(e) => push("episodic_optimism", false, e.to_string()),
    }

    let env = random_tabular(3, 2, crate::envs::Setting::Discounted { gamma: 0.8 }, &mut stream_rng(3, 0));
    let cfg = DiscountedConfig::for_env(&env, DiscountedVariant::UclkPlus, 0.1, 1000);
    match discounted::run_seed(&env, &cfg, 1000, 0, 0) {
        Ok(run) => push(
            "epoch_bound",
            run.epochs as f64 <= run.epoch_bound,
            format!("{} ≤ {:.2}", run.epochs, run.epoch_bound),
        ),
        Err(e) => push("epoch_bound", false, e.to_string()),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Rec(u64, f64);

    impl TraceRecord for Rec {
        const COLUMNS: &'static [&'static str] = &["t", "cumulative_regret"];
        fn step(&self) -> u64 {
            self.0
        }
        fn cumulative(&self) -> f64 {
            self.1
        }
        fn cells(&self) -> Vec<String> {
            vec![self.0.to_string(), fmt_float(self.1)]
        }
    }

    fn constant(seed: u64, value: f64, n: u64) -> RegretTrace<Rec> {
        RegretTrace { seed, records: (1..=n).map(|t| Rec(t, value)).collect() }
    }

    #[test]
    fn single_trace_summary() {
        let tr = RegretTrace { seed: 0, records: (1..=5).map(|t| Rec(t, t as f64 * 0.3)).collect() };
        let rows = summarize(std::slice::from_ref(&tr), &[1, 2, 3, 4, 5]);
        for (row, rec) in rows.iter().zip(&tr.records) {
            assert_eq!(row.mean, rec.1);
            assert_eq!(row.std, 0.0);
            assert_eq!((row.min, row.max), (rec.1, rec.1));
        }
    }

    #[test]
    fn two_constant_traces() {
        let rows = summarize(&[constant(0, 1.0, 4), constant(1, 3.0, 4)], &[2, 4]);
        assert!(rows.iter().all(|r| r.mean == 2.0 && r.std == 1.0 && r.count == 2));
    }

    #[test]
    fn grid_shape() {
        assert_eq!(default_grid(10, 100), (1..=10).collect::<Vec<_>>());
        let g = default_grid(5000, 100);
        assert_eq!(g.len(), 100);
        assert_eq!(*g.last().unwrap(), 5000);
        assert_eq!(g[0], 50);
        assert!(default_grid(0, 10).is_empty());
    }

    #[test]
    fn panics_are_isolated() {
        let out = run_seeds_isolated(&[0, 1, 2, 3], |s| {
            if s == 2 {
                panic!("boom {s}");
            }
            Ok(s * 10)
        });
        assert_eq!(out[0], (0, Ok(0)));
        assert_eq!(out[3], (3, Ok(30)));
        assert_eq!(out[2].1.as_ref().unwrap_err(), "panicked: boom 2");
    }

    #[test]
    fn invariant_suite_passes() {
        for c in check_invariants() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
