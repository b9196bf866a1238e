//! Experiment configuration: TOML parsing with full error collection,
//! canonical serialization and fingerprinting.

use std::collections::BTreeSet;
use std::fmt;

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::bandit::SigmaSchedule;
use crate::envs::Setting;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Bandit,
    Episodic,
    Discounted,
    Concentration,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [Self::Bandit, Self::Episodic, Self::Discounted, Self::Concentration];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bandit => "bandit",
            Self::Episodic => "episodic",
            Self::Discounted => "discounted",
            Self::Concentration => "concentration",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    WeightedOful,
    Oful,
    UcrlVtrPlus,
    UcrlVtr,
    UclkPlus,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] =
        [Self::WeightedOful, Self::Oful, Self::UcrlVtrPlus, Self::UcrlVtr, Self::UclkPlus, Self::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::WeightedOful => "weighted_oful",
            Self::Oful => "oful",
            Self::UcrlVtrPlus => "ucrl_vtr_plus",
            Self::UcrlVtr => "ucrl_vtr",
            Self::UclkPlus => "uclk_plus",
            Self::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub fn supports(self, kind: ExperimentKind) -> bool {
        matches!(
            (self, kind),
            (Self::WeightedOful | Self::Oful | Self::Oracle, ExperimentKind::Bandit)
                | (Self::UcrlVtrPlus | Self::UcrlVtr | Self::Oracle, ExperimentKind::Episodic)
                | (Self::UclkPlus | Self::Oracle, ExperimentKind::Discounted)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Seeds {
    /// Seeds `0..n`.
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub kind: ExperimentKind,
    /// Rounds `T` (bandit, discounted, concentration) or episodes `K`.
    pub horizon: u64,
    pub base_seed: u64,
    pub seeds: Seeds,
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    UnitSphere {
        dim: usize,
        actions: usize,
        param_norm: f64,
        noise_bound: f64,
        per_round: bool,
        env_seed: u64,
        schedule: SigmaSchedule,
    },
    Tabular {
        states: usize,
        actions: usize,
        setting: Setting,
        env_seed: u64,
    },
    Chain {
        states: usize,
        setting: Setting,
    },
    /// Episodic hard instance; `K` is the run horizon.
    Hard {
        dim: usize,
        horizon: usize,
        param_bound: f64,
        delta: Option<f64>,
        env_seed: u64,
    },
    HardDiscounted {
        dim: usize,
        gamma: f64,
        delta: f64,
        gap: f64,
        env_seed: u64,
    },
}

impl EnvSpec {
    pub fn type_name(&self) -> &'static str {
        match self {
            EnvSpec::UnitSphere { .. } => "unit_sphere",
            EnvSpec::Tabular { .. } => "tabular",
            EnvSpec::Chain { .. } => "chain",
            EnvSpec::Hard { .. } => "hard",
            EnvSpec::HardDiscounted { .. } => "hard_discounted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSection {
    pub algorithms: Vec<Algorithm>,
    /// Defaults to `1/B²`.
    pub lambda: Option<f64>,
    pub delta: f64,
    /// Defaults to 1 for bandits and the true parameter norm for MDPs.
    pub param_bound: Option<f64>,
    /// Discounted only; defaults to `⌈(1−γ)⁻¹ log(T/(1−γ))⌉`.
    pub evi_rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextSpec {
    Sphere,
    Adversarial,
    /// `count` unit-sphere contexts drawn once from the base seed.
    Fixed { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSection {
    pub dim: usize,
    pub contexts: ContextSpec,
    pub context_bound: f64,
    pub noise_bound: f64,
    pub sigma: f64,
    pub noise_scale: f64,
    pub lambda: f64,
    pub delta: f64,
    pub mu_norm: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub env: Option<EnvSpec>,
    pub agent: Option<AgentSection>,
    pub scenario: Option<ScenarioSection>,
}

/// One configuration problem and the key it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.path.as_str()).collect()
    }
}

trait FromToml: Sized {
    const EXPECTED: &'static str;
    fn from_toml(v: &Value) -> Option<Self>;
}

impl FromToml for f64 {
    const EXPECTED: &'static str = "a number";
    fn from_toml(v: &Value) -> Option<Self> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl FromToml for u64 {
    const EXPECTED: &'static str = "a nonnegative integer";
    fn from_toml(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| u64::try_from(i).ok())
    }
}

impl FromToml for usize {
    const EXPECTED: &'static str = "a nonnegative integer";
    fn from_toml(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| usize::try_from(i).ok())
    }
}

impl FromToml for bool {
    const EXPECTED: &'static str = "a boolean";
    fn from_toml(v: &Value) -> Option<Self> {
        v.as_bool()
    }
}

impl FromToml for String {
    const EXPECTED: &'static str = "a string";
    fn from_toml(v: &Value) -> Option<Self> {
        v.as_str().map(str::to_owned)
    }
}

impl<T: FromToml> FromToml for Vec<T> {
    const EXPECTED: &'static str = "an array";
    fn from_toml(v: &Value) -> Option<Self> {
        v.as_array()?.iter().map(T::from_toml).collect()
    }
}

struct Section<'a> {
    name: &'static str,
    table: &'a Table,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(name: &'static str, table: &'a Table) -> Self {
        Self { name, table, used: BTreeSet::new() }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn opt<T: FromToml>(&mut self, key: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<T> {
        self.used.insert(key);
        let v = self.table.get(key)?;
        let out = T::from_toml(v);
        if out.is_none() {
            errs.push(ConfigIssue { path: self.path(key), message: format!("expected {}, found {}", T::EXPECTED, v.type_str()) });
        }
        out
    }

    fn req<T: FromToml>(&mut self, key: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<T> {
        if !self.has(key) {
            self.used.insert(key);
            errs.push(ConfigIssue { path: self.path(key), message: "missing required key".into() });
            return None;
        }
        self.opt(key, errs)
    }

    fn or<T: FromToml>(&mut self, key: &'static str, default: T, errs: &mut Vec<ConfigIssue>) -> Option<T> {
        if self.has(key) {
            self.opt(key, errs)
        } else {
            self.used.insert(key);
            Some(default)
        }
    }

    fn forbid(&mut self, key: &'static str, why: &str, errs: &mut Vec<ConfigIssue>) {
        self.used.insert(key);
        if self.has(key) {
            errs.push(ConfigIssue { path: self.path(key), message: why.into() });
        }
    }

    fn finish(self, errs: &mut Vec<ConfigIssue>) {
        for k in self.table.keys() {
            if !self.used.contains(k.as_str()) {
                errs.push(ConfigIssue { path: self.path(k), message: "unknown key".into() });
            }
        }
    }
}

fn issue(path: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { path: path.into(), message: message.into() }
}

fn sub_table<'a>(root: &'a Table, name: &'static str, errs: &mut Vec<ConfigIssue>) -> Option<&'a Table> {
    match root.get(name) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(v) => {
            errs.push(issue(name, format!("expected a table, found {}", v.type_str())));
            None
        }
    }
}

fn parse_run(t: &Table, errs: &mut Vec<ConfigIssue>) -> Option<RunSection> {
    let mut s = Section::new("run", t);
    let kind = s.req::<String>("kind", errs).and_then(|k| {
        let parsed = ExperimentKind::parse(&k);
        if parsed.is_none() {
            errs.push(issue("run.kind", format!("unknown kind {k:?}; expected bandit, episodic, discounted or concentration")));
        }
        parsed
    });
    let horizon = s.req::<u64>("horizon", errs);
    let base_seed = s.or::<u64>("base_seed", 0, errs);
    let seeds = match t.get("seeds") {
        Some(Value::Array(_)) => s.opt::<Vec<u64>>("seeds", errs).map(Seeds::List),
        Some(_) => s.opt::<u64>("seeds", errs).map(Seeds::Count),
        None => {
            s.used.insert("seeds");
            Some(Seeds::Count(1))
        }
    };
    let out = s.opt::<String>("out", errs);
    s.finish(errs);
    Some(RunSection { kind: kind?, horizon: horizon?, base_seed: base_seed?, seeds: seeds?, out })
}

fn parse_setting(s: &mut Section<'_>, kind: Option<ExperimentKind>, errs: &mut Vec<ConfigIssue>) -> Option<Setting> {
    match kind {
        Some(ExperimentKind::Discounted) => {
            s.forbid("horizon", "not used by discounted environments (set gamma)", errs);
            s.req::<f64>("gamma", errs).map(|gamma| Setting::Discounted { gamma })
        }
        _ => {
            s.forbid("gamma", "only used by discounted environments", errs);
            s.req::<usize>("horizon", errs).map(|horizon| Setting::Episodic { horizon })
        }
    }
}

fn parse_schedule(s: &mut Section<'_>, errs: &mut Vec<ConfigIssue>) -> Option<SigmaSchedule> {
    let name = s.or::<String>("schedule", "constant".into(), errs)?;
    let unused = |s: &mut Section<'_>, keys: &[&'static str], errs: &mut Vec<ConfigIssue>| {
        for k in keys {
            s.forbid(k, &format!("not used by schedule {name:?}"), errs);
        }
    };
    match name.as_str() {
        "constant" => {
            unused(s, &["levels", "sigma_low", "sigma_high"], errs);
            s.req::<f64>("sigma", errs).map(SigmaSchedule::Constant)
        }
        "cyclic" => {
            unused(s, &["sigma", "sigma_low", "sigma_high"], errs);
            s.req::<Vec<f64>>("levels", errs).map(SigmaSchedule::Cyclic)
        }
        "state_dependent" => {
            unused(s, &["sigma", "levels"], errs);
            let low = s.req::<f64>("sigma_low", errs);
            let high = s.req::<f64>("sigma_high", errs);
            Some(SigmaSchedule::StateDependent { low: low?, high: high? })
        }
        other => {
            errs.push(issue("env.schedule", format!("unknown schedule {other:?}; expected constant, cyclic or state_dependent")));
            for k in ["sigma", "levels", "sigma_low", "sigma_high"] {
                s.used.insert(k);
            }
            None
        }
    }
}

fn parse_env(t: &Table, kind: Option<ExperimentKind>, errs: &mut Vec<ConfigIssue>) -> Option<EnvSpec> {
    let mut s = Section::new("env", t);
    let ty = s.req::<String>("type", errs)?;
    let spec = match ty.as_str() {
        "unit_sphere" => {
            let dim = s.req::<usize>("dim", errs);
            let actions = s.req::<usize>("actions", errs);
            let param_norm = s.or::<f64>("param_norm", 1.0, errs);
            let noise_bound = s.or::<f64>("noise_bound", 1.0, errs);
            let per_round = s.or::<bool>("per_round", false, errs);
            let env_seed = s.or::<u64>("env_seed", 0, errs);
            let schedule = parse_schedule(&mut s, errs);
            (|| {
                Some(EnvSpec::UnitSphere {
                    dim: dim?,
                    actions: actions?,
                    param_norm: param_norm?,
                    noise_bound: noise_bound?,
                    per_round: per_round?,
                    env_seed: env_seed?,
                    schedule: schedule?,
                })
            })()
        }
        "tabular" => {
            let states = s.req::<usize>("states", errs);
            let actions = s.req::<usize>("actions", errs);
            let setting = parse_setting(&mut s, kind, errs);
            let env_seed = s.or::<u64>("env_seed", 0, errs);
            (|| Some(EnvSpec::Tabular { states: states?, actions: actions?, setting: setting?, env_seed: env_seed? }))()
        }
        "chain" => {
            let states = s.req::<usize>("states", errs);
            let setting = parse_setting(&mut s, kind, errs);
            (|| Some(EnvSpec::Chain { states: states?, setting: setting? }))()
        }
        "hard" => {
            let dim = s.req::<usize>("dim", errs);
            let horizon = s.req::<usize>("horizon", errs);
            let param_bound = s.or::<f64>("param_bound", 2.0, errs);
            let delta = s.opt::<f64>("delta", errs);
            let env_seed = s.or::<u64>("env_seed", 0, errs);
            (|| Some(EnvSpec::Hard { dim: dim?, horizon: horizon?, param_bound: param_bound?, delta, env_seed: env_seed? }))()
        }
        "hard_discounted" => {
            let dim = s.req::<usize>("dim", errs);
            let gamma = s.req::<f64>("gamma", errs);
            let delta = s.req::<f64>("delta", errs);
            let gap = s.req::<f64>("gap", errs);
            let env_seed = s.or::<u64>("env_seed", 0, errs);
            (|| Some(EnvSpec::HardDiscounted { dim: dim?, gamma: gamma?, delta: delta?, gap: gap?, env_seed: env_seed? }))()
        }
        other => {
            errs.push(issue(
                "env.type",
                format!("unknown environment type {other:?}; expected unit_sphere, tabular, chain, hard or hard_discounted"),
            ));
            return None;
        }
    };
    s.finish(errs);
    spec
}

fn parse_agent(t: &Table, errs: &mut Vec<ConfigIssue>) -> Option<AgentSection> {
    let mut s = Section::new("agent", t);
    let algorithms = s.req::<Vec<String>>("algorithms", errs).map(|names| {
        names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| {
                let a = Algorithm::parse(n);
                if a.is_none() {
                    errs.push(issue(&format!("agent.algorithms[{i}]"), format!("unknown algorithm {n:?}")));
                }
                a
            })
            .collect::<Vec<_>>()
    });
    let lambda = s.opt::<f64>("lambda", errs);
    let delta = s.req::<f64>("delta", errs);
    let param_bound = s.opt::<f64>("param_bound", errs);
    let evi_rounds = s.opt::<usize>("evi_rounds", errs);
    s.finish(errs);
    Some(AgentSection { algorithms: algorithms?, lambda, delta: delta?, param_bound, evi_rounds })
}

fn parse_scenario(t: &Table, errs: &mut Vec<ConfigIssue>) -> Option<ScenarioSection> {
    let mut s = Section::new("scenario", t);
    let dim = s.req::<usize>("dim", errs);
    let contexts = s.or::<String>("contexts", "sphere".into(), errs).and_then(|c| match c.as_str() {
        "sphere" => Some(ContextSpec::Sphere),
        "adversarial" => Some(ContextSpec::Adversarial),
        "fixed" => None,
        other => {
            errs.push(issue("scenario.contexts", format!("unknown context family {other:?}; expected sphere, adversarial or fixed")));
            None
        }
    });
    let contexts = if t.get("contexts").and_then(Value::as_str) == Some("fixed") {
        s.req::<usize>("fixed_count", errs).map(|count| ContextSpec::Fixed { count })
    } else {
        s.forbid("fixed_count", "only used with contexts = \"fixed\"", errs);
        contexts
    };
    let context_bound = s.or::<f64>("context_bound", 1.0, errs);
    let noise_bound = s.or::<f64>("noise_bound", 1.0, errs);
    let sigma = s.req::<f64>("sigma", errs);
    let noise_scale = match (s.has("noise_scale"), sigma) {
        (true, _) => s.opt::<f64>("noise_scale", errs),
        (false, sig) => {
            s.used.insert("noise_scale");
            sig
        }
    };
    let lambda = s.or::<f64>("lambda", 1.0, errs);
    let delta = s.req::<f64>("delta", errs);
    let mu_norm = s.or::<f64>("mu_norm", 1.0, errs);
    let replicas = s.req::<usize>("replicas", errs);
    s.finish(errs);
    Some(ScenarioSection {
        dim: dim?,
        contexts: contexts?,
        context_bound: context_bound?,
        noise_bound: noise_bound?,
        sigma: sigma?,
        noise_scale: noise_scale?,
        lambda: lambda?,
        delta: delta?,
        mu_norm: mu_norm?,
        replicas: replicas?,
    })
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![issue("<document>", e.message())]))?;
    let mut errs = Vec::new();
    for k in root.keys() {
        if !matches!(k.as_str(), "run" | "env" | "agent" | "scenario") {
            errs.push(issue(k, "unknown section"));
        }
    }
    let run = match sub_table(&root, "run", &mut errs) {
        Some(t) => parse_run(t, &mut errs),
        None => {
            if !root.contains_key("run") {
                errs.push(issue("run", "missing required section"));
            }
            None
        }
    };
    let kind = run.as_ref().map(|r| r.kind);
    let env = sub_table(&root, "env", &mut errs).and_then(|t| parse_env(t, kind, &mut errs));
    let agent = sub_table(&root, "agent", &mut errs).and_then(|t| parse_agent(t, &mut errs));
    let scenario = sub_table(&root, "scenario", &mut errs).and_then(|t| parse_scenario(t, &mut errs));
    let Some(run) = run else { return Err(ConfigErrors(errs)) };
    let cfg = ExperimentConfig { run, env, agent, scenario };
    // Semantic issues too, except those caused by sections that failed to parse.
    let structural = errs.len();
    for i in validate(&cfg) {
        let broken_section = !i.path.contains('.')
            && errs[..structural].iter().any(|e| e.path.split('.').next() == Some(i.path.as_str()));
        if !broken_section && !errs[..structural].iter().any(|e| e.path == i.path) {
            errs.push(i);
        }
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errs))
    }
}

fn unit_interval_open(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

const TOML_INT_MAX: u64 = i64::MAX as u64;

/// Semantic checks; each issue names its key path.
pub fn validate(cfg: &ExperimentConfig) -> Vec<ConfigIssue> {
    let mut out = Vec::new();
    let mut bad = |path: &str, msg: String| out.push(issue(path, msg));
    let kind = cfg.run.kind;
    if cfg.run.horizon == 0 {
        bad("run.horizon", "must be at least 1".into());
    }
    if cfg.run.base_seed > TOML_INT_MAX {
        bad("run.base_seed", format!("must be at most {TOML_INT_MAX}"));
    }
    match &cfg.run.seeds {
        Seeds::Count(n) if *n > TOML_INT_MAX => bad("run.seeds", format!("must be at most {TOML_INT_MAX}")),
        Seeds::List(v) => {
            if let Some(i) = v.iter().position(|&s| s > TOML_INT_MAX) {
                bad(&format!("run.seeds[{i}]"), format!("must be at most {TOML_INT_MAX}"));
            }
            let uniq: BTreeSet<_> = v.iter().collect();
            if uniq.len() != v.len() {
                bad("run.seeds", "seeds must be distinct".into());
            }
        }
        _ => {}
    }

    let needs_env = kind != ExperimentKind::Concentration;
    match (&cfg.env, needs_env) {
        (None, true) => bad("env", format!("section required for kind = {:?}", kind.as_str())),
        (Some(_), false) => bad("env", "not used by kind = \"concentration\"".into()),
        _ => {}
    }
    match (&cfg.agent, needs_env) {
        (None, true) => bad("agent", format!("section required for kind = {:?}", kind.as_str())),
        (Some(_), false) => bad("agent", "not used by kind = \"concentration\"".into()),
        _ => {}
    }
    match (&cfg.scenario, needs_env) {
        (Some(_), true) => bad("scenario", "only used by kind = \"concentration\"".into()),
        (None, false) => bad("scenario", "section required for kind = \"concentration\"".into()),
        _ => {}
    }

    if let Some(env) = &cfg.env {
        let allowed = match env {
            EnvSpec::UnitSphere { .. } => kind == ExperimentKind::Bandit,
            EnvSpec::Tabular { .. } | EnvSpec::Chain { .. } => {
                matches!(kind, ExperimentKind::Episodic | ExperimentKind::Discounted)
            }
            EnvSpec::Hard { .. } => kind == ExperimentKind::Episodic,
            EnvSpec::HardDiscounted { .. } => kind == ExperimentKind::Discounted,
        };
        if !allowed {
            bad("env.type", format!("{:?} cannot be used with kind = {:?}", env.type_name(), kind.as_str()));
        }
        let check_setting = |setting: &Setting, bad: &mut dyn FnMut(&str, String)| match *setting {
            Setting::Episodic { horizon: 0 } => bad("env.horizon", "must be at least 1".into()),
            Setting::Discounted { gamma } if !(0.0..1.0).contains(&gamma) => {
                bad("env.gamma", format!("must lie in [0, 1), got {gamma}"))
            }
            _ => {}
        };
        match env {
            EnvSpec::UnitSphere { dim, actions, param_norm, noise_bound, env_seed, schedule, .. } => {
                if *dim == 0 {
                    bad("env.dim", "must be at least 1".into());
                }
                if *actions == 0 {
                    bad("env.actions", "must be at least 1".into());
                }
                if !(0.0..=1.0).contains(param_norm) {
                    bad("env.param_norm", format!("must lie in [0, 1], got {param_norm}"));
                }
                if !positive(*noise_bound) {
                    bad("env.noise_bound", format!("must be positive, got {noise_bound}"));
                }
                if *env_seed > TOML_INT_MAX {
                    bad("env.env_seed", format!("must be at most {TOML_INT_MAX}"));
                }
                let within = |x: f64| x >= 0.0 && x <= *noise_bound;
                match schedule {
                    SigmaSchedule::Constant(s) if !within(*s) => {
                        bad("env.sigma", format!("must lie in [0, noise_bound = {noise_bound}], got {s}"))
                    }
                    SigmaSchedule::Cyclic(levels) => {
                        if levels.is_empty() {
                            bad("env.levels", "must be nonempty".into());
                        }
                        for (i, l) in levels.iter().enumerate() {
                            if !within(*l) {
                                bad(&format!("env.levels[{i}]"), format!("must lie in [0, noise_bound = {noise_bound}], got {l}"));
                            }
                        }
                    }
                    SigmaSchedule::StateDependent { low, high } => {
                        if !within(*low) {
                            bad("env.sigma_low", format!("must lie in [0, noise_bound = {noise_bound}], got {low}"));
                        }
                        if !within(*high) {
                            bad("env.sigma_high", format!("must lie in [0, noise_bound = {noise_bound}], got {high}"));
                        }
                    }
                    _ => {}
                }
            }
            EnvSpec::Tabular { states, actions, setting, env_seed } => {
                if *states == 0 {
                    bad("env.states", "must be at least 1".into());
                }
                if *actions == 0 {
                    bad("env.actions", "must be at least 1".into());
                }
                if *env_seed > TOML_INT_MAX {
                    bad("env.env_seed", format!("must be at most {TOML_INT_MAX}"));
                }
                check_setting(setting, &mut bad);
            }
            EnvSpec::Chain { states, setting } => {
                if *states < 2 {
                    bad("env.states", "must be at least 2".into());
                }
                check_setting(setting, &mut bad);
            }
            EnvSpec::Hard { env_seed, .. } | EnvSpec::HardDiscounted { env_seed, .. } => {
                if *env_seed > TOML_INT_MAX {
                    bad("env.env_seed", format!("must be at most {TOML_INT_MAX}"));
                }
                if let Err(e) = super::build_mixture(env, cfg.run.horizon) {
                    bad("env", e.to_string());
                }
            }
        }
    }

    if let Some(agent) = &cfg.agent {
        if agent.algorithms.is_empty() {
            bad("agent.algorithms", "must name at least one algorithm".into());
        }
        for (i, a) in agent.algorithms.iter().enumerate() {
            if !a.supports(kind) {
                bad(&format!("agent.algorithms[{i}]"), format!("{:?} does not apply to kind = {:?}", a.as_str(), kind.as_str()));
            }
            if agent.algorithms[..i].contains(a) {
                bad(&format!("agent.algorithms[{i}]"), format!("{:?} listed twice", a.as_str()));
            }
        }
        if !unit_interval_open(agent.delta) {
            bad("agent.delta", format!("must lie in (0, 1), got {}", agent.delta));
        }
        if let Some(l) = agent.lambda {
            if !positive(l) {
                bad("agent.lambda", format!("must be positive, got {l}"));
            }
        }
        if let Some(b) = agent.param_bound {
            if !positive(b) {
                bad("agent.param_bound", format!("must be positive, got {b}"));
            }
        }
        match agent.evi_rounds {
            Some(_) if kind != ExperimentKind::Discounted => {
                bad("agent.evi_rounds", "only used by kind = \"discounted\"".into())
            }
            Some(0) => bad("agent.evi_rounds", "must be at least 1".into()),
            _ => {}
        }
    }

    if let Some(sc) = &cfg.scenario {
        if sc.dim == 0 {
            bad("scenario.dim", "must be at least 1".into());
        }
        if sc.replicas < crate::concentration::MIN_REPLICAS {
            bad("scenario.replicas", format!("must be at least {}, got {}", crate::concentration::MIN_REPLICAS, sc.replicas));
        }
        if let ContextSpec::Fixed { count: 0 } = sc.contexts {
            bad("scenario.fixed_count", "must be at least 1".into());
        }
        if !positive(sc.context_bound) {
            bad("scenario.context_bound", format!("must be positive, got {}", sc.context_bound));
        }
        if !positive(sc.noise_bound) {
            bad("scenario.noise_bound", format!("must be positive, got {}", sc.noise_bound));
        }
        if !(sc.sigma >= 0.0 && sc.sigma <= sc.noise_bound) {
            bad("scenario.sigma", format!("must lie in [0, noise_bound = {}], got {}", sc.noise_bound, sc.sigma));
        }
        if !(sc.noise_scale >= 0.0 && sc.noise_scale <= sc.sigma) {
            bad("scenario.noise_scale", format!("must lie in [0, sigma = {}], got {}", sc.sigma, sc.noise_scale));
        }
        if !positive(sc.lambda) {
            bad("scenario.lambda", format!("must be positive, got {}", sc.lambda));
        }
        if !unit_interval_open(sc.delta) {
            bad("scenario.delta", format!("must lie in (0, 1), got {}", sc.delta));
        }
        if !(sc.mu_norm >= 0.0 && sc.mu_norm.is_finite()) {
            bad("scenario.mu_norm", format!("must be nonnegative, got {}", sc.mu_norm));
        }
    }
    out
}

fn int(x: u64) -> Value {
    Value::Integer(x as i64)
}

fn setting_into(t: &mut Table, setting: &Setting) {
    match *setting {
        Setting::Episodic { horizon } => t.insert("horizon".into(), int(horizon as u64)),
        Setting::Discounted { gamma } => t.insert("gamma".into(), Value::Float(gamma)),
    };
}

/// Canonical TOML form: sections and keys in sorted order, defaults written out.
pub fn to_toml(cfg: &ExperimentConfig) -> String {
    let mut root = Table::new();
    let mut run = Table::new();
    run.insert("kind".into(), Value::String(cfg.run.kind.as_str().into()));
    run.insert("horizon".into(), int(cfg.run.horizon));
    run.insert("base_seed".into(), int(cfg.run.base_seed));
    run.insert(
        "seeds".into(),
        match &cfg.run.seeds {
            Seeds::Count(n) => int(*n),
            Seeds::List(v) => Value::Array(v.iter().map(|&s| int(s)).collect()),
        },
    );
    if let Some(out) = &cfg.run.out {
        run.insert("out".into(), Value::String(out.clone()));
    }
    root.insert("run".into(), Value::Table(run));

    if let Some(env) = &cfg.env {
        let mut t = Table::new();
        t.insert("type".into(), Value::String(env.type_name().into()));
        match env {
            EnvSpec::UnitSphere { dim, actions, param_norm, noise_bound, per_round, env_seed, schedule } => {
                t.insert("dim".into(), int(*dim as u64));
                t.insert("actions".into(), int(*actions as u64));
                t.insert("param_norm".into(), Value::Float(*param_norm));
                t.insert("noise_bound".into(), Value::Float(*noise_bound));
                t.insert("per_round".into(), Value::Boolean(*per_round));
                t.insert("env_seed".into(), int(*env_seed));
                match schedule {
                    SigmaSchedule::Constant(s) => {
                        t.insert("schedule".into(), Value::String("constant".into()));
                        t.insert("sigma".into(), Value::Float(*s));
                    }
                    SigmaSchedule::Cyclic(levels) => {
                        t.insert("schedule".into(), Value::String("cyclic".into()));
                        t.insert("levels".into(), Value::Array(levels.iter().map(|&l| Value::Float(l)).collect()));
                    }
                    SigmaSchedule::StateDependent { low, high } => {
                        t.insert("schedule".into(), Value::String("state_dependent".into()));
                        t.insert("sigma_low".into(), Value::Float(*low));
                        t.insert("sigma_high".into(), Value::Float(*high));
                    }
                }
            }
            EnvSpec::Tabular { states, actions, setting, env_seed } => {
                t.insert("states".into(), int(*states as u64));
                t.insert("actions".into(), int(*actions as u64));
                t.insert("env_seed".into(), int(*env_seed));
                setting_into(&mut t, setting);
            }
            EnvSpec::Chain { states, setting } => {
                t.insert("states".into(), int(*states as u64));
                setting_into(&mut t, setting);
            }
            EnvSpec::Hard { dim, horizon, param_bound, delta, env_seed } => {
                t.insert("dim".into(), int(*dim as u64));
                t.insert("horizon".into(), int(*horizon as u64));
                t.insert("param_bound".into(), Value::Float(*param_bound));
                if let Some(d) = delta {
                    t.insert("delta".into(), Value::Float(*d));
                }
                t.insert("env_seed".into(), int(*env_seed));
            }
            EnvSpec::HardDiscounted { dim, gamma, delta, gap, env_seed } => {
                t.insert("dim".into(), int(*dim as u64));
                t.insert("gamma".into(), Value::Float(*gamma));
                t.insert("delta".into(), Value::Float(*delta));
                t.insert("gap".into(), Value::Float(*gap));
                t.insert("env_seed".into(), int(*env_seed));
            }
        }
        root.insert("env".into(), Value::Table(t));
    }

    if let Some(agent) = &cfg.agent {
        let mut t = Table::new();
        t.insert(
            "algorithms".into(),
            Value::Array(agent.algorithms.iter().map(|a| Value::String(a.as_str().into())).collect()),
        );
        t.insert("delta".into(), Value::Float(agent.delta));
        if let Some(l) = agent.lambda {
            t.insert("lambda".into(), Value::Float(l));
        }
        if let Some(b) = agent.param_bound {
            t.insert("param_bound".into(), Value::Float(b));
        }
        if let Some(u) = agent.evi_rounds {
            t.insert("evi_rounds".into(), int(u as u64));
        }
        root.insert("agent".into(), Value::Table(t));
    }

    if let Some(sc) = &cfg.scenario {
        let mut t = Table::new();
        t.insert("dim".into(), int(sc.dim as u64));
        match sc.contexts {
            ContextSpec::Sphere => t.insert("contexts".into(), Value::String("sphere".into())),
            ContextSpec::Adversarial => t.insert("contexts".into(), Value::String("adversarial".into())),
            ContextSpec::Fixed { count } => {
                t.insert("fixed_count".into(), int(count as u64));
                t.insert("contexts".into(), Value::String("fixed".into()))
            }
        };
        t.insert("context_bound".into(), Value::Float(sc.context_bound));
        t.insert("noise_bound".into(), Value::Float(sc.noise_bound));
        t.insert("sigma".into(), Value::Float(sc.sigma));
        t.insert("noise_scale".into(), Value::Float(sc.noise_scale));
        t.insert("lambda".into(), Value::Float(sc.lambda));
        t.insert("delta".into(), Value::Float(sc.delta));
        t.insert("mu_norm".into(), Value::Float(sc.mu_norm));
        t.insert("replicas".into(), int(sc.replicas as u64));
        root.insert("scenario".into(), Value::Table(t));
    }
    toml::to_string(&root).expect("tables of plain values always serialize")
}

/// Hex SHA-256 of the canonical serialization.
pub fn fingerprint(cfg: &ExperimentConfig) -> String {
    Sha256::digest(to_toml(cfg).as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    /// Settings used by the acceptance suite for each experiment kind.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let run = |horizon, seeds| RunSection { kind, horizon, base_seed: 0, seeds: Seeds::Count(seeds), out: None };
        match kind {
            ExperimentKind::Bandit => Self {
                run: run(5000, 20),
                env: Some(EnvSpec::UnitSphere {
                    dim: 8,
                    actions: 20,
                    param_norm: 1.0,
                    noise_bound: 1.0,
                    per_round: false,
                    env_seed: 0,
                    schedule: SigmaSchedule::Constant(0.05),
                }),
                agent: Some(AgentSection {
                    algorithms: vec![Algorithm::WeightedOful, Algorithm::Oful],
                    lambda: Some(1.0),
                    delta: 0.1,
                    param_bound: Some(1.0),
                    evi_rounds: None,
                }),
                scenario: None,
            },
            ExperimentKind::Episodic => Self {
                run: run(500, 40),
                env: Some(EnvSpec::Tabular { states: 5, actions: 3, setting: Setting::Episodic { horizon: 4 }, env_seed: 0 }),
                agent: Some(AgentSection {
                    algorithms: vec![Algorithm::UcrlVtrPlus, Algorithm::UcrlVtr],
                    lambda: None,
                    delta: 0.05,
                    param_bound: None,
                    evi_rounds: None,
                }),
                scenario: None,
            },
            ExperimentKind::Discounted => Self {
                run: run(20_000, 5),
                env: Some(EnvSpec::Tabular { states: 5, actions: 3, setting: Setting::Discounted { gamma: 0.9 }, env_seed: 0 }),
                agent: Some(AgentSection {
                    algorithms: vec![Algorithm::UclkPlus],
                    lambda: None,
                    delta: 0.05,
                    param_bound: None,
                    evi_rounds: None,
                }),
                scenario: None,
            },
            ExperimentKind::Concentration => Self {
                run: run(1000, 0),
                env: None,
                agent: None,
                scenario: Some(ScenarioSection {
                    dim: 4,
                    contexts: ContextSpec::Sphere,
                    context_bound: 1.0,
                    noise_bound: 1.0,
                    sigma: 1.0,
                    noise_scale: 1.0,
                    lambda: 1.0,
                    delta: 0.1,
                    mu_norm: 1.0,
                    replicas: 2000,
                }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_BANDIT: &str = r#"
[run]
kind = "bandit"
horizon = 100

[env]
type = "unit_sphere"
dim = 4
actions = 10
sigma = 0.1

[agent]
algorithms = ["weighted_oful"]
delta = 0.1
"#;

    #[test]
    fn minimal_bandit_parses() {
        let cfg = parse_config(MINIMAL_BANDIT).unwrap();
        assert_eq!(cfg.run.kind, ExperimentKind::Bandit);
        assert_eq!(cfg.run.seeds, Seeds::Count(1));
        assert!(matches!(cfg.env, Some(EnvSpec::UnitSphere { dim: 4, schedule: SigmaSchedule::Constant(s), .. }) if s == 0.1));
    }

    #[test]
    fn delta_out_of_range_names_the_field() {
        let text = MINIMAL_BANDIT.replace("delta = 0.1", "delta = 1.5");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.paths(), vec!["agent.delta"]);
        assert!(err.0[0].message.contains("(0, 1)"));
    }

    #[test]
    fn reports_every_error() {
        let text = r#"
[run]
kind = "bandit"
horizon = "long"
colour = 3

[env]
type = "unit_sphere"
dim = -1
actions = 10

[agent]
algorithms = ["weighted_oful", "uclk"]
delta = 0.1

[extra]
"#;
        let err = parse_config(text).unwrap_err();
        let paths = err.paths();
        for want in ["extra", "run.horizon", "run.colour", "env.dim", "env.sigma", "agent.algorithms[1]"] {
            assert!(paths.contains(&want), "missing {want} in {paths:?}");
        }
    }

    #[test]
    fn semantic_errors_are_all_reported() {
        let text = MINIMAL_BANDIT
            .replace("delta = 0.1", "delta = 0.0\nlambda = -1.0")
            .replace("sigma = 0.1", "sigma = 2.0")
            .replace("horizon = 100", "horizon = 0");
        let err = parse_config(&text).unwrap_err();
        let mut paths = err.paths();
        paths.sort();
        assert_eq!(paths, vec!["agent.delta", "agent.lambda", "env.sigma", "run.horizon"]);
    }

    #[test]
    fn kind_mismatch_rejected() {
        let text = MINIMAL_BANDIT.replace("\"weighted_oful\"", "\"uclk_plus\"");
        assert_eq!(parse_config(&text).unwrap_err().paths(), vec!["agent.algorithms[0]"]);
    }

    #[test]
    fn hard_instance_constraint_surfaces() {
        let text = r#"
[run]
kind = "episodic"
horizon = 10

[env]
type = "hard"
dim = 4
horizon = 6

[agent]
algorithms = ["ucrl_vtr_plus"]
delta = 0.1
"#;
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.paths(), vec!["env"]);
        assert!(err.0[0].message.contains("K ≥"), "{}", err.0[0].message);
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::default_for(kind);
            assert!(validate(&cfg).is_empty(), "{kind:?}: {:?}", validate(&cfg));
            let text = to_toml(&cfg);
            assert_eq!(parse_config(&text).unwrap(), cfg);
            assert_eq!(fingerprint(&cfg).len(), 64);
        }
        let a = fingerprint(&ExperimentConfig::default_for(ExperimentKind::Bandit));
        let b = fingerprint(&ExperimentConfig::default_for(ExperimentKind::Episodic));
        assert_ne!(a, b);
    }
}
