//! Flat `key = value` configuration with `[section]` headers. Repeating a
//! key builds a list; `#` starts a comment.
//!
//! ```text
//! [problem]
//! kind = quadratic_mean
//! d = 8
//!
//! [algorithm]
//! name = alg3
//! n = 1024
//! m = 16
//!
//! [sweep]
//! algorithm.n = 512
//! algorithm.n = 2048
//! ```

use std::fmt;
use std::str::FromStr;

use userdp_core::algorithms::{Alg1Options, Alg3Options};
use userdp_core::problems::{ProblemKind, ProblemSpec};
use userdp_core::{ConstantMode, PrivacyParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line, 0 when the error has no source line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "config error at line {}: {}", self.line, self.message)
        } else {
            write!(f, "config error: {}", self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    pub fn qualified(&self) -> String {
        format!("{}.{}", self.section, self.key)
    }
}

/// Split the text into entries; no key is interpreted yet.
pub fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = None;
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("unterminated section header '{s}'")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{s}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(err(line, "empty key or value"));
        }
        let section = section
            .clone()
            .ok_or_else(|| err(line, format!("key '{key}' appears before any section header")))?;
        out.push(Entry {
            section,
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(out)
}

const SECTIONS: [&str; 7] = ["problem", "algorithm", "privacy", "schedule", "run", "sweep", "audit"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Alg1,
    Alg3,
    Alg3Nonsmooth,
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alg1" => Ok(Self::Alg1),
            "alg3" => Ok(Self::Alg3),
            "alg3_nonsmooth" => Ok(Self::Alg3Nonsmooth),
            other => Err(format!("unknown algorithm '{other}' (expected alg1, alg3 or alg3_nonsmooth)")),
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Alg1 => "alg1",
            Self::Alg3 => "alg3",
            Self::Alg3Nonsmooth => "alg3_nonsmooth",
        })
    }
}

/// Parameters of the audit command; each audit reads the fields it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditSettings {
    pub trials: Option<usize>,
    pub controls: Option<usize>,
    pub tau_scale: f64,
    pub phase: usize,
    pub stepsize: Option<f64>,
    pub steps: Vec<usize>,
    pub zeta: Option<f64>,
    pub users: Option<usize>,
    pub batch: Option<usize>,
    pub items: Option<usize>,
    pub samples: Option<usize>,
    pub streams: Option<usize>,
    pub queries: Option<usize>,
    pub gamma: Option<f64>,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            trials: None,
            controls: None,
            tau_scale: 1.0,
            phase: 1,
            stepsize: None,
            steps: Vec::new(),
            zeta: None,
            users: None,
            batch: None,
            items: None,
            samples: None,
            streams: None,
            queries: None,
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmKind,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    pub mode: ConstantMode,
    pub alg1: Alg1Options,
    pub alg3: Alg3Options,
    /// Gradient samples per smoothed gradient.
    pub k: usize,
    /// Explicit seed list; empty means `base_seed..base_seed + seed_count`.
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub seed_count: usize,
    /// Output CSV file name inside the output directory.
    pub output: Option<String>,
    pub audit: AuditSettings,
    /// Sweep axes in file order: qualified key and its values.
    pub sweep: Vec<(String, Vec<Entry>)>,
    /// Verbatim source, embedded in output headers.
    pub source: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::new(ProblemKind::QuadraticMean, 8),
            algorithm: AlgorithmKind::Alg1,
            n: 2048,
            m: 16,
            epsilon: 1.0,
            delta: 1e-5,
            kappa: 1.0,
            mode: ConstantMode::Practical,
            alg1: Alg1Options::default(),
            alg3: Alg3Options::default(),
            k: 1,
            seeds: Vec::new(),
            base_seed: 0,
            seed_count: 1,
            output: None,
            audit: AuditSettings::default(),
            sweep: Vec::new(),
            source: String::new(),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse '{value}' as a number for {key}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self {
            source: text.to_string(),
            ..Self::default()
        };
        let mut explicit_steps = false;
        for e in tokenize(text)? {
            match e.section.as_str() {
                "sweep" => {
                    let key = e.key.clone();
                    if key.starts_with("sweep.") || key.starts_with("run.") || !key.contains('.') {
                        return Err(err(e.line, format!("sweep key '{key}' must name a scalar field as section.key")));
                    }
                    // validate the field and the value on a scratch copy
                    cfg.clone().set(&key, &e.value).map_err(|m| err(e.line, m))?;
                    match cfg.sweep.iter_mut().find(|(k, _)| *k == key) {
                        Some((_, v)) => v.push(e),
                        None => cfg.sweep.push((key, vec![e])),
                    }
                }
                _ => {
                    let key = e.qualified();
                    if key == "run.seed" {
                        cfg.seeds.push(num(&key, &e.value).map_err(|m| err(e.line, m))?);
                    } else if key == "audit.steps" {
                        if !explicit_steps {
                            cfg.audit.steps.clear();
                            explicit_steps = true;
                        }
                        cfg.set(&key, &e.value).map_err(|m| err(e.line, m))?;
                    } else {
                        cfg.set(&key, &e.value).map_err(|m| err(e.line, m))?;
                    }
                }
            }
        }
        cfg.check().map_err(|m| err(0, m))?;
        Ok(cfg)
    }

    /// Assign one scalar field by qualified name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value;
        let p = &mut self.problem;
        let a = &mut self.audit;
        match key {
            "problem.kind" => p.kind = v.parse().map_err(|e: userdp_core::Error| e.to_string())?,
            "problem.d" => p.dim = num(key, v)?,
            "problem.diameter" => p.diameter = num(key, v)?,
            "problem.mean_norm" => p.mean_norm = num(key, v)?,
            "problem.scale" => p.scale = num(key, v)?,
            "problem.truncation" => p.truncation = num(key, v)?,
            "problem.margin" => p.margin = num(key, v)?,
            "problem.oracle_samples" => p.oracle_samples = num(key, v)?,
            "problem.oracle_seed" => p.oracle_seed = num(key, v)?,
            "algorithm.name" => self.algorithm = v.parse()?,
            "algorithm.n" => self.n = num(key, v)?,
            "algorithm.m" => self.m = num(key, v)?,
            "privacy.epsilon" => self.epsilon = num(key, v)?,
            "privacy.delta" => self.delta = num(key, v)?,
            "privacy.kappa" => self.kappa = num(key, v)?,
            "privacy.mode" => self.mode = v.parse().map_err(|e: userdp_core::Error| e.to_string())?,
            "schedule.p" => {
                let x = num(key, v)?;
                self.alg1.p = Some(x);
                self.alg3.p = Some(x);
            }
            "schedule.q" => {
                let x = num(key, v)?;
                self.alg1.q = Some(x);
                self.alg3.q = Some(x);
            }
            "schedule.eta" => self.alg1.eta = Some(num(key, v)?),
            "schedule.lambda" => self.alg3.lambda = Some(num(key, v)?),
            "schedule.c_tau" => self.alg3.c_tau = Some(num(key, v)?),
            "schedule.c_t" => self.alg3.c_t = Some(num(key, v)?),
            "schedule.k" => self.k = num(key, v)?,
            "run.seed" => self.seeds = vec![num(key, v)?],
            "run.base_seed" => self.base_seed = num(key, v)?,
            "run.seed_count" => self.seed_count = num(key, v)?,
            "run.output" => self.output = Some(v.to_string()),
            "audit.trials" => a.trials = Some(num(key, v)?),
            "audit.controls" => a.controls = Some(num(key, v)?),
            "audit.tau_scale" => a.tau_scale = num(key, v)?,
            "audit.phase" => a.phase = num(key, v)?,
            "audit.stepsize" => a.stepsize = Some(num(key, v)?),
            "audit.steps" => {
                for part in v.split(',') {
                    a.steps.push(num(key, part.trim())?);
                }
            }
            "audit.zeta" => a.zeta = Some(num(key, v)?),
            "audit.users" => a.users = Some(num(key, v)?),
            "audit.batch" => a.batch = Some(num(key, v)?),
            "audit.items" => a.items = Some(num(key, v)?),
            "audit.samples" => a.samples = Some(num(key, v)?),
            "audit.streams" => a.streams = Some(num(key, v)?),
            "audit.queries" => a.queries = Some(num(key, v)?),
            "audit.gamma" => a.gamma = Some(num(key, v)?),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Checks that need the whole configuration.
    pub fn check(&self) -> Result<(), String> {
        if self.problem.dim == 0 {
            return Err("problem.d must be positive".into());
        }
        if self.n < 2 || self.m == 0 {
            return Err(format!("need n >= 2 and m >= 1, got n={} m={}", self.n, self.m));
        }
        if self.k == 0 {
            return Err("schedule.k must be positive".into());
        }
        if self.seeds.is_empty() && self.seed_count == 0 {
            return Err("run.seed_count must be positive".into());
        }
        self.privacy().map(|_| ()).map_err(|e| e.to_string())
    }

    pub fn privacy(&self) -> userdp_core::Result<PrivacyParams> {
        PrivacyParams::new(self.epsilon, self.delta, self.kappa, self.mode)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.seed_count as u64).map(|s| self.base_seed + s).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Replace the master seed: the run keeps its number of seeds but
    /// starts from `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        let count = self.seed_list().len();
        self.seeds.clear();
        self.base_seed = seed;
        self.seed_count = count;
    }

    /// Cross product of the sweep axes, first axis slowest. A config
    /// without sweep axes yields the single base point.
    pub fn sweep_points(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        let mut points = vec![self.clone()];
        for (key, values) in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for e in values {
                    let mut q = p.clone();
                    q.set(key, &e.value).map_err(|m| err(e.line, m))?;
                    q.check().map_err(|m| err(e.line, m))?;
                    next.push(q);
                }
            }
            points = next;
        }
        for p in &mut points {
            p.sweep.clear();
        }
        Ok(points)
    }

    /// `key=value` with an unqualified key addressing the audit section.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| err(0, format!("override '{assignment}' is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        let key = if k.contains('.') { k.to_string() } else { format!("audit.{k}") };
        if key == "audit.steps" {
            self.audit.steps.clear();
        }
        self.set(&key, v).map_err(|m| err(0, format!("override {assignment}: {m}")))?;
        self.check().map_err(|m| err(0, m))
    }
}
