use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;

use userdp_core::algorithms::{nonsmooth_setup, schedule_alg1, schedule_alg3, ProblemSize};
use userdp_core::audit::{
    gradient_sensitivity_experiment, mechanisms_experiment, sensitivity_experiment, stability_experiment,
    variance_experiment, AuditReport, MechanismsConfig, SensitivityConfig, StabilityConfig, VarianceConfig,
};
use userdp_core::problems::{ItemOf, Problem, ProblemKind};
use userdp_core::Loss;

use crate::config::{AlgorithmKind, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditName {
    Stability,
    Sensitivity,
    Variance,
    Mechanisms,
}

impl AuditName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stability => "stability",
            Self::Sensitivity => "sensitivity",
            Self::Variance => "variance",
            Self::Mechanisms => "mechanisms",
        }
    }
}

fn size_of<P: Problem>(p: &P, n: usize, m: usize) -> ProblemSize {
    ProblemSize {
        n,
        m,
        d: p.domain().dim(),
        lipschitz: p.loss().lipschitz(),
        diameter: p.domain().diameter(),
        smoothness: p.loss().smoothness().beta(),
    }
}

fn run_problem_audit<P: Problem>(p: &P, name: AuditName, cfg: &ExperimentConfig, seed: u64) -> Result<AuditReport>
where
    P::Loss: Clone,
    ItemOf<P>: Send + Clone,
{
    let a = &cfg.audit;
    Ok(match name {
        AuditName::Stability => {
            let mut c = StabilityConfig {
                seed,
                ..Default::default()
            };
            c.stepsize = a.stepsize.unwrap_or(c.stepsize);
            c.trials = a.trials.unwrap_or(c.trials);
            c.zeta = a.zeta.unwrap_or(c.zeta);
            if !a.steps.is_empty() {
                c.steps = a.steps.clone();
            }
            stability_experiment(p, &c)?
        }
        AuditName::Sensitivity => {
            let mut c = SensitivityConfig {
                seed,
                tau_scale: a.tau_scale,
                phase: a.phase,
                ..Default::default()
            };
            c.trials = a.trials.unwrap_or(c.trials);
            c.controls = a.controls.unwrap_or(c.controls);
            let privacy = cfg.privacy()?;
            let size = size_of(p, cfg.n, cfg.m);
            match cfg.algorithm {
                AlgorithmKind::Alg1 => sensitivity_experiment(p, &schedule_alg1(size, privacy, cfg.alg1)?, &c)?,
                AlgorithmKind::Alg3 => gradient_sensitivity_experiment(p, &schedule_alg3(size, privacy, cfg.alg3)?, &c)?,
                AlgorithmKind::Alg3Nonsmooth => {
                    let (_, s) = nonsmooth_setup(p.loss().clone(), p.domain(), cfg.n, cfg.m, privacy, cfg.alg3, cfg.k)?;
                    gradient_sensitivity_experiment(p, &s, &c)?
                }
            }
        }
        AuditName::Variance => {
            let mut c = VarianceConfig {
                seed,
                ..Default::default()
            };
            c.users = a.users.unwrap_or(c.users);
            c.batch = a.batch.unwrap_or(c.batch);
            c.items = a.items.unwrap_or(c.items);
            c.trials = a.trials.unwrap_or(c.trials);
            variance_experiment(p, &c)?
        }
        AuditName::Mechanisms => unreachable!("mechanisms audit needs no problem"),
    })
}

pub fn run_audit(name: AuditName, cfg: &ExperimentConfig, seed: u64) -> Result<AuditReport> {
    if name == AuditName::Mechanisms {
        let a = &cfg.audit;
        let mut c = MechanismsConfig {
            seed,
            epsilon: cfg.epsilon,
            ..Default::default()
        };
        c.samples = a.samples.unwrap_or(c.samples);
        c.streams = a.streams.unwrap_or(c.streams);
        c.queries = a.queries.unwrap_or(c.queries);
        c.gamma = a.gamma.unwrap_or(c.gamma);
        return Ok(mechanisms_experiment(&c)?);
    }
    let setup = &cfg.problem;
    match setup.kind {
        ProblemKind::QuadraticMean => run_problem_audit(&setup.quadratic()?, name, cfg, seed),
        ProblemKind::GeometricMedian => run_problem_audit(&setup.geometric_median()?, name, cfg, seed),
        ProblemKind::Logistic => run_problem_audit(&setup.logistic()?, name, cfg, seed),
    }
}

/// Run the audit and write `audit_<name>.csv` with the configuration and
/// overrides in its header and the summary as a trailing comment.
pub fn cmd_audit(
    name: AuditName,
    cfg: &ExperimentConfig,
    seed: u64,
    overrides: &[String],
    out_dir: &Path,
) -> Result<AuditReport> {
    let report = run_audit(name, cfg, seed)?;
    let mut text = String::new();
    writeln!(text, "# userdp-audit v1").unwrap();
    writeln!(text, "# audit = {}", name.as_str()).unwrap();
    writeln!(text, "# seed = {seed}").unwrap();
    writeln!(text, "# mode = {}", cfg.mode).unwrap();
    for o in overrides {
        writeln!(text, "# override {o}").unwrap();
    }
    writeln!(text, "# config-begin").unwrap();
    for line in cfg.source.lines() {
        writeln!(text, "# {line}").unwrap();
    }
    writeln!(text, "# config-end").unwrap();
    text.push_str(&report.to_csv());
    writeln!(text, "# bound: {}", report.bound_formula).unwrap();
    writeln!(text, "# summary: {}", report.summary_line()).unwrap();

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv = out_dir.join(format!("audit_{}.csv", name.as_str()));
    fs::write(&csv, text).with_context(|| format!("writing {}", csv.display()))?;
    println!("{}", report.summary_line());
    println!("bound: {}", report.bound_formula);
    println!("wrote {}", csv.display());
    Ok(report)
}
