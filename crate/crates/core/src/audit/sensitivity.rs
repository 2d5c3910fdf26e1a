use rand::Rng;
use rayon::prelude::*;

use crate::algorithms::{
    alg1_phase, filtered_gradient_mean, Alg1PhaseParams, NoiseSwitches, PhaseScheduleAlg1, PhaseScheduleAlg3,
};
use crate::audit::{quantile, AuditReport, Check, Measurement};
use crate::data::UserDataset;
use crate::error::{invalid, Result};
use crate::linalg;
use crate::loss::GradCounter;
use crate::mechanisms::{NoiseSource, NoisyThreshold, ScoreGate, Verdict};
use crate::problems::{generate_dataset, generate_user, ItemOf, Problem};
use crate::rng::{purpose, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityConfig {
    /// 1-based phase whose parameters are audited.
    pub phase: usize,
    pub trials: usize,
    /// Trials with identical datasets, which must measure exactly zero.
    pub controls: usize,
    /// Multiplier applied to the schedule's `tau`, for deliberate
    /// mis-scaling.
    pub tau_scale: f64,
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            phase: 1,
            trials: 500,
            controls: 20,
            tau_scale: 1.0,
            seed: 1,
        }
    }
}

const REQUIRED_FRACTION: f64 = 0.99;

/// Dataset of `users` users and its neighbour with one user replaced by a
/// fresh draw; `None` as neighbour for control trials.
fn neighbours<P: Problem>(
    problem: &P,
    users: usize,
    m: usize,
    stream: &RngStream,
    control: bool,
) -> Result<(UserDataset<ItemOf<P>>, UserDataset<ItemOf<P>>)>
where
    ItemOf<P>: Send + Clone,
{
    let data = generate_dataset(problem, users, m, stream.child(purpose::DATA).rng_seed())?;
    let mut other = data.clone();
    if !control {
        let u = stream.child(purpose::TRIAL).rng().gen_range(0..users);
        other.replace_user(u, generate_user(problem, m, &stream.descend(&[purpose::DATA, 1])))?;
    }
    Ok((data, other))
}

fn finish(
    name: &str,
    trials: usize,
    values: Vec<f64>,
    controls: Vec<f64>,
    bound: f64,
    formula: String,
) -> AuditReport {
    let within = values.iter().filter(|&&v| v <= bound).count() as f64 / values.len().max(1) as f64;
    let control_max = controls.iter().copied().fold(0.0, f64::max);
    let checks = vec![
        Check {
            name: "fraction_within_bound".into(),
            value: within,
            bound: format!(">= {REQUIRED_FRACTION}"),
            passed: within >= REQUIRED_FRACTION,
        },
        Check {
            name: "control_max".into(),
            value: control_max,
            bound: "== 0".into(),
            passed: controls.iter().all(|&v| v == 0.0),
        },
    ];
    let mut measurements: Vec<Measurement> = values
        .into_iter()
        .enumerate()
        .map(|(trial, value)| Measurement {
            group: "neighbour".into(),
            trial,
            value,
        })
        .collect();
    measurements.extend(controls.into_iter().enumerate().map(|(trial, value)| Measurement {
        group: "control".into(),
        trial,
        value,
    }));
    AuditReport {
        name: name.into(),
        trials,
        measurements,
        checks,
        bound_formula: formula,
    }
}

/// Coupled neighbouring runs of one phase of phased SGD. Both runs share
/// every random stream (SGD order, score noise, inclusion uniforms); output
/// perturbation is not applied. Records the distance between the inlier
/// means, or infinity if either run halts or keeps nothing.
pub fn sensitivity_experiment<P: Problem>(
    problem: &P,
    schedule: &PhaseScheduleAlg1,
    cfg: &SensitivityConfig,
) -> Result<AuditReport>
where
    ItemOf<P>: Send + Clone,
{
    let ph = schedule
        .phases
        .get(cfg.phase.wrapping_sub(1))
        .ok_or_else(|| invalid(format!("schedule has no phase {}", cfg.phase)))?;
    if cfg.trials == 0 {
        return Err(invalid("sensitivity audit needs trials"));
    }
    let c = schedule.groups;
    let m = schedule.size.m;
    let tau = ph.tau * cfg.tau_scale;
    let params = Alg1PhaseParams {
        stepsize: ph.stepsize,
        tau,
        gate: ScoreGate {
            threshold: schedule.score_threshold(),
            noise_scale: schedule.score_noise_scale(),
        },
    };
    let domain = problem.domain();
    let root = RngStream::new(cfg.seed).child(purpose::TRIAL);

    let trial = |t: usize, control: bool| -> Result<f64> {
        let stream = root.descend(&[control as u64, t as u64]);
        let (a, b) = neighbours(problem, c * ph.group_users, m, &stream, control)?;
        let sizes = vec![ph.group_users; c];
        let phase_stream = stream.child(purpose::PHASE);
        let counter = GradCounter::new();
        let run = |data: &UserDataset<ItemOf<P>>| {
            let groups = data.full_view().chunks(&sizes)?;
            alg1_phase(problem.loss(), &groups, domain.center(), domain, params, true, &phase_stream, &counter)
        };
        let (x, y) = (run(&a)?, run(&b)?);
        Ok(match (x.inlier_mean, y.inlier_mean) {
            (Some(u), Some(v)) => linalg::dist(&u, &v),
            _ => f64::INFINITY,
        })
    };
    let values = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial(t, false))
        .collect::<Result<Vec<_>>>()?;
    let controls = (0..cfg.controls)
        .into_par_iter()
        .map(|t| trial(t, true))
        .collect::<Result<Vec<_>>>()?;

    let n = schedule.size.n;
    let bound = tau * ((n * m) as f64).ln() / c as f64;
    let formula = format!(
        "||mean(S) - mean(S')|| <= tau_i ln(nm) / C = {tau:.6e} * ln({}) / {c} = {bound:.6e}; q99 = {:.6e}",
        n * m,
        quantile(&values, REQUIRED_FRACTION)
    );
    Ok(finish("sensitivity", cfg.trials, values, controls, bound, formula))
}

/// Gradient analogue for the accelerated solver: one minibatch of `K_i`
/// users and its neighbour are scored, gated against a shared noisy
/// threshold and filtered with shared uniforms at the domain center.
pub fn gradient_sensitivity_experiment<P: Problem>(
    problem: &P,
    schedule: &PhaseScheduleAlg3,
    cfg: &SensitivityConfig,
) -> Result<AuditReport>
where
    ItemOf<P>: Send + Clone,
{
    let ph = schedule
        .phases
        .get(cfg.phase.wrapping_sub(1))
        .ok_or_else(|| invalid(format!("schedule has no phase {}", cfg.phase)))?;
    if cfg.trials == 0 {
        return Err(invalid("sensitivity audit needs trials"));
    }
    let k = ph.batch;
    let m = schedule.size.m;
    let tau = schedule.tau * cfg.tau_scale;
    let domain = problem.domain();
    let root = RngStream::new(cfg.seed).child(purpose::TRIAL);
    let noise = NoiseSwitches::ALL;

    let trial = |t: usize, control: bool| -> Result<f64> {
        let stream = root.descend(&[2 + control as u64, t as u64]);
        let (a, b) = neighbours(problem, k, m, &stream, control)?;
        let step = stream.child(purpose::STEP);
        let mut tsrc = NoiseSource::from_switch(noise.gate, &step.child(purpose::THRESHOLD_NOISE));
        let threshold = NoisyThreshold::new(
            4.0 * k as f64 / 5.0,
            schedule.threshold_noise_scale(),
            schedule.score_noise_scale(),
            &mut tsrc,
        )?;
        let counter = GradCounter::new();
        let run = |data: &UserDataset<ItemOf<P>>| -> Result<Option<Vec<f64>>> {
            let batch: Vec<&[ItemOf<P>]> = data.users().iter().map(|u| u.as_slice()).collect();
            let f = filtered_gradient_mean(problem.loss(), &batch, domain.center(), tau, &step, &counter)?;
            let mut ssrc = NoiseSource::from_switch(noise.gate, &step.child(purpose::SCORE_NOISE));
            Ok(match threshold.test(f.raw_score, &mut ssrc)?.0 {
                Verdict::Above => f.inlier_mean,
                Verdict::Below => None,
            })
        };
        Ok(match (run(&a)?, run(&b)?) {
            (Some(u), Some(v)) => linalg::dist(&u, &v),
            _ => f64::INFINITY,
        })
    };
    let values = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial(t, false))
        .collect::<Result<Vec<_>>>()?;
    let controls = (0..cfg.controls)
        .into_par_iter()
        .map(|t| trial(t, true))
        .collect::<Result<Vec<_>>>()?;

    let n = schedule.size.n;
    let bound = tau * ((n * m) as f64).ln() / k as f64;
    let formula = format!(
        "||h - h'|| <= tau ln(nm) / K_i = {tau:.6e} * ln({}) / {k} = {bound:.6e}; q99 = {:.6e}",
        n * m,
        quantile(&values, REQUIRED_FRACTION)
    );
    Ok(finish("gradient_sensitivity", cfg.trials, values, controls, bound, formula))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{schedule_alg1, schedule_alg3, Alg1Options, Alg3Options, ProblemSize};
    use crate::privacy::PrivacyParams;
    use crate::problems::{ProblemKind, ProblemSpec, QuadraticMean};
    use crate::Loss;

    fn setup() -> (QuadraticMean, ProblemSize) {
        let p = ProblemSpec::new(ProblemKind::QuadraticMean, 4).quadratic().unwrap();
        let size = ProblemSize {
            n: 1024,
            m: 4,
            d: 4,
            lipschitz: p.loss().lipschitz(),
            diameter: 2.0,
            smoothness: Some(1.0),
        };
        (p, size)
    }

    #[test]
    fn small_audit_passes_and_controls_are_zero() {
        let (p, size) = setup();
        let priv_ = PrivacyParams::practical(1.0, 1e-5, 0.5).unwrap();
        let s = schedule_alg1(size, priv_, Alg1Options::default()).unwrap();
        let cfg = SensitivityConfig {
            trials: 40,
            controls: 5,
            ..Default::default()
        };
        let r = sensitivity_experiment(&p, &s, &cfg).unwrap();
        assert!(r.passed(), "{}", r.summary_line());
        assert!(r.values("control").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shrunken_tau_fails() {
        let (p, size) = setup();
        let priv_ = PrivacyParams::practical(1.0, 1e-5, 0.5).unwrap();
        let s = schedule_alg1(size, priv_, Alg1Options::default()).unwrap();
        let cfg = SensitivityConfig {
            trials: 20,
            controls: 2,
            tau_scale: 0.01,
            ..Default::default()
        };
        assert!(!sensitivity_experiment(&p, &s, &cfg).unwrap().passed());
    }

    #[test]
    fn gradient_audit_passes() {
        let (p, size) = setup();
        let priv_ = PrivacyParams::practical(1.0, 1e-7, 0.05).unwrap();
        let s = schedule_alg3(size, priv_, Alg3Options::default()).unwrap();
        let cfg = SensitivityConfig {
            trials: 40,
            controls: 5,
            ..Default::default()
        };
        let r = gradient_sensitivity_experiment(&p, &s, &cfg).unwrap();
        assert!(r.passed(), "{}", r.summary_line());
    }
}
