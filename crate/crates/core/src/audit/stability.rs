use rayon::prelude::*;

use crate::audit::{median, quantile, ratio_check, AuditReport, Check, Measurement};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::loss::{GradCounter, Loss};
use crate::optimizers::{one_pass_sgd, SgdConfig};
use crate::problems::{generate_dataset, ItemOf, Problem};
use crate::rng::{purpose, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub stepsize: f64,
    /// Step counts; consecutive entries are compared for `sqrt(T)` growth
    /// and should differ by a factor 4.
    pub steps: Vec<usize>,
    pub trials: usize,
    /// Tail probability of the quantile envelope.
    pub zeta: f64,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            stepsize: 1e-3,
            steps: vec![64, 256],
            trials: 200,
            zeta: 0.05,
            seed: 1,
        }
    }
}

/// Distance between the average iterates of two SGD runs of `T` steps from
/// the same start on independent i.i.d. data (one item per user).
fn paired_distance<P: Problem>(problem: &P, stepsize: f64, steps: usize, stream: &RngStream) -> Result<f64>
where
    ItemOf<P>: Send,
{
    let cfg = SgdConfig {
        stepsize,
        start: problem.domain().center().to_vec(),
        domain: problem.domain().clone(),
    };
    let counter = GradCounter::new();
    let mut out = Vec::with_capacity(2);
    for side in 0..2u64 {
        let s = stream.child(side);
        let data = generate_dataset(problem, steps, 1, s.child(purpose::DATA).rng_seed())?;
        out.push(one_pass_sgd(problem.loss(), &data.full_view(), &cfg, &s.child(purpose::SGD_ORDER), &counter)?);
    }
    Ok(linalg::dist(&out[0], &out[1]))
}

/// Stability of projected SGD: for every `T`, the `(1 - zeta)`-quantile of
/// the paired distance is compared with `eta L sqrt(T ln(dT/zeta))` (the
/// fitted constant `c` must not exceed 1), and the median distance must grow
/// by a factor in [1.5, 3] when `T` quadruples.
pub fn stability_experiment<P: Problem>(problem: &P, cfg: &StabilityConfig) -> Result<AuditReport>
where
    ItemOf<P>: Send,
{
    if cfg.steps.is_empty() || cfg.trials == 0 {
        return Err(invalid("stability audit needs step counts and trials"));
    }
    if !(cfg.zeta > 0.0 && cfg.zeta < 1.0) {
        return Err(invalid(format!("zeta must lie in (0, 1), got {}", cfg.zeta)));
    }
    if let Some(beta) = problem.loss().smoothness().beta() {
        if cfg.stepsize > 1.0 / beta {
            return Err(invalid(format!("stepsize {} exceeds 1/beta = {}", cfg.stepsize, 1.0 / beta)));
        }
    }
    let root = RngStream::new(cfg.seed).child(purpose::TRIAL);
    let lip = problem.loss().lipschitz();
    let d = problem.domain().dim() as f64;

    let mut measurements = Vec::new();
    let mut fitted: f64 = 0.0;
    let mut medians = Vec::new();
    for (k, &t) in cfg.steps.iter().enumerate() {
        let values = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| paired_distance(problem, cfg.stepsize, t, &root.descend(&[k as u64, trial as u64])))
            .collect::<Result<Vec<_>>>()?;
        let envelope = cfg.stepsize * lip * (t as f64 * (d * t as f64 / cfg.zeta).ln()).sqrt();
        let q = quantile(&values, 1.0 - cfg.zeta);
        if envelope > 0.0 {
            fitted = fitted.max(q / envelope);
        }
        medians.push(median(&values));
        measurements.extend(values.into_iter().enumerate().map(|(trial, value)| Measurement {
            group: format!("T={t}"),
            trial,
            value,
        }));
    }

    let mut checks = vec![Check {
        name: "fitted_c".into(),
        value: fitted,
        bound: "<= 1".into(),
        passed: fitted <= 1.0,
    }];
    for (k, w) in cfg.steps.windows(2).enumerate() {
        let ratio = medians[k + 1] / medians[k];
        // exact zero at both sizes (e.g. eta = 0) is perfectly stable
        let ratio = if medians[k] == 0.0 && medians[k + 1] == 0.0 { 2.0 } else { ratio };
        checks.push(ratio_check(&format!("median_ratio_T{}_T{}", w[1], w[0]), ratio, 1.5, 3.0));
    }
    Ok(AuditReport {
        name: "stability".into(),
        trials: cfg.trials,
        measurements,
        checks,
        bound_formula: format!(
            "q_{{1-zeta}}(||x - y||) <= c * {} * {} * sqrt(T ln({} T / {})), c = {:.4}",
            cfg.stepsize, lip, d, cfg.zeta, fitted
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ProblemKind, ProblemSpec};

    #[test]
    fn zero_stepsize_measures_zero() {
        let p = ProblemSpec::new(ProblemKind::QuadraticMean, 2).quadratic().unwrap();
        let cfg = StabilityConfig {
            stepsize: 0.0,
            trials: 5,
            ..Default::default()
        };
        let r = stability_experiment(&p, &cfg).unwrap();
        assert!(r.measurements.iter().all(|m| m.value == 0.0));
    }

    #[test]
    fn identical_data_and_order_measure_zero() {
        let p = ProblemSpec::new(ProblemKind::QuadraticMean, 2).quadratic().unwrap();
        let cfg = SgdConfig {
            stepsize: 0.01,
            start: vec![0.0, 0.0],
            domain: p.domain().clone(),
        };
        let data = generate_dataset(&p, 50, 1, 3).unwrap();
        let s = RngStream::new(4);
        let c = GradCounter::new();
        let a = one_pass_sgd(p.loss(), &data.full_view(), &cfg, &s, &c).unwrap();
        let b = one_pass_sgd(p.loss(), &data.full_view(), &cfg, &s, &c).unwrap();
        assert_eq!(linalg::dist(&a, &b), 0.0);
    }

    #[test]
    fn rejects_large_stepsize() {
        let p = ProblemSpec::new(ProblemKind::QuadraticMean, 2).quadratic().unwrap();
        let cfg = StabilityConfig {
            stepsize: 2.0,
            ..Default::default()
        };
        assert!(stability_experiment(&p, &cfg).is_err());
    }
}
