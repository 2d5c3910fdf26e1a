use rayon::prelude::*;

use crate::audit::{AuditReport, Check, Measurement};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::mechanisms::{above_threshold, above_threshold_alpha, sample_gaussian_vector, sample_laplace, NoiseSource, Verdict};
use crate::rng::{purpose, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismsConfig {
    /// Draws per moment test.
    pub samples: usize,
    /// Independent AboveThreshold streams.
    pub streams: usize,
    /// Queries per AboveThreshold stream.
    pub queries: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MechanismsConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            streams: 1000,
            queries: 20,
            gamma: 0.05,
            epsilon: 1.0,
            seed: 1,
        }
    }
}

/// `|estimate - expected| <= 3 std_err`
fn moment_check(name: &str, estimate: f64, expected: f64, std_err: f64) -> Check {
    Check {
        name: name.into(),
        value: estimate,
        bound: format!("{expected} +- {:.4e}", 3.0 * std_err),
        passed: (estimate - expected).abs() <= 3.0 * std_err,
    }
}

/// Moment tests of the Laplace and Gaussian samplers and the accuracy
/// event of AboveThreshold (all of the first `T-1` queries at
/// `threshold - alpha` answered below, the last at `threshold + alpha`
/// answered above).
pub fn mechanisms_experiment(cfg: &MechanismsConfig) -> Result<AuditReport> {
    if cfg.samples < 2 || cfg.streams == 0 || cfg.queries == 0 {
        return Err(invalid("mechanisms audit needs samples, streams and queries"));
    }
    let root = RngStream::new(cfg.seed).child(purpose::TRIAL);
    let n = cfg.samples as f64;
    let mut checks = Vec::new();
    let mut measurements = Vec::new();

    // Laplace(b = 2): mean 0, variance 2 b^2 = 8, fourth moment 24 b^4
    let b = 2.0;
    let mut src = NoiseSource::seeded(&root.child(0));
    let lap = (0..cfg.samples)
        .map(|_| sample_laplace(b, &mut src))
        .collect::<Result<Vec<_>>>()?;
    let lap_mean = lap.iter().sum::<f64>() / n;
    let lap_var = lap.iter().map(|v| (v - lap_mean).powi(2)).sum::<f64>() / (n - 1.0);
    let var = 2.0 * b * b;
    checks.push(moment_check("laplace_mean", lap_mean, 0.0, (var / n).sqrt()));
    checks.push(moment_check("laplace_variance", lap_var, var, ((24.0 * b.powi(4) - var * var) / n).sqrt()));

    // N(0, 1) coordinates: variance 1, sd of the sample variance sqrt(2/n)
    let mut src = NoiseSource::seeded(&root.child(1));
    let g = sample_gaussian_vector(1.0, cfg.samples, &mut src)?;
    let g_mean = g.iter().sum::<f64>() / n;
    let g_var = g.iter().map(|v| (v - g_mean).powi(2)).sum::<f64>() / (n - 1.0);
    checks.push(moment_check("gaussian_variance", g_var, 1.0, (2.0 / n).sqrt()));

    // sigma = 3, d = 2: ||G||^2 = 9 chi^2_2, mean 18, variance 2 * 2 * 81
    let mut src = NoiseSource::seeded(&root.child(2));
    let mut sq = 0.0;
    for _ in 0..cfg.samples {
        sq += linalg::norm_sq(&sample_gaussian_vector(3.0, 2, &mut src)?);
    }
    checks.push(moment_check("gaussian_norm_sq", sq / n, 18.0, (4.0 * 81.0 / n).sqrt()));

    let alpha = above_threshold_alpha(cfg.queries, cfg.gamma, cfg.epsilon);
    let threshold = 0.0;
    let accurate = (0..cfg.streams)
        .into_par_iter()
        .map(|s| -> Result<bool> {
            let mut src = NoiseSource::seeded(&root.descend(&[3, s as u64]));
            let queries = (0..cfg.queries).map(|k| {
                if k + 1 < cfg.queries {
                    threshold - alpha
                } else {
                    threshold + alpha
                }
            });
            let v = above_threshold(queries, threshold, cfg.epsilon, &mut src)?;
            Ok(v.len() == cfg.queries && v.last() == Some(&Verdict::Above))
        })
        .collect::<Result<Vec<_>>>()?;
    let freq = accurate.iter().filter(|&&a| a).count() as f64 / cfg.streams as f64;
    checks.push(Check {
        name: "above_threshold_accuracy".into(),
        value: freq,
        bound: format!(">= {}", 1.0 - cfg.gamma),
        passed: freq >= 1.0 - cfg.gamma,
    });
    measurements.extend(accurate.iter().enumerate().map(|(trial, &a)| Measurement {
        group: "above_threshold".into(),
        trial,
        value: a as u8 as f64,
    }));

    Ok(AuditReport {
        name: "mechanisms".into(),
        trials: cfg.samples,
        measurements,
        checks,
        bound_formula: format!(
            "moments within 3 standard errors at {} draws; AboveThreshold alpha = 8 ln(2T/gamma)/eps = {alpha:.4}",
            cfg.samples
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_audit_passes() {
        let r = mechanisms_experiment(&MechanismsConfig::default()).unwrap();
        assert!(r.passed(), "{}", r.summary_line());
    }
}
