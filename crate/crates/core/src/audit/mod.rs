//! Monte-Carlo audits of SGD stability, neighbouring-dataset sensitivity,
//! minibatch variance and the noise mechanisms.

mod mechanisms;
mod sensitivity;
mod stability;
mod variance;

use std::fmt::Write as _;

pub use mechanisms::{mechanisms_experiment, MechanismsConfig};
pub use sensitivity::{gradient_sensitivity_experiment, sensitivity_experiment, SensitivityConfig};
pub use stability::{stability_experiment, StabilityConfig};
pub use variance::{variance_experiment, VarianceConfig};

/// One measured value, tagged with the setting it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub group: String,
    pub trial: usize,
    pub value: f64,
}

/// A pass/fail comparison of a statistic against its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub name: String,
    pub trials: usize,
    pub measurements: Vec<Measurement>,
    pub checks: Vec<Check>,
    /// Bounds with the run's constants substituted.
    pub bound_formula: String,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn values(&self, group: &str) -> Vec<f64> {
        self.measurements
            .iter()
            .filter(|m| m.group == group)
            .map(|m| m.value)
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One row per measurement.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("audit,group,trial,value\n");
        for m in &self.measurements {
            let _ = writeln!(s, "{},{},{},{:e}", self.name, m.group, m.trial, m.value);
        }
        s
    }

    /// `name,trials,PASS|FAIL,check=value[ok|FAIL];...`
    pub fn summary_line(&self) -> String {
        let checks: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{}={:.6e}[{}]", c.name, c.value, if c.passed { "ok" } else { "FAIL" }))
            .collect();
        format!(
            "{},{},{},{}",
            self.name,
            self.trials,
            if self.passed() { "PASS" } else { "FAIL" },
            checks.join(";")
        )
    }
}

/// Empirical `q`-quantile (nearest rank, `q` in [0, 1]). NaNs sort last.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Ratio-band check used by the scaling audits.
fn ratio_check(name: &str, ratio: f64, lo: f64, hi: f64) -> Check {
    Check {
        name: name.to_string(),
        value: ratio,
        bound: format!("[{lo}, {hi}]"),
        passed: ratio >= lo && ratio <= hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_and_medians() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(median(&[1.0, 2.0]), 1.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.4), 2.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&[1.0, f64::INFINITY], 0.5), 1.0);
    }

    #[test]
    fn report_serialization() {
        let r = AuditReport {
            name: "x".into(),
            trials: 2,
            measurements: vec![
                Measurement {
                    group: "a".into(),
                    trial: 0,
                    value: 0.5,
                },
                Measurement {
                    group: "a".into(),
                    trial: 1,
                    value: 2.0,
                },
            ],
            checks: vec![ratio_check("r", 2.0, 1.5, 3.0)],
            bound_formula: String::new(),
        };
        assert!(r.passed());
        assert_eq!(r.to_csv(), "audit,group,trial,value\nx,a,0,5e-1\nx,a,1,2e0\n");
        assert_eq!(r.summary_line(), "x,2,PASS,r=2.000000e0[ok]");
        assert_eq!(r.values("a"), vec![0.5, 2.0]);
        let empty = AuditReport {
            checks: vec![],
            ..r
        };
        assert!(!empty.passed());
    }
}
