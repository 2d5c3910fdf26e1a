use rand::Rng;
use rayon::prelude::*;

use crate::audit::{mean, ratio_check, AuditReport, Measurement};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::loss::{user_avg_gradient, GradCounter};
use crate::problems::{generate_dataset, ItemOf, Problem};
use crate::rng::{purpose, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceConfig {
    /// Users per dataset; minibatches are drawn from these.
    pub users: usize,
    /// Minibatch size held fixed while `m` doubles.
    pub batch: usize,
    /// Items per user held fixed while the batch doubles.
    pub items: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self {
            users: 128,
            batch: 16,
            items: 8,
            trials: 1000,
            seed: 1,
        }
    }
}

/// Squared distance between a with-replacement minibatch mean of user
/// gradients and the all-user mean, on a fresh dataset.
fn squared_error<P: Problem>(problem: &P, users: usize, m: usize, k: usize, x: &[f64], stream: &RngStream) -> Result<f64>
where
    ItemOf<P>: Send,
{
    let data = generate_dataset(problem, users, m, stream.child(purpose::DATA).rng_seed())?;
    let counter = GradCounter::new();
    let mut r = stream.child(purpose::SMOOTHING).rng();
    let grads = data
        .users()
        .iter()
        .map(|u| user_avg_gradient(problem.loss(), x, u, &mut r, &counter))
        .collect::<Result<Vec<_>>>()?;
    let d = x.len();
    let full = linalg::mean(grads.iter().map(|g| g.as_slice()), d).expect("users is positive");
    let mut pick = stream.child(purpose::MINIBATCH).rng();
    let batch = linalg::mean((0..k).map(|_| grads[pick.gen_range(0..users)].as_slice()), d).expect("k is positive");
    Ok(linalg::dist_sq(&batch, &full))
}

/// Minibatch gradient variance at the domain center: doubling `m` at fixed
/// `K` and doubling `K` at fixed `m` must each shrink the mean squared error
/// by a factor in [1.5, 3].
pub fn variance_experiment<P: Problem>(problem: &P, cfg: &VarianceConfig) -> Result<AuditReport>
where
    ItemOf<P>: Send,
{
    if cfg.users == 0 || cfg.batch == 0 || cfg.items == 0 || cfg.trials == 0 {
        return Err(invalid("variance audit needs positive users, batch, items and trials"));
    }
    if 2 * cfg.batch > cfg.users {
        return Err(invalid("doubled batch exceeds the number of users"));
    }
    let x = problem.domain().center().to_vec();
    let root = RngStream::new(cfg.seed).child(purpose::TRIAL);
    let settings = [
        ("K,m", cfg.batch, cfg.items),
        ("K,2m", cfg.batch, 2 * cfg.items),
        ("2K,m", 2 * cfg.batch, cfg.items),
    ];
    let mut measurements = Vec::new();
    let mut means = Vec::new();
    for (s, &(label, k, m)) in settings.iter().enumerate() {
        let values = (0..cfg.trials)
            .into_par_iter()
            .map(|t| squared_error(problem, cfg.users, m, k, &x, &root.descend(&[s as u64, t as u64])))
            .collect::<Result<Vec<_>>>()?;
        means.push(mean(&values));
        measurements.extend(values.into_iter().enumerate().map(|(trial, value)| Measurement {
            group: label.to_string(),
            trial,
            value,
        }));
    }
    let checks = vec![
        ratio_check("ratio_double_m", means[0] / means[1], 1.5, 3.0),
        ratio_check("ratio_double_k", means[0] / means[2], 1.5, 3.0),
    ];
    Ok(AuditReport {
        name: "variance".into(),
        trials: cfg.trials,
        measurements,
        checks,
        bound_formula: format!(
            "E||g - grad F||^2 ~ L^2 ln(ndm) / (K m); means (K,m)={:.4e} (K,2m)={:.4e} (2K,m)={:.4e} at K={} m={}",
            means[0], means[1], means[2], cfg.batch, cfg.items
        ),
    })
}
