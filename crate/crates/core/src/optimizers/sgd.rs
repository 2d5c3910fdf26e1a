use rand::seq::SliceRandom;

use crate::data::UserView;
use crate::domain::BallDomain;
use crate::error::{invalid, Result};
use crate::linalg;
use crate::loss::{GradCounter, GradientSource};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub stepsize: f64,
    pub start: Vec<f64>,
    pub domain: BallDomain,
}

/// One pass of projected SGD over every item of `data`, in a seeded random
/// order. Runs `T = users * m` steps and returns the average of `x_1..x_T`
/// (the start point is not included).
pub fn one_pass_sgd<G: GradientSource>(
    source: &G,
    data: &UserView<'_, G::Item>,
    cfg: &SgdConfig,
    rng: &RngStream,
    counter: &GradCounter,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(invalid("SGD needs at least one user"));
    }
    if !(cfg.stepsize >= 0.0 && cfg.stepsize.is_finite()) {
        return Err(invalid(format!("stepsize must be non-negative, got {}", cfg.stepsize)));
    }
    let d = cfg.domain.dim();
    if cfg.start.len() != d || source.input_dim() != d {
        return Err(invalid("dimension mismatch between start point, loss and domain"));
    }

    let mut order: Vec<&G::Item> = data.items().collect();
    let mut r = rng.rng();
    order.shuffle(&mut r);

    let mut x = cfg.domain.project(&cfg.start)?;
    let mut sum = vec![0.0; d];
    let mut g = vec![0.0; d];
    for z in &order {
        source.sample_gradient(&x, z, &mut r, &mut g)?;
        linalg::axpy(-cfg.stepsize, &g, &mut x);
        cfg.domain.project_in_place(&mut x);
        linalg::axpy(1.0, &x, &mut sum);
    }
    counter.add(order.len() as u64 * source.evals_per_sample());
    linalg::scale(1.0 / order.len() as f64, &mut sum);
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UserDataset;
    use crate::loss::test_losses::HalfSquare;

    fn cfg(eta: f64, start: f64) -> SgdConfig {
        SgdConfig {
            stepsize: eta,
            start: vec![start],
            domain: BallDomain::centered(1, 1.0).unwrap(),
        }
    }

    #[test]
    fn hand_simulated_two_steps() {
        let loss = HalfSquare { dim: 1, lipschitz: 2.0 };
        let data = UserDataset::new(vec![vec![vec![0.0], vec![0.0]]]).unwrap();
        let c = GradCounter::new();
        let out = one_pass_sgd(&loss, &data.full_view(), &cfg(0.5, 1.0), &RngStream::new(0), &c).unwrap();
        // iterates 0.5, 0.25
        assert_eq!(out, vec![0.375]);
        assert_eq!(c.get(), 2);
    }

    #[test]
    fn zero_stepsize_stays_put() {
        let loss = HalfSquare { dim: 1, lipschitz: 2.0 };
        let data = UserDataset::new(vec![vec![vec![0.3], vec![-0.9]], vec![vec![0.1], vec![0.5]]]).unwrap();
        let out = one_pass_sgd(&loss, &data.full_view(), &cfg(0.0, 0.7), &RngStream::new(3), &GradCounter::new())
            .unwrap();
        assert!((out[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn iterates_stay_in_domain_and_count_every_item() {
        let loss = HalfSquare { dim: 1, lipschitz: 6.0 };
        let users: Vec<Vec<Vec<f64>>> = (0..5).map(|u| (0..3).map(|k| vec![5.0 - (u * k) as f64]).collect()).collect();
        let data = UserDataset::new(users).unwrap();
        let c = GradCounter::new();
        let out = one_pass_sgd(&loss, &data.full_view(), &cfg(0.9, -1.0), &RngStream::new(1), &c).unwrap();
        assert!(out[0].abs() <= 1.0);
        assert_eq!(c.get(), 15);
    }

    #[test]
    fn empty_view_is_rejected() {
        let loss = HalfSquare { dim: 1, lipschitz: 2.0 };
        let data = UserDataset::new(vec![vec![vec![0.0]]]).unwrap();
        let view = data.view(vec![]);
        assert!(one_pass_sgd(&loss, &view, &cfg(0.1, 0.0), &RngStream::new(0), &GradCounter::new()).is_err());
    }
}
