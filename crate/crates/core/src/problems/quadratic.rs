use rand_chacha::ChaCha8Rng;

use crate::domain::BallDomain;
use crate::error::Result;
use crate::linalg;
use crate::loss::{Loss, Smoothness};
use crate::problems::{Optimum, Problem, TruncatedGaussian};

/// `f(x, z) = ||x - z||^2 / 2`
#[derive(Debug, Clone)]
pub struct SquaredDistanceLoss {
    dim: usize,
    lipschitz: f64,
    margin: f64,
}

impl SquaredDistanceLoss {
    pub fn new(dim: usize, lipschitz: f64, margin: f64) -> Self {
        Self { dim, lipschitz, margin }
    }
}

impl Loss for SquaredDistanceLoss {
    type Item = Vec<f64>;

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64], z: &Vec<f64>) -> f64 {
        0.5 * linalg::dist_sq(x, z)
    }

    fn gradient(&self, x: &[f64], z: &Vec<f64>, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(z) {
            *o = a - b;
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth(1.0)
    }

    fn domain_margin(&self) -> f64 {
        self.margin
    }
}

/// Mean estimation: `F(x) = ||x - mu||^2 / 2 + E||z - mu||^2 / 2`, all in
/// closed form.
#[derive(Debug, Clone)]
pub struct QuadraticMean {
    loss: SquaredDistanceLoss,
    domain: BallDomain,
    law: TruncatedGaussian,
    optimum: Optimum,
}

impl QuadraticMean {
    pub fn new(domain: BallDomain, law: TruncatedGaussian, margin: f64) -> Result<Self> {
        let reach = linalg::norm(domain.center()) + domain.radius() + margin;
        let loss = SquaredDistanceLoss::new(domain.dim(), reach + law.bound(), margin);
        let noise = 0.5 * law.second_central_moment();
        let argmin = domain.project(law.mean())?;
        let value = 0.5 * linalg::dist_sq(&argmin, law.mean()) + noise;
        Ok(Self {
            loss,
            domain,
            law,
            optimum: Optimum {
                value,
                argmin,
                std_err: 0.0,
            },
        })
    }

    pub fn law(&self) -> &TruncatedGaussian {
        &self.law
    }
}

impl Problem for QuadraticMean {
    type Loss = SquaredDistanceLoss;

    fn name(&self) -> &'static str {
        "quadratic_mean"
    }

    fn loss(&self) -> &SquaredDistanceLoss {
        &self.loss
    }

    fn domain(&self) -> &BallDomain {
        &self.domain
    }

    fn sample_item(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.law.sample(rng)
    }

    fn population_risk(&self, x: &[f64]) -> f64 {
        0.5 * linalg::dist_sq(x, self.law.mean()) + 0.5 * self.law.second_central_moment()
    }

    fn optimum(&self) -> Optimum {
        self.optimum.clone()
    }

    fn describe(&self) -> String {
        format!("{:?}|{:?}|{}", self.domain, self.law, self.loss.margin)
    }
}
