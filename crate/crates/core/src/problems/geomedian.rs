use std::sync::OnceLock;

use rand_chacha::ChaCha8Rng;

use crate::domain::BallDomain;
use crate::linalg;
use crate::loss::{Loss, Smoothness};
use crate::problems::oracle::{sample_mean, sample_vector_sum};
use crate::problems::{MonteCarloSample, Optimum, Problem, TruncatedGaussian};

/// `f(x, z) = ||x - z||`, 1-Lipschitz everywhere and non-smooth.
#[derive(Debug, Clone)]
pub struct DistanceLoss {
    dim: usize,
}

impl DistanceLoss {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Loss for DistanceLoss {
    type Item = Vec<f64>;

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64], z: &Vec<f64>) -> f64 {
        linalg::dist(x, z)
    }

    fn gradient(&self, x: &[f64], z: &Vec<f64>, out: &mut [f64]) {
        let r = linalg::dist(x, z);
        if r == 0.0 {
            out.fill(0.0);
            return;
        }
        for ((o, a), b) in out.iter_mut().zip(x).zip(z) {
            *o = (a - b) / r;
        }
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::NonSmooth
    }

    fn domain_margin(&self) -> f64 {
        f64::INFINITY
    }
}

/// Geometric median of a truncated Gaussian. Risk and optimum come from a
/// fixed Monte-Carlo sample, minimized by Weiszfeld iterations.
#[derive(Debug)]
pub struct GeometricMedian {
    loss: DistanceLoss,
    domain: BallDomain,
    law: TruncatedGaussian,
    oracle: MonteCarloSample<Vec<f64>>,
    optimum: OnceLock<Optimum>,
}

impl GeometricMedian {
    pub fn new(domain: BallDomain, law: TruncatedGaussian, oracle_samples: usize, oracle_seed: u64) -> Self {
        let oracle = MonteCarloSample::draw(oracle_samples, oracle_seed, |r| law.sample(r));
        Self {
            loss: DistanceLoss::new(domain.dim()),
            domain,
            law,
            oracle,
            optimum: OnceLock::new(),
        }
    }

    pub fn law(&self) -> &TruncatedGaussian {
        &self.law
    }

    fn minimize(&self) -> Optimum {
        let d = self.domain.dim();
        let items = self.oracle.items();
        let mut x = self.domain.project(self.law.mean()).expect("law mean has domain dimension");
        for _ in 0..200 {
            // Weiszfeld: weighted mean with weights 1/||x - z||
            let acc = sample_vector_sum(items, d + 1, |z, acc| {
                let w = 1.0 / linalg::dist(&x, z).max(1e-12);
                for k in 0..d {
                    acc[k] += w * z[k];
                }
                acc[d] += w;
            });
            let mut next: Vec<f64> = acc[..d].iter().map(|v| v / acc[d]).collect();
            self.domain.project_in_place(&mut next);
            let step = linalg::dist(&next, &x);
            x = next;
            if step < 1e-12 {
                break;
            }
        }
        let (value, std_err) = sample_mean(items, |z| linalg::dist(&x, z));
        Optimum {
            value,
            argmin: x,
            std_err,
        }
    }
}

impl Problem for GeometricMedian {
    type Loss = DistanceLoss;

    fn name(&self) -> &'static str {
        "geometric_median"
    }

    fn loss(&self) -> &DistanceLoss {
        &self.loss
    }

    fn domain(&self) -> &BallDomain {
        &self.domain
    }

    fn sample_item(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.law.sample(rng)
    }

    fn population_risk(&self, x: &[f64]) -> f64 {
        sample_mean(self.oracle.items(), |z| linalg::dist(x, z)).0
    }

    fn optimum(&self) -> Optimum {
        self.optimum.get_or_init(|| self.minimize()).clone()
    }

    fn prime_optimum(&self, optimum: Optimum) {
        let _ = self.optimum.set(optimum);
    }

    fn oracle_info(&self) -> Option<(u64, usize)> {
        Some((self.oracle.seed(), self.oracle.items().len()))
    }

    fn describe(&self) -> String {
        format!("{:?}|{:?}|{}|{}", self.domain, self.law, self.oracle.items().len(), self.oracle.seed())
    }
}
