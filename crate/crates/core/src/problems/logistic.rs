use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::BallDomain;
use crate::linalg;
use crate::loss::{Loss, Smoothness};
use crate::problems::oracle::{sample_mean, sample_vector_sum};
use crate::problems::{MonteCarloSample, Optimum, Problem, TruncatedGaussian};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    /// +1 or -1
    pub label: f64,
}

/// `f(x, (w, y)) = ln(1 + exp(-y <w, x>))` with `||w|| <= B`:
/// `B`-Lipschitz and `B^2/4`-smooth everywhere.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    dim: usize,
    feature_bound: f64,
}

impl LogisticLoss {
    pub fn new(dim: usize, feature_bound: f64) -> Self {
        Self { dim, feature_bound }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl Loss for LogisticLoss {
    type Item = LabeledPoint;

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64], z: &LabeledPoint) -> f64 {
        softplus(-z.label * linalg::dot(&z.features, x))
    }

    fn gradient(&self, x: &[f64], z: &LabeledPoint, out: &mut [f64]) {
        let m = z.label * linalg::dot(&z.features, x);
        // -y * sigmoid(-m)
        let coef = -z.label / (1.0 + m.exp());
        for (o, w) in out.iter_mut().zip(&z.features) {
            *o = coef * w;
        }
    }

    fn lipschitz(&self) -> f64 {
        self.feature_bound
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth(self.feature_bound * self.feature_bound / 4.0)
    }

    fn domain_margin(&self) -> f64 {
        f64::INFINITY
    }
}

/// Logistic regression with features from a truncated Gaussian and labels
/// drawn from a logistic model with parameter `truth`.
#[derive(Debug)]
pub struct Logistic {
    loss: LogisticLoss,
    domain: BallDomain,
    features: TruncatedGaussian,
    truth: Vec<f64>,
    oracle: MonteCarloSample<LabeledPoint>,
    optimum: OnceLock<Optimum>,
}

impl Logistic {
    pub fn new(
        domain: BallDomain,
        features: TruncatedGaussian,
        truth: Vec<f64>,
        oracle_samples: usize,
        oracle_seed: u64,
    ) -> Self {
        let loss = LogisticLoss::new(domain.dim(), features.bound());
        let oracle = MonteCarloSample::draw(oracle_samples, oracle_seed, |r| draw(&features, &truth, r));
        Self {
            loss,
            domain,
            features,
            truth,
            oracle,
            optimum: OnceLock::new(),
        }
    }

    fn minimize(&self) -> Optimum {
        // projected Nesterov gradient descent with step 1/beta on the oracle sample
        let d = self.domain.dim();
        let items = self.oracle.items();
        let n = items.len() as f64;
        let beta = self.loss.smoothness().beta().unwrap_or(1.0).max(1e-12);
        let grad = |x: &[f64]| -> Vec<f64> {
            let mut g = sample_vector_sum(items, d, |z, acc| {
                let mut gz = vec![0.0; d];
                self.loss.gradient(x, z, &mut gz);
                linalg::axpy(1.0, &gz, acc);
            });
            linalg::scale(1.0 / n, &mut g);
            g
        };
        let mut x = self.domain.center().to_vec();
        let mut y = x.clone();
        let mut t = 1.0f64;
        for _ in 0..400 {
            let g = grad(&y);
            let mut next = y.clone();
            linalg::axpy(-1.0 / beta, &g, &mut next);
            self.domain.project_in_place(&mut next);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(a, b)| a + momentum * (a - b)).collect();
            self.domain.project_in_place(&mut y);
            let moved = linalg::dist(&next, &x);
            x = next;
            t = t_next;
            if moved < 1e-13 {
                break;
            }
        }
        let (value, std_err) = sample_mean(items, |z| self.loss.value(&x, z));
        Optimum {
            value,
            argmin: x,
            std_err,
        }
    }
}

fn draw<R: Rng + ?Sized>(features: &TruncatedGaussian, truth: &[f64], rng: &mut R) -> LabeledPoint {
    let w = features.sample(rng);
    let p = 1.0 / (1.0 + (-linalg::dot(&w, truth)).exp());
    let label = if rng.gen::<f64>() < p { 1.0 } else { -1.0 };
    LabeledPoint { features: w, label }
}

impl Problem for Logistic {
    type Loss = LogisticLoss;

    fn name(&self) -> &'static str {
        "logistic"
    }

    fn loss(&self) -> &LogisticLoss {
        &self.loss
    }

    fn domain(&self) -> &BallDomain {
        &self.domain
    }

    fn sample_item(&self, rng: &mut ChaCha8Rng) -> LabeledPoint {
        draw(&self.features, &self.truth, rng)
    }

    fn population_risk(&self, x: &[f64]) -> f64 {
        sample_mean(self.oracle.items(), |z| self.loss.value(x, z)).0
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
        format!(
            "{:?}|{:?}|{:?}|{}|{}",
            self.domain,
            self.features,
            self.truth,
            self.oracle.items().len(),
            self.oracle.seed()
        )
    }
}
