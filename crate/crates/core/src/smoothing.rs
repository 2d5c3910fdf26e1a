//! Randomized convolution smoothing.
//!
//! `f_r(x) = E_y f(x + y)` with `y` uniform on the ball of radius `r`.
//! `f_r` is `L sqrt(d) / r`-smooth, lies within `L r` below `f`, and
//! `grad f(x + y)` is an unbiased sample of `grad f_r(x)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::loss::{GradientSource, Loss};

/// Uniform draw from the centered ball of radius `r` in `d` dimensions:
/// a Gaussian direction scaled to radius `r U^{1/d}`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(r: f64, d: usize, rng: &mut R) -> Vec<f64> {
    if r == 0.0 || d == 0 {
        return vec![0.0; d];
    }
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = linalg::norm(&v);
    let u: f64 = rng.gen();
    let radius = r * u.powf(1.0 / d as f64);
    if n > 0.0 {
        linalg::scale(radius / n, &mut v);
    }
    v
}

#[derive(Debug, Clone)]
pub struct SmoothedLoss<L> {
    base: L,
    radius: f64,
    samples_per_gradient: usize,
}

impl<L: Loss> SmoothedLoss<L> {
    /// Fails if the base loss is not declared Lipschitz on the domain
    /// enlarged by `radius`.
    pub fn new(base: L, radius: f64, samples_per_gradient: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("smoothing radius must be positive, got {radius}")));
        }
        if samples_per_gradient == 0 {
            return Err(invalid("at least one sample per smoothed gradient"));
        }
        let margin = base.domain_margin();
        if radius > margin {
            return Err(Error::DomainMargin { radius, margin });
        }
        Ok(Self {
            base,
            radius,
            samples_per_gradient,
        })
    }

    pub fn base(&self) -> &L {
        &self.base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn samples_per_gradient(&self) -> usize {
        self.samples_per_gradient
    }

    /// `L sqrt(d) / r`
    pub fn effective_smoothness(&self) -> f64 {
        self.base.lipschitz() * (self.base.dim() as f64).sqrt() / self.radius
    }
}

/// Average of `k` base gradients at uniformly perturbed points.
pub fn smoothed_gradient<L: Loss>(s: &SmoothedLoss<L>, x: &[f64], z: &L::Item, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = s.base.dim();
    let mut acc = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    for _ in 0..s.samples_per_gradient {
        let y = sample_uniform_ball(s.radius, d, rng);
        for k in 0..d {
            shifted[k] = x[k] + y[k];
        }
        s.base.gradient(&shifted, z, &mut g);
        linalg::axpy(1.0, &g, &mut acc);
    }
    linalg::scale(1.0 / s.samples_per_gradient as f64, &mut acc);
    acc
}

/// Monte-Carlo estimate of `f_r(x, z)` from `k` perturbed evaluations.
pub fn smoothed_value_estimate<L: Loss>(
    s: &SmoothedLoss<L>,
    x: &[f64],
    z: &L::Item,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let d = s.base.dim();
    let mut shifted = vec![0.0; d];
    let mut total = 0.0;
    for _ in 0..k {
        let y = sample_uniform_ball(s.radius, d, rng);
        for j in 0..d {
            shifted[j] = x[j] + y[j];
        }
        total += s.base.value(&shifted, z);
    }
    total / k as f64
}

impl<L: Loss> GradientSource for SmoothedLoss<L> {
    type Item = L::Item;

    fn input_dim(&self) -> usize {
        self.base.dim()
    }

    fn gradient_bound(&self) -> f64 {
        self.base.lipschitz()
    }

    fn smoothness_bound(&self) -> Option<f64> {
        Some(self.effective_smoothness())
    }

    fn evals_per_sample(&self) -> u64 {
        self.samples_per_gradient as u64
    }

    fn sample_gradient(&self, x: &[f64], z: &L::Item, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&smoothed_gradient(self, x, z, rng));
        Ok(())
    }
}
