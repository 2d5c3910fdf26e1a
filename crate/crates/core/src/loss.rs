use std::sync::atomic::{AtomicU64, Ordering};

use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    /// Gradient is `beta`-Lipschitz.
    Smooth(f64),
    NonSmooth,
}

impl Smoothness {
    pub fn beta(self) -> Option<f64> {
        match self {
            Smoothness::Smooth(b) => Some(b),
            Smoothness::NonSmooth => None,
        }
    }
}

/// A convex loss `f(x, z)` with a (sub)gradient oracle.
///
/// `lipschitz` must bound the gradient norm on the domain enlarged by
/// `domain_margin`, for every item the data law can produce.
pub trait Loss: Sync {
    type Item: Sync;

    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], z: &Self::Item) -> f64;
    /// Writes the gradient at `x` into `out`.
    fn gradient(&self, x: &[f64], z: &Self::Item, out: &mut [f64]);
    fn lipschitz(&self) -> f64;
    fn smoothness(&self) -> Smoothness;

    /// Radius by which the domain may be enlarged while keeping the
    /// Lipschitz bound valid.
    fn domain_margin(&self) -> f64 {
        0.0
    }
}

/// What the optimizers actually consume: a possibly randomized gradient
/// sample per data item. Every exact [`Loss`] is a source; randomized
/// smoothing provides the other implementation.
pub trait GradientSource: Sync {
    type Item: Sync;

    fn input_dim(&self) -> usize;
    fn gradient_bound(&self) -> f64;
    fn smoothness_bound(&self) -> Option<f64>;
    /// Base-gradient evaluations charged per call to `sample_gradient`.
    fn evals_per_sample(&self) -> u64;
    fn sample_gradient(
        &self,
        x: &[f64],
        z: &Self::Item,
        rng: &mut ChaCha8Rng,
        out: &mut [f64],
    ) -> Result<()>;
}

impl<L: Loss> GradientSource for L {
    type Item = L::Item;

    fn input_dim(&self) -> usize {
        Loss::dim(self)
    }

    fn gradient_bound(&self) -> f64 {
        Loss::lipschitz(self)
    }

    fn smoothness_bound(&self) -> Option<f64> {
        Loss::smoothness(self).beta()
    }

    fn evals_per_sample(&self) -> u64 {
        1
    }

    fn sample_gradient(
        &self,
        x: &[f64],
        z: &Self::Item,
        _rng: &mut ChaCha8Rng,
        out: &mut [f64],
    ) -> Result<()> {
        self.gradient(x, z, out);
        Ok(())
    }
}

/// Number of base-gradient evaluations. Shared between worker threads.
#[derive(Debug, Default)]
pub struct GradCounter(AtomicU64);

impl GradCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Average gradient of one user's items at `x`.
pub fn user_avg_gradient<G: GradientSource>(
    source: &G,
    x: &[f64],
    user: &[G::Item],
    rng: &mut ChaCha8Rng,
    counter: &GradCounter,
) -> Result<Vec<f64>> {
    if user.is_empty() {
        return Err(invalid("user record is empty"));
    }
    let d = source.input_dim();
    let mut acc = vec![0.0; d];
    let mut g = vec![0.0; d];
    for z in user {
        source.sample_gradient(x, z, rng, &mut g)?;
        linalg::axpy(1.0, &g, &mut acc);
    }
    linalg::scale(1.0 / user.len() as f64, &mut acc);
    counter.add(user.len() as u64 * source.evals_per_sample());
    Ok(acc)
}

#[cfg(test)]
pub(crate) mod test_losses {
    use super::*;

    /// f(x, z) = 0.5 * ||x - z||^2
    pub struct HalfSquare {
        pub dim: usize,
        pub lipschitz: f64,
    }

    impl Loss for HalfSquare {
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
    }
}
