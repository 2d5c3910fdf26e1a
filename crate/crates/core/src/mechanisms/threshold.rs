//! AboveThreshold (sparse vector technique) with configurable noise scales.

use crate::error::Result;
use crate::mechanisms::noise::{sample_laplace, NoiseSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// `q + nu >= noisy threshold`
    Above,
    Below,
}

/// A threshold perturbed once, against which noisy queries are compared.
///
/// The standard mechanism uses scales `2/eps` and `4/eps`; the accelerated
/// minibatch solver uses `8/eps` and `16/eps` and stops at the first
/// `Below` instead of the first `Above`.
#[derive(Debug, Clone)]
pub struct NoisyThreshold {
    threshold: f64,
    noisy_threshold: f64,
    query_scale: f64,
}

impl NoisyThreshold {
    pub fn new(threshold: f64, threshold_scale: f64, query_scale: f64, src: &mut NoiseSource) -> Result<Self> {
        let noise = sample_laplace(threshold_scale, src)?;
        // validate now so `test` cannot fail on the scale later
        sample_laplace(query_scale, &mut NoiseSource::Disabled)?;
        Ok(Self {
            threshold,
            noisy_threshold: threshold + noise,
            query_scale,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn noisy_threshold(&self) -> f64 {
        self.noisy_threshold
    }

    /// Compare one query; returns the verdict and the noisy query value.
    pub fn test(&self, query: f64, src: &mut NoiseSource) -> Result<(Verdict, f64)> {
        let noisy = query + sample_laplace(self.query_scale, src)?;
        let v = if noisy >= self.noisy_threshold {
            Verdict::Above
        } else {
            Verdict::Below
        };
        Ok((v, noisy))
    }
}

/// Run AboveThreshold over a lazily produced stream of unit-sensitivity
/// queries, halting at the first `Above`. Queries after the halt are never
/// pulled from the iterator.
pub fn above_threshold_with_scales<I>(
    queries: I,
    threshold: f64,
    threshold_scale: f64,
    query_scale: f64,
    src: &mut NoiseSource,
) -> Result<Vec<Verdict>>
where
    I: IntoIterator<Item = f64>,
{
    let gate = NoisyThreshold::new(threshold, threshold_scale, query_scale, src)?;
    let mut out = Vec::new();
    for q in queries {
        let (v, _) = gate.test(q, src)?;
        out.push(v);
        if v == Verdict::Above {
            break;
        }
    }
    Ok(out)
}

/// Standard AboveThreshold: threshold noise `Lap(2/eps)`, query noise `Lap(4/eps)`.
pub fn above_threshold<I>(queries: I, threshold: f64, epsilon: f64, src: &mut NoiseSource) -> Result<Vec<Verdict>>
where
    I: IntoIterator<Item = f64>,
{
    above_threshold_with_scales(queries, threshold, 2.0 / epsilon, 4.0 / epsilon, src)
}

/// Accuracy radius `8 ln(2T/gamma) / eps` for `T` queries at failure
/// probability `gamma`.
pub fn above_threshold_alpha(num_queries: usize, gamma: f64, epsilon: f64) -> f64 {
    8.0 * (2.0 * num_queries as f64 / gamma).ln() / epsilon
}
