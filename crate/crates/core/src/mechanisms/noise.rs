use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Source of privacy noise. `Disabled` turns every draw into an exact zero,
/// which makes the algorithms deterministic functions of their inputs.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    Seeded(ChaCha8Rng),
    Disabled,
}

impl NoiseSource {
    pub fn seeded(stream: &RngStream) -> Self {
        NoiseSource::Seeded(stream.rng())
    }

    /// Seeded when `enabled`, otherwise disabled.
    pub fn from_switch(enabled: bool, stream: &RngStream) -> Self {
        if enabled {
            Self::seeded(stream)
        } else {
            NoiseSource::Disabled
        }
    }

    pub fn is_disabled(&self) -> bool {
        matches!(self, NoiseSource::Disabled)
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidScale(scale))
    }
}

/// One draw from `Lap(b)`, density `exp(-|x|/b) / 2b`.
pub fn sample_laplace(scale: f64, src: &mut NoiseSource) -> Result<f64> {
    check_scale(scale)?;
    Ok(match src {
        NoiseSource::Disabled => 0.0,
        NoiseSource::Seeded(rng) => {
            let magnitude: f64 = rng.sample(Exp1);
            if rng.gen::<bool>() {
                scale * magnitude
            } else {
                -scale * magnitude
            }
        }
    })
}

/// `d` i.i.d. `N(0, sigma^2)` coordinates.
pub fn sample_gaussian_vector(sigma: f64, d: usize, src: &mut NoiseSource) -> Result<Vec<f64>> {
    check_scale(sigma)?;
    Ok(match src {
        NoiseSource::Disabled => vec![0.0; d],
        NoiseSource::Seeded(rng) => (0..d)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn disabled_draws_are_zero() {
        let mut src = NoiseSource::Disabled;
        assert_eq!(sample_laplace(7.0, &mut src).unwrap(), 0.0);
        assert_eq!(sample_gaussian_vector(3.0, 4, &mut src).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn rejects_bad_scales() {
        let mut src = NoiseSource::seeded(&RngStream::new(0));
        assert_eq!(sample_laplace(0.0, &mut src), Err(Error::InvalidScale(0.0)));
        assert!(sample_laplace(-1.0, &mut src).is_err());
        assert!(sample_gaussian_vector(f64::NAN, 2, &mut src).is_err());
    }

    #[test]
    fn laplace_moments() {
        let mut src = NoiseSource::seeded(&RngStream::new(1));
        let xs: Vec<f64> = (0..100_000).map(|_| sample_laplace(2.0, &mut src).unwrap()).collect();
        let (mean, var) = moments(&xs);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 8.0).abs() < 0.5, "var {var}");
    }

    #[test]
    fn gaussian_moments() {
        let mut src = NoiseSource::seeded(&RngStream::new(2));
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_gaussian_vector(1.0, 1, &mut src).unwrap()[0])
            .collect();
        let (_, var) = moments(&xs);
        assert!((var - 1.0).abs() < 0.05, "var {var}");

        let sq: Vec<f64> = (0..100_000)
            .map(|_| {
                let g = sample_gaussian_vector(3.0, 2, &mut src).unwrap();
                g[0] * g[0] + g[1] * g[1]
            })
            .collect();
        let (m, _) = moments(&sq);
        assert!((m - 18.0).abs() < 1.0, "E|G|^2 {m}");
    }
}
