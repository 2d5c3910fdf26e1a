use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma_lr;

use crate::error::{invalid, Result};
use crate::linalg;

/// `mean + xi` with `xi ~ N(0, scale^2 I)` conditioned on `||xi|| <= truncation`.
///
/// Truncation is symmetric about the mean, so the mean is exact and every
/// draw satisfies `||z|| <= ||mean|| + truncation`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussian {
    mean: Vec<f64>,
    scale: f64,
    truncation: f64,
}

impl TruncatedGaussian {
    pub fn new(mean: Vec<f64>, scale: f64, truncation: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(invalid("law dimension must be positive"));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(invalid(format!("law scale must be non-negative, got {scale}")));
        }
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(invalid(format!("truncation radius must be positive, got {truncation}")));
        }
        Ok(Self {
            mean,
            scale,
            truncation,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Almost-sure bound on `||z||`.
    pub fn bound(&self) -> f64 {
        linalg::norm(&self.mean) + self.truncation
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let r2 = self.truncation * self.truncation;
        loop {
            let xi: Vec<f64> = (0..d).map(|_| self.scale * rng.sample::<f64, _>(StandardNormal)).collect();
            if linalg::norm_sq(&xi) <= r2 {
                return linalg::add(&self.mean, &xi);
            }
        }
    }

    /// `E ||z - mean||^2 = scale^2 E[X | X <= c]` for `X ~ chi^2_d`,
    /// `c = (truncation / scale)^2`, using `E[X 1{X <= c}] = d P(chi^2_{d+2} <= c)`.
    pub fn second_central_moment(&self) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let d = self.dim() as f64;
        let c = (self.truncation / self.scale).powi(2);
        let p_d = gamma_lr(d / 2.0, c / 2.0);
        let p_d2 = gamma_lr(d / 2.0 + 1.0, c / 2.0);
        self.scale * self.scale * d * p_d2 / p_d
    }
}
