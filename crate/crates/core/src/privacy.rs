use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// How the large literal constants of the schedules are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstantMode {
    /// Literal constants multiplied by `constant_scale`.
    Theory,
    /// Schedule constants (100, 500, 1000) become `constant_scale`; Laplace
    /// noise constants (20, 8, 16) shrink by the same factor 100 as the
    /// group-count constant so the halting margin keeps its proportion.
    Practical,
}

impl fmt::Display for ConstantMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstantMode::Theory => "theory",
            ConstantMode::Practical => "practical",
        })
    }
}

impl FromStr for ConstantMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(ConstantMode::Theory),
            "practical" => Ok(ConstantMode::Practical),
            other => Err(invalid(format!("unknown constant mode '{other}'"))),
        }
    }
}

/// `(epsilon, delta)` user-level privacy budget plus constant scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
    constant_scale: f64,
    mode: ConstantMode,
}

impl PrivacyParams {
    pub const MAX_EPSILON: f64 = 10.0;

    pub fn new(epsilon: f64, delta: f64, constant_scale: f64, mode: ConstantMode) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= Self::MAX_EPSILON) {
            return Err(invalid(format!("epsilon must lie in (0, 10], got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(constant_scale > 0.0 && constant_scale.is_finite()) {
            return Err(invalid(format!("constant scale must be positive, got {constant_scale}")));
        }
        Ok(Self {
            epsilon,
            delta,
            constant_scale,
            mode,
        })
    }

    pub fn theory(epsilon: f64, delta: f64) -> Result<Self> {
        Self::new(epsilon, delta, 1.0, ConstantMode::Theory)
    }

    pub fn practical(epsilon: f64, delta: f64, constant_scale: f64) -> Result<Self> {
        Self::new(epsilon, delta, constant_scale, ConstantMode::Practical)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn constant_scale(&self) -> f64 {
        self.constant_scale
    }

    pub fn mode(&self) -> ConstantMode {
        self.mode
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.delta, self.constant_scale, self.mode)
    }

    /// Effective value of one of the schedule constants 100, 500, 1000.
    pub fn schedule_constant(&self, literal: f64) -> f64 {
        match self.mode {
            ConstantMode::Theory => self.constant_scale * literal,
            ConstantMode::Practical => self.constant_scale,
        }
    }

    /// Effective value of a Laplace noise constant (20, 8, 16).
    pub fn noise_constant(&self, literal: f64) -> f64 {
        match self.mode {
            ConstantMode::Theory => self.constant_scale * literal,
            ConstantMode::Practical => self.constant_scale * literal / 100.0,
        }
    }
}
