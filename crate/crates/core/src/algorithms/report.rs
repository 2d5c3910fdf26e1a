use std::time::Duration;

/// What happened in one phase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseDiagnostics {
    /// 1-based phase index.
    pub phase: usize,
    /// Users drawn for the phase.
    pub users: usize,
    /// Points fed to each outlier filter (`C` or `K_i`).
    pub group_size: usize,
    /// SGD steps per group or AC-SA iterations.
    pub steps: usize,
    pub tau: f64,
    pub sigma: f64,
    /// Raw concentration scores, one per filter call.
    pub scores: Vec<f64>,
    /// Size of each selected set.
    pub selected: Vec<usize>,
    /// Norms of the Gaussian perturbations.
    pub noise_norms: Vec<f64>,
    pub grad_evals: u64,
}

impl PhaseDiagnostics {
    /// True when every filter call kept every point.
    pub fn nothing_removed(&self) -> bool {
        self.selected.iter().all(|&s| s == self.group_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub algorithm: &'static str,
    pub output: Vec<f64>,
    pub halted: bool,
    /// 1-based phase in which the run halted.
    pub halt_phase: Option<usize>,
    pub grad_evals: u64,
    pub phases: Vec<PhaseDiagnostics>,
    pub warnings: Vec<String>,
    pub wall_time: Duration,
}

impl RunReport {
    /// No halt and no removal in any phase.
    pub fn clean(&self) -> bool {
        !self.halted && self.phases.iter().all(PhaseDiagnostics::nothing_removed)
    }
}

/// Which privacy noise draws are live. Disabled draws are exact zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSwitches {
    /// Laplace noise on concentration scores and thresholds.
    pub gate: bool,
    /// Gaussian output or gradient perturbation.
    pub perturbation: bool,
}

impl NoiseSwitches {
    pub const ALL: Self = Self {
        gate: true,
        perturbation: true,
    };
    pub const NONE: Self = Self {
        gate: false,
        perturbation: false,
    };
}

impl Default for NoiseSwitches {
    fn default() -> Self {
        Self::ALL
    }
}
