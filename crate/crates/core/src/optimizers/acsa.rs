//! Accelerated stochastic approximation (AC-SA) for strongly convex,
//! smooth objectives over a ball, with the usual multi-stage restarts.
//!
//! Two-sequence recursion with `alpha_t = 2/(t+1)` and
//! `gamma_t = 4 Lambda / (t (t+1))`; the gradient is requested at the
//! extrapolated point `x_md` and the prox step is the closed-form minimizer
//! of an isotropic quadratic followed by projection.

use crate::domain::BallDomain;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcSaParams {
    /// Strong convexity modulus `lambda`.
    pub strong_convexity: f64,
    /// Smoothness bound `Lambda >= lambda`.
    pub smoothness: f64,
}

impl AcSaParams {
    /// Parameters for `F + (lambda/2)||x - c||^2` with `F` `beta`-smooth:
    /// `Lambda = beta + 2 lambda`.
    pub fn regularized(beta: f64, lambda: f64) -> Self {
        Self {
            strong_convexity: lambda,
            smoothness: beta + 2.0 * lambda,
        }
    }

    fn validate(&self) -> Result<()> {
        let (mu, big) = (self.strong_convexity, self.smoothness);
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid(format!("strong convexity must be positive, got {mu}")));
        }
        if !(big >= mu && big.is_finite()) {
            return Err(invalid(format!("smoothness {big} must be at least the strong convexity {mu}")));
        }
        Ok(())
    }

    /// Base stage length `ceil(4 sqrt(Lambda / lambda))`.
    pub fn stage_length(&self) -> usize {
        ((4.0 * (self.smoothness / self.strong_convexity).sqrt()).ceil() as usize).max(1)
    }
}

/// Iterate pair of one AC-SA stage.
#[derive(Debug, Clone)]
pub struct AcSaState {
    x: Vec<f64>,
    x_ag: Vec<f64>,
    t: usize,
    params: AcSaParams,
}

impl AcSaState {
    pub fn new(start: &[f64], params: AcSaParams, domain: &BallDomain) -> Result<Self> {
        params.validate()?;
        let x = domain.project(start)?;
        Ok(Self {
            x_ag: x.clone(),
            x,
            t: 0,
            params,
        })
    }

    fn coefficients(&self) -> (f64, f64) {
        let t = (self.t + 1) as f64;
        let alpha = 2.0 / (t + 1.0);
        let gamma = 4.0 * self.params.smoothness / (t * (t + 1.0));
        (alpha, gamma)
    }

    /// Point at which the next gradient must be evaluated.
    pub fn query_point(&self) -> Vec<f64> {
        let (alpha, gamma) = self.coefficients();
        let mu = self.params.strong_convexity;
        let denom = gamma + (1.0 - alpha * alpha) * mu;
        let w_ag = (1.0 - alpha) * (mu + gamma) / denom;
        let w_x = alpha * ((1.0 - alpha) * mu + gamma) / denom;
        self.x_ag
            .iter()
            .zip(&self.x)
            .map(|(a, b)| w_ag * a + w_x * b)
            .collect()
    }

    /// Consume the gradient observed at `query` (as returned by
    /// [`query_point`](Self::query_point)).
    pub fn advance(&mut self, query: &[f64], gradient: &[f64], domain: &BallDomain) {
        let (alpha, gamma) = self.coefficients();
        let mu = self.params.strong_convexity;
        let w_prev = (1.0 - alpha) * mu + gamma;
        let inv = 1.0 / (mu + gamma);
        for k in 0..self.x.len() {
            self.x[k] = (alpha * mu * query[k] + w_prev * self.x[k] - alpha * gradient[k]) * inv;
        }
        domain.project_in_place(&mut self.x);
        for k in 0..self.x.len() {
            self.x_ag[k] = alpha * self.x[k] + (1.0 - alpha) * self.x_ag[k];
        }
        self.t += 1;
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn aggregate(&self) -> &[f64] {
        &self.x_ag
    }

    pub fn iterations(&self) -> usize {
        self.t
    }
}

/// Run one AC-SA stage of `steps` iterations. The oracle receives the query
/// point and returns a (stochastic) gradient, or an error that aborts the run.
pub fn ac_sa_stage<E, O>(
    oracle: &mut O,
    params: AcSaParams,
    steps: usize,
    start: &[f64],
    domain: &BallDomain,
) -> Result<Vec<f64>, E>
where
    E: From<Error>,
    O: FnMut(&[f64]) -> Result<Vec<f64>, E>,
{
    let mut state = AcSaState::new(start, params, domain)?;
    for _ in 0..steps {
        let q = state.query_point();
        let g = oracle(&q)?;
        if g.len() != q.len() {
            return Err(invalid("oracle returned a gradient of the wrong dimension").into());
        }
        state.advance(&q, &g, domain);
    }
    Ok(state.x_ag)
}

/// Variance information that lets the multi-stage schedule lengthen stages
/// once the noise floor dominates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBound {
    /// Bound `V^2` on `E||g - grad F||^2`.
    pub variance: f64,
    /// Bound on the initial suboptimality `F(start) - F*`.
    pub initial_gap: f64,
}

/// Stage lengths summing to `total_steps`. Without a noise bound every stage
/// has the base length; with one, stage `k` has length
/// `max(base, (256/3) V^2 2^k / (lambda gap))`. A trailing partial stage is
/// merged into the one before it.
pub fn stage_plan(params: AcSaParams, total_steps: usize, noise: Option<NoiseBound>) -> Vec<usize> {
    let base = params.stage_length();
    let length = |k: u32| -> usize {
        match noise {
            None => base,
            Some(nb) if nb.variance > 0.0 && nb.initial_gap > 0.0 => {
                let grow = 256.0 / 3.0 * nb.variance * 2f64.powi(k as i32)
                    / (params.strong_convexity * nb.initial_gap);
                if grow >= total_steps as f64 {
                    total_steps
                } else {
                    base.max(grow.ceil() as usize)
                }
            }
            Some(_) => base,
        }
    };
    let mut plan = Vec::new();
    let mut used = 0usize;
    let mut k = 1u32;
    loop {
        let n = length(k);
        if used + n > total_steps {
            break;
        }
        plan.push(n);
        used += n;
        k += 1;
    }
    let rest = total_steps - used;
    if rest > 0 {
        match plan.last_mut() {
            Some(last) => *last += rest,
            None => plan.push(rest),
        }
    }
    plan
}

/// Multi-stage AC-SA: each stage restarts from the previous stage's output.
pub fn multi_stage_ac_sa<E, O>(
    oracle: &mut O,
    params: AcSaParams,
    total_steps: usize,
    start: &[f64],
    domain: &BallDomain,
    noise: Option<NoiseBound>,
) -> Result<Vec<f64>, E>
where
    E: From<Error>,
    O: FnMut(&[f64]) -> Result<Vec<f64>, E>,
{
    if total_steps < 1 {
        return Err(invalid("multi-stage AC-SA needs at least one step").into());
    }
    params.validate()?;
    let mut x = start.to_vec();
    for steps in stage_plan(params, total_steps, noise) {
        x = ac_sa_stage(oracle, params, steps, &x, domain)?;
    }
    Ok(x)
}
