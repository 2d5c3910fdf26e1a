//! Per-phase parameters of the phased algorithms.

use crate::error::{invalid, Error, Result};
use crate::privacy::PrivacyParams;

/// Size of the problem a schedule is built for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSize {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub lipschitz: f64,
    /// Domain diameter `R`.
    pub diameter: f64,
    /// `None` for non-smooth losses.
    pub smoothness: Option<f64>,
}

impl ProblemSize {
    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m == 0 || self.d == 0 {
            return Err(invalid(format!(
                "need n >= 2, m >= 1, d >= 1 (got n={}, m={}, d={})",
                self.n, self.m, self.d
            )));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(invalid(format!("Lipschitz constant must be positive, got {}", self.lipschitz)));
        }
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return Err(invalid(format!("diameter must be positive, got {}", self.diameter)));
        }
        Ok(())
    }

    /// `ln(n d m)`
    pub fn log_ndm(&self) -> f64 {
        ((self.n * self.d * self.m) as f64).ln()
    }
}

/// `l = floor(log2 n)`
pub fn phase_count(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

/// `n_i = floor((1 - 2^-q) n / 2^(iq))`
pub fn phase_users(n: usize, q: f64, i: usize) -> usize {
    ((1.0 - 0.5f64.powf(q)) * n as f64 / 2f64.powf(i as f64 * q)).floor() as usize
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("q must be positive, got {q} (q = 0 leaves every phase empty)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Alg1Options {
    /// Stepsize decay exponent; default `ln m / ln n + 3/2`.
    pub p: Option<f64>,
    /// User decay exponent; default 0.25.
    pub q: Option<f64>,
    /// Base stepsize; default `R / (L sqrt(d m n eps))`.
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alg1Phase {
    pub users: usize,
    pub stepsize: f64,
    /// Users per group, `N_i`.
    pub group_users: usize,
    /// SGD steps per group, `T_i = N_i m`.
    pub steps: usize,
    pub tau: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScheduleAlg1 {
    pub size: ProblemSize,
    pub privacy: PrivacyParams,
    /// Number of groups `C`.
    pub groups: usize,
    pub p: f64,
    pub q: f64,
    pub eta: f64,
    pub phases: Vec<Alg1Phase>,
    pub warnings: Vec<String>,
}

impl PhaseScheduleAlg1 {
    /// `sum_i C N_i m`, the exact number of gradient evaluations.
    pub fn gradient_budget(&self) -> u64 {
        self.phases
            .iter()
            .map(|ph| (self.groups * ph.group_users * self.size.m) as u64)
            .sum()
    }

    /// Halting threshold on the noisy concentration score.
    pub fn score_threshold(&self) -> f64 {
        4.0 * self.groups as f64 / 5.0
    }

    /// Laplace scale of the concentration-score noise.
    pub fn score_noise_scale(&self) -> f64 {
        self.privacy.noise_constant(20.0) / self.privacy.epsilon()
    }
}

/// `C = ceil(c100 ln(20 n m e^eps / delta) / eps)`
pub fn alg1_group_count(n: usize, m: usize, privacy: &PrivacyParams) -> usize {
    let eps = privacy.epsilon();
    let arg = (20.0 * n as f64 * m as f64 / privacy.delta()).ln() + eps;
    (privacy.schedule_constant(100.0) * arg / eps).ceil() as usize
}

pub fn schedule_alg1(size: ProblemSize, privacy: PrivacyParams, opts: Alg1Options) -> Result<PhaseScheduleAlg1> {
    size.validate()?;
    let ProblemSize { n, m, d, lipschitz: l_const, diameter: r, .. } = size;
    let (eps, delta) = (privacy.epsilon(), privacy.delta());
    let q = opts.q.unwrap_or(0.25);
    check_q(q)?;
    let p = opts.p.unwrap_or((m as f64).ln() / (n as f64).ln() + 1.5);
    let eta = opts
        .eta
        .unwrap_or(r / (l_const * ((d * m * n) as f64 * eps).sqrt()));
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(invalid(format!("stepsize must be non-negative, got {eta}")));
    }

    let groups = alg1_group_count(n, m, &privacy);
    let log_ndm = size.log_ndm();
    let mut warnings = Vec::new();
    let need = privacy.schedule_constant(100.0) * (n as f64 / delta).ln() / eps;
    if (n as f64).powf(1.0 - q) * (1.0 - 0.5f64.powf(q)) < need {
        warnings.push(format!(
            "user-count condition fails: n^(1-q)(1-2^-q) = {:.1} < {need:.1}",
            (n as f64).powf(1.0 - q) * (1.0 - 0.5f64.powf(q))
        ));
    }
    if let Some(beta) = size.smoothness {
        let cap = l_const / r * ((d * m * n) as f64 * eps).sqrt();
        if beta > cap {
            warnings.push(format!("smoothness {beta} exceeds (L/R) sqrt(dmn eps) = {cap:.3}"));
        }
        if eta > 1.0 / beta {
            warnings.push(format!("stepsize {eta} exceeds 1/beta = {}", 1.0 / beta));
        }
    }

    let mut phases = Vec::new();
    for i in 1..=phase_count(n) {
        let users = phase_users(n, q, i);
        let group_users = users / groups;
        if group_users == 0 {
            return Err(Error::InfeasibleSchedule {
                phase: i,
                reason: format!("{users} users cannot fill {groups} groups"),
            });
        }
        let stepsize = eta / 2f64.powf(p * i as f64);
        let steps = group_users * m;
        let tau = privacy.schedule_constant(1000.0) * stepsize * l_const * (steps as f64).sqrt() * log_ndm;
        let sigma = privacy.schedule_constant(100.0) * tau * (n as f64 / delta).ln().powi(2) / (eps * groups as f64);
        phases.push(Alg1Phase {
            users,
            stepsize,
            group_users,
            steps,
            tau,
            sigma,
        });
    }
    Ok(PhaseScheduleAlg1 {
        size,
        privacy,
        groups,
        p,
        q,
        eta,
        phases,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Alg3Options {
    /// Regularization growth exponent; default `3q + 2.5 + log_n sqrt(m)`.
    pub p: Option<f64>,
    /// User decay exponent; default 0.25.
    pub q: Option<f64>,
    /// Base regularization; default `(L/R)(1/sqrt(nm) + sqrt(d)/(eps n sqrt(m)))`.
    pub lambda: Option<f64>,
    /// Constant in `tau = c_tau L ln(ndm) / sqrt(m)`; default 1.
    pub c_tau: Option<f64>,
    /// Constant in `T_i = ceil(c_T (1 + sqrt(beta/lambda_i)) ln(ndm))`; default 1.
    pub c_t: Option<f64>,
    /// Use `T_i = 1 + ceil(n_i^(3/4) m^(1/2) eps^(1/2) ln(ndm))` (smoothed losses).
    pub nonsmooth_steps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alg3Phase {
    pub users: usize,
    pub lambda: f64,
    /// AC-SA iterations `T_i`.
    pub steps: usize,
    /// Minibatch size `K_i`.
    pub batch: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScheduleAlg3 {
    pub size: ProblemSize,
    pub privacy: PrivacyParams,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub tau: f64,
    pub phases: Vec<Alg3Phase>,
    pub warnings: Vec<String>,
}

impl PhaseScheduleAlg3 {
    /// `sum_i T_i K_i m` base-gradient evaluations (times the samples per
    /// smoothed gradient, which the caller accounts for).
    pub fn gradient_budget(&self) -> u64 {
        self.phases
            .iter()
            .map(|ph| (ph.steps * ph.batch * self.size.m) as u64)
            .sum()
    }

    pub fn threshold_noise_scale(&self) -> f64 {
        self.privacy.noise_constant(8.0) / self.privacy.epsilon()
    }

    pub fn score_noise_scale(&self) -> f64 {
        self.privacy.noise_constant(16.0) / self.privacy.epsilon()
    }
}

pub fn schedule_alg3(size: ProblemSize, privacy: PrivacyParams, opts: Alg3Options) -> Result<PhaseScheduleAlg3> {
    size.validate()?;
    let ProblemSize { n, m, d, lipschitz: l_const, diameter: r, .. } = size;
    let (eps, delta) = (privacy.epsilon(), privacy.delta());
    let (nf, mf, df) = (n as f64, m as f64, d as f64);
    let q = opts.q.unwrap_or(0.25);
    check_q(q)?;
    let p = opts.p.unwrap_or(3.0 * q + 2.5 + mf.sqrt().ln() / nf.ln());
    let lambda = opts
        .lambda
        .unwrap_or(l_const / r * (1.0 / (nf * mf).sqrt() + df.sqrt() / (eps * nf * mf.sqrt())));
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("regularization must be positive, got {lambda}")));
    }
    let log_ndm = size.log_ndm();
    let tau = opts.c_tau.unwrap_or(1.0) * l_const * log_ndm / mf.sqrt();
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    let c_t = opts.c_t.unwrap_or(1.0);

    let mut warnings = Vec::new();
    if delta >= 1.0 / (nf * mf) {
        warnings.push(format!("delta = {delta} is not below 1/(nm) = {:e}", 1.0 / (nf * mf)));
    }
    if !opts.nonsmooth_steps && size.smoothness.is_none() {
        return Err(invalid("the smooth schedule needs a smoothness constant"));
    }

    let mut phases = Vec::new();
    for i in 1..=phase_count(n) {
        let users = phase_users(n, q, i);
        if users == 0 {
            return Err(Error::InfeasibleSchedule {
                phase: i,
                reason: "no users left for this phase".into(),
            });
        }
        let ni = users as f64;
        let lambda_i = lambda * 2f64.powf(p * i as f64);
        let steps = if opts.nonsmooth_steps {
            1 + (ni.powf(0.75) * mf.sqrt() * eps.sqrt() * log_ndm).ceil() as usize
        } else {
            let beta = size.smoothness.unwrap_or(0.0);
            ((c_t * (1.0 + (beta / lambda_i).sqrt()) * log_ndm).ceil() as usize).max(1)
        };
        let ti = steps as f64;
        let k_log = (ni * ni * mf * mf / delta).ln() + eps;
        let k_raw = privacy.schedule_constant(500.0) * k_log * (1.0 / eps + ni * eps / (ti * (1.0 / delta).ln()).sqrt());
        let k_raw = k_raw.ceil() as usize;
        let batch = if k_raw > users {
            warnings.push(format!(
                "phase {i}: batch size {k_raw} clamped to the {users} available users; subsampling amplification degrades"
            ));
            users
        } else {
            k_raw.max(1)
        };
        if steps * batch < users {
            warnings.push(format!("phase {i}: T_i K_i = {} < n_i = {users}", steps * batch));
        }
        let sigma = privacy.schedule_constant(1000.0) * tau * ti.sqrt() * ((nf * df / delta).ln() + eps) / (eps * ni);
        phases.push(Alg3Phase {
            users,
            lambda: lambda_i,
            steps,
            batch,
            sigma,
        });
    }
    Ok(PhaseScheduleAlg3 {
        size,
        privacy,
        p,
        q,
        lambda,
        tau,
        phases,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::privacy::ConstantMode;
    use proptest::prelude::*;

    fn size(n: usize, m: usize, d: usize) -> ProblemSize {
        ProblemSize {
            n,
            m,
            d,
            lipschitz: 1.0,
            diameter: 2.0,
            smoothness: Some(1.0),
        }
    }

    #[test]
    fn group_count_example() {
        let priv_ = PrivacyParams::practical(1.0, 1e-5, 1.0).unwrap();
        // ln(20 * 2048 * 16 * e / 1e-5) = 25.9...
        let direct = (20.0f64 * 2048.0 * 16.0 * std::f64::consts::E / 1e-5).ln().ceil() as usize;
        assert_eq!(direct, 26);
        assert_eq!(alg1_group_count(2048, 16, &priv_), 26);
        let theory = PrivacyParams::theory(1.0, 1e-5).unwrap();
        assert_eq!(alg1_group_count(2048, 16, &theory), 2591);
    }

    #[test]
    fn alg1_schedule_identities() {
        let priv_ = PrivacyParams::practical(1.0, 1e-5, 1.0).unwrap();
        let s = schedule_alg1(size(2048, 16, 8), priv_, Alg1Options::default()).unwrap();
        assert_eq!(s.phases.len(), 11);
        assert_eq!(s.groups, 26);
        for (k, ph) in s.phases.iter().enumerate() {
            assert_eq!(ph.users, phase_users(2048, s.q, k + 1));
            assert_eq!(ph.group_users, ph.users / 26);
            assert_eq!(ph.steps, ph.group_users * 16);
        }
        assert!(s.gradient_budget() <= 2048 * 16);
        assert!(s.phases.windows(2).all(|w| w[1].stepsize < w[0].stepsize));
        let eta = 2.0 / (8.0f64 * 16.0 * 2048.0).sqrt();
        assert!((s.eta - eta).abs() < 1e-15);
    }

    #[test]
    fn q_zero_is_rejected() {
        let priv_ = PrivacyParams::practical(1.0, 1e-5, 1.0).unwrap();
        let opts = Alg1Options {
            q: Some(0.0),
            ..Default::default()
        };
        assert!(schedule_alg1(size(2048, 16, 8), priv_, opts).is_err());
    }

    #[test]
    fn empty_group_names_the_phase() {
        let priv_ = PrivacyParams::theory(1.0, 1e-5).unwrap();
        match schedule_alg1(size(2048, 16, 8), priv_, Alg1Options::default()) {
            Err(Error::InfeasibleSchedule { phase, .. }) => assert_eq!(phase, 1),
            other => panic!("expected infeasible schedule, got {other:?}"),
        }
    }

    #[test]
    fn alg3_clamps_and_warns() {
        let priv_ = PrivacyParams::new(1.0, 1e-7, 1.0, ConstantMode::Practical).unwrap();
        let s = schedule_alg3(size(512, 16, 8), priv_, Alg3Options::default()).unwrap();
        assert_eq!(s.phases.len(), 9);
        assert!(s.phases.iter().all(|ph| ph.batch <= ph.users));
        assert!(s.warnings.iter().any(|w| w.contains("clamped")));
        assert!(s.phases.windows(2).all(|w| w[1].lambda > w[0].lambda));
        let expect: u64 = s.phases.iter().map(|ph| (ph.steps * ph.batch * 16) as u64).sum();
        assert_eq!(s.gradient_budget(), expect);
    }

    #[test]
    fn nonsmooth_steps_follow_closed_form() {
        let priv_ = PrivacyParams::practical(1.0, 1e-7, 0.1).unwrap();
        let mut sz = size(512, 16, 4);
        sz.smoothness = None;
        let opts = Alg3Options {
            nonsmooth_steps: true,
            ..Default::default()
        };
        let s = schedule_alg3(sz, priv_, opts).unwrap();
        let ln = (512.0f64 * 16.0 * 4.0).ln();
        for ph in &s.phases {
            let want = 1 + ((ph.users as f64).powf(0.75) * 4.0 * ln).ceil() as usize;
            assert_eq!(ph.steps, want);
        }
        assert!(schedule_alg3(sz, priv_, Alg3Options::default()).is_err());
    }

    proptest! {
        #[test]
        fn phase_users_never_exceed_n(n in 2usize..100_000, q in 0.01f64..3.0) {
            let total: usize = (1..=phase_count(n)).map(|i| phase_users(n, q, i)).sum();
            prop_assert!(total <= n);
        }

        #[test]
        fn alg1_budget_never_exceeds_nm(n in 64usize..20_000, m in 1usize..64, kappa in 0.05f64..1.0) {
            let priv_ = PrivacyParams::practical(1.0, 1e-5, kappa).unwrap();
            if let Ok(s) = schedule_alg1(size(n, m, 4), priv_, Alg1Options { q: Some(0.2), ..Default::default() }) {
                prop_assert!(s.gradient_budget() <= (n * m) as u64);
            }
        }
    }
}
