//! Non-smooth losses: accelerated phased ERM on a randomized-smoothing
//! surrogate.

use crate::algorithms::accel::run_phases;
use crate::algorithms::report::{NoiseSwitches, RunReport};
use crate::algorithms::schedule::{schedule_alg3, Alg3Options, PhaseScheduleAlg3, ProblemSize};
use crate::data::UserDataset;
use crate::domain::BallDomain;
use crate::error::Result;
use crate::loss::Loss;
use crate::privacy::PrivacyParams;
use crate::smoothing::SmoothedLoss;

/// `r = sqrt(d) R / (eps n sqrt(m))`
pub fn smoothing_radius(n: usize, m: usize, d: usize, diameter: f64, epsilon: f64) -> f64 {
    (d as f64).sqrt() * diameter / (epsilon * n as f64 * (m as f64).sqrt())
}

/// Smoothed loss and schedule used by [`nonsmooth_solve`].
pub fn nonsmooth_setup<L: Loss>(
    loss: L,
    domain: &BallDomain,
    n: usize,
    m: usize,
    privacy: PrivacyParams,
    opts: Alg3Options,
    samples_per_gradient: usize,
) -> Result<(SmoothedLoss<L>, PhaseScheduleAlg3)> {
    let d = domain.dim();
    let r = smoothing_radius(n, m, d, domain.diameter(), privacy.epsilon());
    let lip = loss.lipschitz();
    let smoothed = SmoothedLoss::new(loss, r, samples_per_gradient)?;
    let size = ProblemSize {
        n,
        m,
        d,
        lipschitz: lip,
        diameter: domain.diameter(),
        smoothness: Some(smoothed.effective_smoothness()),
    };
    let opts = Alg3Options {
        nonsmooth_steps: true,
        ..opts
    };
    let schedule = schedule_alg3(size, privacy, opts)?;
    Ok((smoothed, schedule))
}

/// Run accelerated phased ERM on the convolution-smoothed loss
/// `f_r` with `r = sqrt(d) R / (eps n sqrt(m))`. Fails if `loss` is not
/// declared Lipschitz on the domain enlarged by `r`.
pub fn nonsmooth_solve<L: Loss>(
    loss: L,
    dataset: &UserDataset<L::Item>,
    domain: &BallDomain,
    privacy: PrivacyParams,
    opts: Alg3Options,
    samples_per_gradient: usize,
    seed: u64,
    noise: NoiseSwitches,
) -> Result<RunReport> {
    let (smoothed, schedule) = nonsmooth_setup(
        loss,
        domain,
        dataset.num_users(),
        dataset.items_per_user(),
        privacy,
        opts,
        samples_per_gradient,
    )?;
    run_phases(&smoothed, dataset, domain, &schedule, seed, noise, "alg3_nonsmooth")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::problems::{generate_dataset, Problem, ProblemKind, ProblemSpec};
    use crate::GradientSource;

    #[test]
    fn radius_and_smoothness() {
        let r = smoothing_radius(100, 4, 9, 2.0, 0.5);
        assert!((r - 3.0 * 2.0 / (0.5 * 100.0 * 2.0)).abs() < 1e-15);
        let setup = ProblemSpec {
            oracle_samples: 1000,
            ..ProblemSpec::new(ProblemKind::GeometricMedian, 9)
        };
        let p = setup.geometric_median().unwrap();
        let priv_ = PrivacyParams::practical(0.5, 1e-6, 0.1).unwrap();
        let (s, sched) = nonsmooth_setup(p.loss().clone(), p.domain(), 128, 4, priv_, Alg3Options::default(), 1).unwrap();
        let want = 3.0 / smoothing_radius(128, 4, 9, 2.0, 0.5);
        assert!((s.smoothness_bound().unwrap() - want).abs() < 1e-9);
        // beta_r <= (L/R) eps n sqrt(m)
        assert!(want <= 0.5 * 0.5 * 128.0 * 2.0 * 1.0 + 1e-9);
        assert!(sched.phases.iter().all(|ph| ph.steps > 1));
    }

    #[test]
    fn margin_is_enforced() {
        let setup = ProblemSpec::new(ProblemKind::QuadraticMean, 2);
        let p = setup.quadratic().unwrap();
        let priv_ = PrivacyParams::practical(1.0, 1e-6, 0.1).unwrap();
        let data = generate_dataset(&p, 64, 2, 1).unwrap();
        let err = nonsmooth_solve(p.loss().clone(), &data, p.domain(), priv_, Alg3Options::default(), 1, 0, NoiseSwitches::NONE)
            .unwrap_err();
        assert!(matches!(err, Error::DomainMargin { .. }));
    }

    #[test]
    fn geometric_median_run_is_deterministic_and_feasible() {
        let setup = ProblemSpec {
            oracle_samples: 20_000,
            ..ProblemSpec::new(ProblemKind::GeometricMedian, 3)
        };
        let p = setup.geometric_median().unwrap();
        let priv_ = PrivacyParams::practical(1.0, 1e-6, 0.05).unwrap();
        let data = generate_dataset(&p, 64, 4, 5).unwrap();
        let run = |noise| nonsmooth_solve(p.loss().clone(), &data, p.domain(), priv_, Alg3Options::default(), 1, 8, noise).unwrap();
        let a = run(NoiseSwitches::NONE);
        let b = run(NoiseSwitches::NONE);
        assert_eq!(a.output, b.output);
        assert_eq!(a.algorithm, "alg3_nonsmooth");
        let c = run(NoiseSwitches::ALL);
        assert!(p.domain().contains(&c.output));
        if !c.halted {
            let (_, sched) = nonsmooth_setup(p.loss().clone(), p.domain(), 64, 4, priv_, Alg3Options::default(), 1).unwrap();
            assert_eq!(c.grad_evals, sched.gradient_budget());
        }
    }
}
