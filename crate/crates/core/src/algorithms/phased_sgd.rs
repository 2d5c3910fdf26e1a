//! Phased SGD with outlier-iterate removal and output perturbation.

use std::time::Instant;

use rayon::prelude::*;

use crate::algorithms::report::{NoiseSwitches, PhaseDiagnostics, RunReport};
use crate::algorithms::schedule::PhaseScheduleAlg1;
use crate::data::{split_users, UserDataset, UserView};
use crate::domain::BallDomain;
use crate::error::{invalid, Result};
use crate::linalg;
use crate::loss::{GradCounter, GradientSource};
use crate::mechanisms::{filter_outliers, sample_gaussian_vector, ConcentrationReport, NoiseSource, ScoreGate};
use crate::optimizers::{one_pass_sgd, SgdConfig};
use crate::rng::{purpose, RngStream};

/// Result of the private averaging step of one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Alg1PhaseOutcome {
    /// Average SGD iterate of each group.
    pub iterates: Vec<Vec<f64>>,
    pub concentration: ConcentrationReport,
    /// Mean of the selected iterates; `None` when the gate failed or no
    /// iterate survived removal.
    pub inlier_mean: Option<Vec<f64>>,
}

/// Parameters of one phase as seen by [`alg1_phase`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alg1PhaseParams {
    pub stepsize: f64,
    pub tau: f64,
    pub gate: ScoreGate,
}

/// Run SGD in every group from `start`, privately test concentration of the
/// resulting iterates and average the inliers. Group `j` uses the stream
/// `stream / SGD_ORDER / j`; score noise and inclusion uniforms have their
/// own children of `stream`.
pub fn alg1_phase<G: GradientSource>(
    source: &G,
    groups: &[UserView<'_, G::Item>],
    start: &[f64],
    domain: &BallDomain,
    params: Alg1PhaseParams,
    gate_noise: bool,
    stream: &RngStream,
    counter: &GradCounter,
) -> Result<Alg1PhaseOutcome> {
    let cfg = SgdConfig {
        stepsize: params.stepsize,
        start: start.to_vec(),
        domain: domain.clone(),
    };
    let iterates = groups
        .par_iter()
        .enumerate()
        .map(|(j, g)| one_pass_sgd(source, g, &cfg, &stream.descend(&[purpose::SGD_ORDER, j as u64]), counter))
        .collect::<Result<Vec<_>>>()?;
    let mut score_noise = NoiseSource::from_switch(gate_noise, &stream.child(purpose::SCORE_NOISE));
    let concentration = filter_outliers(
        &iterates,
        params.tau,
        params.gate,
        &mut score_noise,
        &stream.child(purpose::INCLUSION),
    )?;
    let inlier_mean = if concentration.passed {
        linalg::mean(concentration.selected.iter().map(|&j| iterates[j].as_slice()), domain.dim())
    } else {
        None
    };
    Ok(Alg1PhaseOutcome {
        iterates,
        concentration,
        inlier_mean,
    })
}

/// Stream of phase `i` (1-based) under `seed`.
pub fn phase_stream(seed: u64, phase: usize) -> RngStream {
    RngStream::new(seed).descend(&[purpose::PHASE, phase as u64])
}

/// Disjoint user sets of every phase, each split into its groups.
pub fn alg1_partition<'a, Z>(
    dataset: &'a UserDataset<Z>,
    schedule: &PhaseScheduleAlg1,
    seed: u64,
) -> Result<Vec<Vec<UserView<'a, Z>>>> {
    let sizes: Vec<usize> = schedule.phases.iter().map(|ph| schedule.groups * ph.group_users).collect();
    let stream = RngStream::new(seed).child(purpose::USER_PERMUTATION);
    split_users(dataset, &sizes, &stream)?
        .into_iter()
        .zip(&schedule.phases)
        .map(|(view, ph)| view.chunks(&vec![ph.group_users; schedule.groups]))
        .collect()
}

fn check_inputs<Z>(dataset: &UserDataset<Z>, domain: &BallDomain, dim: usize, n: usize, m: usize) -> Result<()> {
    if dataset.num_users() != n || dataset.items_per_user() != m {
        return Err(invalid(format!(
            "schedule built for n={n}, m={m} but dataset has n={}, m={}",
            dataset.num_users(),
            dataset.items_per_user()
        )));
    }
    if domain.dim() != dim {
        return Err(invalid("loss and domain dimensions differ"));
    }
    Ok(())
}

/// Phased SGD: in each phase, `C` groups run one-pass SGD from the previous
/// output, the group iterates pass through private outlier removal, and the
/// inlier mean is perturbed with Gaussian noise and projected. A failed
/// gate halts the run with the domain center as output.
pub fn phased_sgd<G: GradientSource>(
    source: &G,
    dataset: &UserDataset<G::Item>,
    domain: &BallDomain,
    schedule: &PhaseScheduleAlg1,
    seed: u64,
    noise: NoiseSwitches,
) -> Result<RunReport> {
    let started = Instant::now();
    let size = schedule.size;
    check_inputs(dataset, domain, source.input_dim(), size.n, size.m)?;
    let partition = alg1_partition(dataset, schedule, seed)?;
    let counter = GradCounter::new();
    let gate = ScoreGate {
        threshold: schedule.score_threshold(),
        noise_scale: schedule.score_noise_scale(),
    };

    let mut x = domain.center().to_vec();
    let mut phases = Vec::new();
    let mut halt_phase = None;
    for (k, (ph, groups)) in schedule.phases.iter().zip(&partition).enumerate() {
        let i = k + 1;
        let stream = phase_stream(seed, i);
        let before = counter.get();
        let params = Alg1PhaseParams {
            stepsize: ph.stepsize,
            tau: ph.tau,
            gate,
        };
        let outcome = alg1_phase(source, groups, &x, domain, params, noise.gate, &stream, &counter)?;
        let mut diag = PhaseDiagnostics {
            phase: i,
            users: ph.users,
            group_size: schedule.groups,
            steps: ph.steps,
            tau: ph.tau,
            sigma: ph.sigma,
            scores: vec![outcome.concentration.raw_score],
            selected: vec![outcome.concentration.selected.len()],
            noise_norms: Vec::new(),
            grad_evals: 0,
        };
        let Some(mean) = outcome.inlier_mean else {
            diag.grad_evals = counter.get() - before;
            phases.push(diag);
            halt_phase = Some(i);
            break;
        };
        let z = if ph.sigma > 0.0 {
            let mut src = NoiseSource::from_switch(noise.perturbation, &stream.child(purpose::OUTPUT_NOISE));
            sample_gaussian_vector(ph.sigma, domain.dim(), &mut src)?
        } else {
            vec![0.0; domain.dim()]
        };
        diag.noise_norms.push(linalg::norm(&z));
        x = domain.project(&linalg::add(&mean, &z))?;
        diag.grad_evals = counter.get() - before;
        phases.push(diag);
    }

    let halted = halt_phase.is_some();
    Ok(RunReport {
        algorithm: "alg1",
        output: if halted { domain.center().to_vec() } else { x },
        halted,
        halt_phase,
        grad_evals: counter.get(),
        phases,
        warnings: schedule.warnings.clone(),
        wall_time: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::schedule::{schedule_alg1, Alg1Options, ProblemSize};
    use crate::loss::test_losses::HalfSquare;
    use crate::privacy::PrivacyParams;
    use crate::problems::{generate_dataset, ProblemKind, ProblemSpec};

    fn quadratic_setup(n: usize, m: usize, kappa: f64) -> (crate::problems::QuadraticMean, PhaseScheduleAlg1) {
        use crate::problems::Problem;
        use crate::Loss;
        let p = ProblemSpec::new(ProblemKind::QuadraticMean, 4).quadratic().unwrap();
        let size = ProblemSize {
            n,
            m,
            d: 4,
            lipschitz: p.loss().lipschitz(),
            diameter: p.domain().diameter(),
            smoothness: Some(1.0),
        };
        let priv_ = PrivacyParams::practical(1.0, 1e-5, kappa).unwrap();
        let s = schedule_alg1(size, priv_, Alg1Options { q: Some(0.3), ..Default::default() }).unwrap();
        (p, s)
    }

    #[test]
    fn single_group_single_phase_is_projected_sgd() {
        // one phase cannot hold a user when n < 4, so trim a longer schedule
        let loss = HalfSquare { dim: 1, lipschitz: 4.0 };
        let users: Vec<Vec<Vec<f64>>> = (0..16).map(|u| vec![vec![u as f64 / 8.0 - 1.0]; 3]).collect();
        let data = UserDataset::new(users).unwrap();
        let domain = BallDomain::centered(1, 2.0).unwrap();
        let size = ProblemSize {
            n: 16,
            m: 3,
            d: 1,
            lipschitz: 4.0,
            diameter: 4.0,
            smoothness: Some(1.0),
        };
        let priv_ = PrivacyParams::practical(1.0, 0.5, 0.01).unwrap();
        let opts = Alg1Options {
            q: Some(0.32),
            eta: Some(0.3),
            ..Default::default()
        };
        let mut s = schedule_alg1(size, priv_, opts).unwrap();
        s.phases.truncate(1);
        assert_eq!((s.groups, s.phases[0].group_users), (1, 2));
        let rep = phased_sgd(&loss, &data, &domain, &s, 11, NoiseSwitches::NONE).unwrap();

        let groups = alg1_partition(&data, &s, 11).unwrap();
        let cfg = SgdConfig {
            stepsize: s.phases[0].stepsize,
            start: vec![0.0],
            domain: domain.clone(),
        };
        let stream = phase_stream(11, 1).descend(&[purpose::SGD_ORDER, 0]);
        let direct = one_pass_sgd(&loss, &groups[0][0], &cfg, &stream, &GradCounter::new()).unwrap();
        assert!(!rep.halted);
        assert_eq!(rep.output, domain.project(&direct).unwrap());
        assert_eq!(rep.grad_evals, 6);
    }

    #[test]
    fn budget_identity_and_determinism() {
        let (p, s) = quadratic_setup(1024, 4, 0.3);
        let data = generate_dataset(&p, 1024, 4, 1).unwrap();
        use crate::problems::Problem;
        let a = phased_sgd(p.loss(), &data, p.domain(), &s, 5, NoiseSwitches::NONE).unwrap();
        assert_eq!(a.grad_evals, s.gradient_budget());
        assert!(a.grad_evals <= 1024 * 4);
        assert!(a.clean());
        let b = phased_sgd(p.loss(), &data, p.domain(), &s, 5, NoiseSwitches::NONE).unwrap();
        assert_eq!(a.output, b.output);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| phased_sgd(p.loss(), &data, p.domain(), &s, 5, NoiseSwitches::ALL).unwrap());
        let d = phased_sgd(p.loss(), &data, p.domain(), &s, 5, NoiseSwitches::ALL).unwrap();
        assert_eq!(c.output, d.output);
        assert!(p.domain().contains(&d.output));
    }

    #[test]
    fn failed_gate_halts_at_center() {
        let (p, mut s) = quadratic_setup(1024, 4, 0.3);
        // a radius nobody can meet: only diagonal pairs count
        for ph in &mut s.phases {
            ph.tau = 1e-300;
        }
        let data = generate_dataset(&p, 1024, 4, 2).unwrap();
        use crate::problems::Problem;
        let r = phased_sgd(p.loss(), &data, p.domain(), &s, 3, NoiseSwitches::NONE).unwrap();
        assert!(r.halted);
        assert_eq!(r.halt_phase, Some(1));
        assert_eq!(r.output, p.domain().center());
        assert_eq!(r.phases.len(), 1);
    }

    #[test]
    fn mismatched_dataset_is_rejected() {
        let (p, s) = quadratic_setup(1024, 4, 0.3);
        let data = generate_dataset(&p, 1000, 4, 2).unwrap();
        use crate::problems::Problem;
        assert!(phased_sgd(p.loss(), &data, p.domain(), &s, 3, NoiseSwitches::NONE).is_err());
    }
}
