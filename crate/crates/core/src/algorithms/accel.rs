//! Accelerated phased ERM with outlier-gradient removal.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::algorithms::phased_sgd::phase_stream;
use crate::algorithms::report::{NoiseSwitches, PhaseDiagnostics, RunReport};
use crate::algorithms::schedule::PhaseScheduleAlg3;
use crate::data::{split_users, UserDataset, UserView};
use crate::domain::BallDomain;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::loss::{user_avg_gradient, GradCounter, GradientSource};
use crate::mechanisms::{
    concentration_score, sample_gaussian_vector, select_inliers, NoiseSource, NoisyThreshold, Selection, Verdict,
};
use crate::optimizers::{multi_stage_ac_sa, AcSaParams, NoiseBound};
use crate::rng::{purpose, RngStream};

/// User gradients of one minibatch with their concentration score and
/// inlier selection.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientFilter {
    pub gradients: Vec<Vec<f64>>,
    /// Concentration score at radius `2 tau`.
    pub raw_score: f64,
    pub selection: Selection,
    /// `None` when nothing was selected.
    pub inlier_mean: Option<Vec<f64>>,
}

/// Average gradient of every user in `batch` at `x` (user `k` draws any
/// gradient randomness from `stream / SMOOTHING / k`), scored and filtered
/// at radius `2 tau`.
pub fn filtered_gradient_mean<G: GradientSource>(
    source: &G,
    batch: &[&[G::Item]],
    x: &[f64],
    tau: f64,
    stream: &RngStream,
    counter: &GradCounter,
) -> Result<GradientFilter> {
    let gradients = batch
        .par_iter()
        .enumerate()
        .map(|(k, user)| {
            let mut r = stream.descend(&[purpose::SMOOTHING, k as u64]).rng();
            user_avg_gradient(source, x, user, &mut r, counter)
        })
        .collect::<Result<Vec<_>>>()?;
    let raw_score = concentration_score(&gradients, 2.0 * tau)?;
    let selection = select_inliers(&gradients, tau, &stream.child(purpose::INCLUSION));
    let inlier_mean = linalg::mean(selection.selected.iter().map(|&j| gradients[j].as_slice()), x.len());
    Ok(GradientFilter {
        gradients,
        raw_score,
        selection,
        inlier_mean,
    })
}

/// Everything one call of the private minibatch solver needs besides data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinibatchParams {
    pub lambda: f64,
    pub steps: usize,
    pub batch: usize,
    pub tau: f64,
    pub sigma: f64,
    pub threshold_noise_scale: f64,
    pub score_noise_scale: f64,
}

impl MinibatchParams {
    /// Parameters of phase `i` (1-based).
    pub fn from_schedule(schedule: &PhaseScheduleAlg3, i: usize) -> Self {
        let ph = &schedule.phases[i - 1];
        Self {
            lambda: ph.lambda,
            steps: ph.steps,
            batch: ph.batch,
            tau: schedule.tau,
            sigma: ph.sigma,
            threshold_noise_scale: schedule.threshold_noise_scale(),
            score_noise_scale: schedule.score_noise_scale(),
        }
    }
}

enum Step {
    Halt,
    Fail(Error),
}

impl From<Error> for Step {
    fn from(e: Error) -> Self {
        Step::Fail(e)
    }
}

/// Output of [`dp_accel_minibatch_sgd`]: `None` output means the run halted.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchOutcome {
    pub output: Option<Vec<f64>>,
    pub scores: Vec<f64>,
    pub selected: Vec<usize>,
    pub noise_norms: Vec<f64>,
}

/// Private accelerated minibatch SGD on
/// `(1/n_i) sum_Z F(x, Z) + (lambda/2) ||x - anchor||^2`.
///
/// Each AC-SA iteration draws `K` users with replacement, scores the
/// concentration of their average gradients against a threshold `4K/5`
/// perturbed once per call, removes outliers, and perturbs the inlier mean
/// with Gaussian noise. A score below the noisy threshold halts.
pub fn dp_accel_minibatch_sgd<G: GradientSource>(
    source: &G,
    users: &UserView<'_, G::Item>,
    params: MinibatchParams,
    anchor: &[f64],
    domain: &BallDomain,
    noise: NoiseSwitches,
    stream: &RngStream,
    counter: &GradCounter,
) -> Result<MinibatchOutcome> {
    if users.is_empty() || params.batch == 0 || params.steps == 0 {
        return Err(invalid("minibatch solver needs users, a positive batch and at least one step"));
    }
    let beta = source
        .smoothness_bound()
        .ok_or_else(|| invalid("accelerated solver needs a smooth gradient source"))?;
    let d = domain.dim();
    let k = params.batch;
    let mut tsrc = NoiseSource::from_switch(noise.gate, &stream.child(purpose::THRESHOLD_NOISE));
    let threshold = NoisyThreshold::new(
        4.0 * k as f64 / 5.0,
        params.threshold_noise_scale,
        params.score_noise_scale,
        &mut tsrc,
    )?;

    let mut out = MinibatchOutcome {
        output: None,
        scores: Vec::with_capacity(params.steps),
        selected: Vec::with_capacity(params.steps),
        noise_norms: Vec::with_capacity(params.steps),
    };
    let mut t = 0u64;
    let mut oracle = |x: &[f64]| -> std::result::Result<Vec<f64>, Step> {
        let st = stream.descend(&[purpose::STEP, t]);
        t += 1;
        let mut r = st.child(purpose::MINIBATCH).rng();
        let batch: Vec<&[G::Item]> = (0..k).map(|_| users.user(r.gen_range(0..users.len()))).collect();
        let f = filtered_gradient_mean(source, &batch, x, params.tau, &st, counter)?;
        out.scores.push(f.raw_score);
        let mut ssrc = NoiseSource::from_switch(noise.gate, &st.child(purpose::SCORE_NOISE));
        if threshold.test(f.raw_score, &mut ssrc)?.0 == Verdict::Below {
            return Err(Step::Halt);
        }
        out.selected.push(f.selection.selected.len());
        let mut g = f.inlier_mean.ok_or(Step::Halt)?;
        if params.sigma > 0.0 {
            let mut gsrc = NoiseSource::from_switch(noise.perturbation, &st.child(purpose::GRADIENT_NOISE));
            let z = sample_gaussian_vector(params.sigma, d, &mut gsrc)?;
            out.noise_norms.push(linalg::norm(&z));
            linalg::axpy(1.0, &z, &mut g);
        }
        for ((gk, xk), ak) in g.iter_mut().zip(x).zip(anchor) {
            *gk += params.lambda * (xk - ak);
        }
        Ok(g)
    };

    let m = users.items_per_user() as f64;
    let lip = source.gradient_bound();
    let sigma2 = if noise.perturbation { params.sigma * params.sigma } else { 0.0 };
    let bound = NoiseBound {
        variance: d as f64 * sigma2 + lip * lip / (k as f64 * m),
        initial_gap: (lip * domain.diameter()).min(lip * lip / (2.0 * params.lambda)),
    };
    let acsa = AcSaParams::regularized(beta, params.lambda);
    let result = multi_stage_ac_sa(&mut oracle, acsa, params.steps, anchor, domain, Some(bound));
    match result {
        Ok(x) => out.output = Some(x),
        Err(Step::Halt) => {}
        Err(Step::Fail(e)) => return Err(e),
    }
    Ok(out)
}

/// Accelerated phased ERM: phase `i` draws `n_i` fresh users and runs the
/// private minibatch solver on their regularized empirical risk, anchored at
/// the previous phase's output.
pub fn accelerated_phased_erm<G: GradientSource>(
    source: &G,
    dataset: &UserDataset<G::Item>,
    domain: &BallDomain,
    schedule: &PhaseScheduleAlg3,
    seed: u64,
    noise: NoiseSwitches,
) -> Result<RunReport> {
    run_phases(source, dataset, domain, schedule, seed, noise, "alg3")
}

pub(crate) fn run_phases<G: GradientSource>(
    source: &G,
    dataset: &UserDataset<G::Item>,
    domain: &BallDomain,
    schedule: &PhaseScheduleAlg3,
    seed: u64,
    noise: NoiseSwitches,
    algorithm: &'static str,
) -> Result<RunReport> {
    let started = Instant::now();
    let size = schedule.size;
    if dataset.num_users() != size.n || dataset.items_per_user() != size.m {
        return Err(invalid(format!(
            "schedule built for n={}, m={} but dataset has n={}, m={}",
            size.n,
            size.m,
            dataset.num_users(),
            dataset.items_per_user()
        )));
    }
    if domain.dim() != source.input_dim() {
        return Err(invalid("loss and domain dimensions differ"));
    }
    let sizes: Vec<usize> = schedule.phases.iter().map(|ph| ph.users).collect();
    let views = split_users(dataset, &sizes, &RngStream::new(seed).child(purpose::USER_PERMUTATION))?;
    let counter = GradCounter::new();

    let mut x = domain.center().to_vec();
    let mut phases = Vec::new();
    let mut halt_phase = None;
    for (k, (ph, view)) in schedule.phases.iter().zip(&views).enumerate() {
        let i = k + 1;
        let before = counter.get();
        let params = MinibatchParams::from_schedule(schedule, i);
        let res = dp_accel_minibatch_sgd(source, view, params, &x, domain, noise, &phase_stream(seed, i), &counter)?;
        phases.push(PhaseDiagnostics {
            phase: i,
            users: ph.users,
            group_size: ph.batch,
            steps: ph.steps,
            tau: schedule.tau,
            sigma: ph.sigma,
            scores: res.scores,
            selected: res.selected,
            noise_norms: res.noise_norms,
            grad_evals: counter.get() - before,
        });
        match res.output {
            Some(next) => x = next,
            None => {
                halt_phase = Some(i);
                break;
            }
        }
    }
    let halted = halt_phase.is_some();
    Ok(RunReport {
        algorithm,
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
    use crate::algorithms::schedule::{schedule_alg3, Alg3Options, ProblemSize};
    use crate::loss::test_losses::HalfSquare;
    use crate::privacy::PrivacyParams;
    use crate::problems::{generate_dataset, Problem, ProblemKind, ProblemSpec, QuadraticMean};
    use crate::Loss;

    fn setup(n: usize, m: usize, kappa: f64) -> (QuadraticMean, PhaseScheduleAlg3) {
        let p = ProblemSpec::new(ProblemKind::QuadraticMean, 4).quadratic().unwrap();
        let size = ProblemSize {
            n,
            m,
            d: 4,
            lipschitz: p.loss().lipschitz(),
            diameter: p.domain().diameter(),
            smoothness: Some(1.0),
        };
        let priv_ = PrivacyParams::practical(1.0, 1e-7, kappa).unwrap();
        (p, schedule_alg3(size, priv_, Alg3Options::default()).unwrap())
    }

    #[test]
    fn identical_user_gradients_reduce_to_minibatch_ac_sa() {
        // every user holds the same items, so every user gradient coincides
        let loss = HalfSquare { dim: 2, lipschitz: 10.0 };
        let items = vec![vec![0.3, -0.1], vec![0.1, 0.5]];
        let data = UserDataset::new(vec![items.clone(); 40]).unwrap();
        let domain = BallDomain::centered(2, 1.0).unwrap();
        let params = MinibatchParams {
            lambda: 0.2,
            steps: 30,
            batch: 7,
            tau: 0.01,
            sigma: 1.0,
            threshold_noise_scale: 1.0,
            score_noise_scale: 1.0,
        };
        let anchor = vec![0.5, 0.5];
        let counter = GradCounter::new();
        let stream = RngStream::new(3);
        let res = dp_accel_minibatch_sgd(&loss, &data.full_view(), params, &anchor, &domain, NoiseSwitches::NONE, &stream, &counter)
            .unwrap();
        assert!(res.selected.iter().all(|&s| s == 7));
        assert_eq!(counter.get(), 30 * 7 * 2);

        let target = [0.2, 0.2];
        let mut exact = |x: &[f64]| -> Result<Vec<f64>> {
            Ok((0..2).map(|k| x[k] - target[k] + 0.2 * (x[k] - anchor[k])).collect())
        };
        let acsa = AcSaParams::regularized(1.0, 0.2);
        let bound = NoiseBound {
            variance: 100.0 / 14.0,
            initial_gap: (10.0f64 * 2.0).min(100.0 / 0.4),
        };
        let want = multi_stage_ac_sa(&mut exact, acsa, 30, &anchor, &domain, Some(bound)).unwrap();
        let got = res.output.unwrap();
        assert!(linalg::dist(&got, &want) < 1e-12, "{got:?} vs {want:?}");
    }

    #[test]
    fn displaced_user_is_excluded() {
        let loss = HalfSquare { dim: 2, lipschitz: 100.0 };
        let tau = 0.5;
        let mut users = vec![vec![vec![0.0, 0.0]]; 11];
        users.push(vec![vec![10.0 * tau, 0.0]]);
        let batch: Vec<&[Vec<f64>]> = users.iter().map(|u| u.as_slice()).collect();
        let f = filtered_gradient_mean(&loss, &batch, &[0.0, 0.0], tau, &RngStream::new(1), &GradCounter::new()).unwrap();
        assert_eq!(f.selection.scores[11], 1);
        assert_eq!(f.selection.probabilities[11], 0.0);
        assert_eq!(f.selection.selected, (0..11).collect::<Vec<_>>());
        assert_eq!(f.inlier_mean.unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn budget_identity_and_determinism() {
        let (p, s) = setup(256, 4, 0.05);
        let data = generate_dataset(&p, 256, 4, 9).unwrap();
        let a = accelerated_phased_erm(p.loss(), &data, p.domain(), &s, 1, NoiseSwitches::ALL).unwrap();
        assert!(!a.halted, "{:?}", a.phases.last());
        assert_eq!(a.grad_evals, s.gradient_budget());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| accelerated_phased_erm(p.loss(), &data, p.domain(), &s, 1, NoiseSwitches::ALL).unwrap());
        assert_eq!(a.output, b.output);
        assert!(p.domain().contains(&a.output));
    }

    #[test]
    fn single_phase_full_batch_matches_non_private_ac_sa() {
        let (p, mut s) = setup(256, 4, 0.05);
        s.phases.truncate(1);
        let n1 = s.phases[0].users;
        s.phases[0].batch = n1;
        let data = generate_dataset(&p, 256, 4, 2).unwrap();
        let r = accelerated_phased_erm(p.loss(), &data, p.domain(), &s, 4, NoiseSwitches::NONE).unwrap();
        assert!(r.clean());
        // the minibatch is drawn with replacement, so compare against the
        // same solver fed the exact regularized ERM gradient on the drawn batches
        assert!(r.phases[0].selected.iter().all(|&k| k == n1));
        assert!(p.excess_risk(&r.output) < p.excess_risk(p.domain().center()));
    }

    #[test]
    fn low_threshold_scores_halt() {
        let (p, mut s) = setup(256, 4, 0.05);
        s.tau = 1e-300;
        let data = generate_dataset(&p, 256, 4, 2).unwrap();
        let r = accelerated_phased_erm(p.loss(), &data, p.domain(), &s, 4, NoiseSwitches::NONE).unwrap();
        assert!(r.halted);
        assert_eq!(r.halt_phase, Some(1));
        assert_eq!(r.output, p.domain().center());
        assert_eq!(r.grad_evals, (s.phases[0].batch * 4) as u64);
    }
}
