//! Criterion benchmarks for the solvers and the outlier filter.

use criterion::{black_box, BenchmarkId, Criterion};

use userdp_core::algorithms::{
    accelerated_phased_erm, nonsmooth_solve, phased_sgd, schedule_alg1, schedule_alg3, Alg1Options, Alg3Options,
    NoiseSwitches, ProblemSize,
};
use userdp_core::mechanisms::{concentration_score, filter_outliers, NoiseSource, ScoreGate};
use userdp_core::problems::{generate_dataset, Problem, ProblemKind, ProblemSpec};
use userdp_core::smoothing::sample_uniform_ball;
use userdp_core::{Loss, PrivacyParams, RngStream};

fn size_of<P: Problem>(p: &P, n: usize, m: usize) -> ProblemSize {
    ProblemSize {
        n,
        m,
        d: p.domain().dim(),
        lipschitz: p.loss().lipschitz(),
        diameter: p.domain().diameter(),
        smoothness: p.loss().smoothness().beta(),
    }
}

fn points(c: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(1).rng();
    (0..c).map(|_| sample_uniform_ball(1.0, d, &mut rng)).collect()
}

pub fn filter(c: &mut Criterion) {
    let mut g = c.benchmark_group("filter");
    for size in [32, 128, 512] {
        let pts = points(size, 8);
        g.bench_with_input(BenchmarkId::new("concentration_score", size), &pts, |b, pts| {
            b.iter(|| concentration_score(black_box(pts), 0.5).unwrap())
        });
        let gate = ScoreGate {
            threshold: 0.8 * size as f64,
            noise_scale: 0.2,
        };
        let stream = RngStream::new(2);
        g.bench_with_input(BenchmarkId::new("filter_outliers", size), &pts, |b, pts| {
            b.iter(|| {
                let mut src = NoiseSource::seeded(&stream);
                filter_outliers(black_box(pts), 1.0, gate, &mut src, &stream).unwrap()
            })
        });
    }
    g.finish();
}

pub fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solvers");
    g.sample_size(10);

    let p = ProblemSpec::new(ProblemKind::QuadraticMean, 8).quadratic().unwrap();
    for n in [2048, 8192] {
        let m = 16;
        let data = generate_dataset(&p, n, m, 3).unwrap();
        let s1 = schedule_alg1(size_of(&p, n, m), PrivacyParams::practical(1.0, 1e-5, 1.0).unwrap(), Alg1Options::default()).unwrap();
        g.bench_with_input(BenchmarkId::new("phased_sgd", n), &data, |b, data| {
            b.iter(|| phased_sgd(p.loss(), data, p.domain(), &s1, 7, NoiseSwitches::ALL).unwrap())
        });
        let opts = Alg3Options {
            c_tau: Some(0.1),
            ..Default::default()
        };
        let s3 = schedule_alg3(size_of(&p, n, m), PrivacyParams::practical(1.0, 1e-6, 0.1).unwrap(), opts).unwrap();
        g.bench_with_input(BenchmarkId::new("accelerated_phased_erm", n), &data, |b, data| {
            b.iter(|| accelerated_phased_erm(p.loss(), data, p.domain(), &s3, 7, NoiseSwitches::ALL).unwrap())
        });
    }

    let gm = ProblemSpec::new(ProblemKind::GeometricMedian, 4).geometric_median().unwrap();
    let data = generate_dataset(&gm, 512, 16, 3).unwrap();
    let privacy = PrivacyParams::practical(1.0, 1e-6, 0.1).unwrap();
    let opts = Alg3Options {
        c_tau: Some(0.3),
        ..Default::default()
    };
    g.bench_function("nonsmooth_solve/512", |b| {
        b.iter(|| nonsmooth_solve(gm.loss().clone(), &data, gm.domain(), privacy, opts, 1, 7, NoiseSwitches::ALL).unwrap())
    });
    g.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    filter(c);
    solvers(c);
}
