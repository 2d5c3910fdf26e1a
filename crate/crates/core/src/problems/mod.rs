//! Synthetic stochastic convex problems with data generators and
//! population-risk oracles.

mod geomedian;
mod law;
mod logistic;
pub mod oracle;
mod quadratic;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::UserDataset;
use crate::domain::BallDomain;
use crate::error::{invalid, Result};
use crate::loss::Loss;
use crate::rng::{purpose, RngStream};

pub use geomedian::{DistanceLoss, GeometricMedian};
pub use law::TruncatedGaussian;
pub use logistic::{LabeledPoint, Logistic, LogisticLoss};
pub use oracle::{OracleCache, OracleRecord, Optimum};
pub use quadratic::{QuadraticMean, SquaredDistanceLoss};

/// Item type of a problem's loss.
pub type ItemOf<P> = <<P as Problem>::Loss as Loss>::Item;

pub trait Problem: Sync {
    type Loss: Loss;

    fn name(&self) -> &'static str;
    fn loss(&self) -> &Self::Loss;
    fn domain(&self) -> &BallDomain;
    fn sample_item(&self, rng: &mut ChaCha8Rng) -> ItemOf<Self>;
    fn population_risk(&self, x: &[f64]) -> f64;
    /// Minimum of the population risk over the domain. Oracle problems
    /// compute it on first use.
    fn optimum(&self) -> Optimum;
    /// Install a previously computed optimum (e.g. from an
    /// [`OracleCache`]). A no-op for closed-form problems.
    fn prime_optimum(&self, _optimum: Optimum) {}
    /// `(seed, samples)` of the Monte-Carlo oracle, if there is one.
    fn oracle_info(&self) -> Option<(u64, usize)> {
        None
    }
    /// Text fingerprint of every parameter the oracle depends on.
    fn describe(&self) -> String;

    fn excess_risk(&self, x: &[f64]) -> f64 {
        self.population_risk(x) - self.optimum().value
    }
}

/// Fixed Monte-Carlo sample used as a stand-in for the data law.
#[derive(Debug, Clone)]
pub struct MonteCarloSample<Z> {
    items: Vec<Z>,
    seed: u64,
}

const DRAW_CHUNK: usize = 4096;

impl<Z: Send> MonteCarloSample<Z> {
    /// Chunk `k` of the sample is drawn from its own stream, so the sample
    /// does not depend on the thread count.
    pub fn draw<F>(samples: usize, seed: u64, f: F) -> Self
    where
        F: Fn(&mut ChaCha8Rng) -> Z + Sync,
    {
        let root = RngStream::new(seed).child(purpose::ORACLE);
        let chunks = samples.div_ceil(DRAW_CHUNK);
        let items = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|k| {
                let mut r = root.child(k as u64).rng();
                let len = DRAW_CHUNK.min(samples - k * DRAW_CHUNK);
                (0..len).map(|_| f(&mut r)).collect::<Vec<_>>()
            })
            .collect();
        Self { items, seed }
    }
}

impl<Z> MonteCarloSample<Z> {
    pub fn items(&self) -> &[Z] {
        &self.items
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Items of one user drawn from `stream`.
pub fn generate_user<P: Problem>(problem: &P, m: usize, stream: &RngStream) -> Vec<ItemOf<P>> {
    let mut r = stream.rng();
    (0..m).map(|_| problem.sample_item(&mut r)).collect()
}

/// `n` users of `m` i.i.d. items each. User `u` is drawn from its own stream.
pub fn generate_dataset<P: Problem>(problem: &P, n: usize, m: usize, seed: u64) -> Result<UserDataset<ItemOf<P>>>
where
    ItemOf<P>: Send,
{
    if n == 0 || m == 0 {
        return Err(invalid("datasets need at least one user and one item per user"));
    }
    let root = RngStream::new(seed).child(purpose::DATA);
    let users = (0..n)
        .into_par_iter()
        .map(|u| generate_user(problem, m, &root.child(u as u64)))
        .collect();
    UserDataset::new(users)
}

/// Look the problem's optimum up in `cache`, computing and appending it on
/// a miss. Closed-form problems bypass the cache.
pub fn cached_optimum<P: Problem>(problem: &P, cache: &OracleCache) -> std::io::Result<Optimum> {
    let Some((seed, samples)) = problem.oracle_info() else {
        return Ok(problem.optimum());
    };
    let hash = oracle::params_hash(&problem.describe());
    if let Some(rec) = cache.lookup(problem.name(), &hash)? {
        let optimum = Optimum {
            value: rec.value,
            argmin: Vec::new(),
            std_err: rec.std_err,
        };
        problem.prime_optimum(optimum);
        return Ok(problem.optimum());
    }
    let optimum = problem.optimum();
    cache.append(&OracleRecord {
        name: problem.name().to_string(),
        params_hash: hash,
        value: optimum.value,
        std_err: optimum.std_err,
        seed,
        samples,
    })?;
    Ok(optimum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    QuadraticMean,
    GeometricMedian,
    Logistic,
}

impl std::str::FromStr for ProblemKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic_mean" => Ok(Self::QuadraticMean),
            "geometric_median" => Ok(Self::GeometricMedian),
            "logistic" => Ok(Self::Logistic),
            other => Err(invalid(format!("unknown problem {other:?}"))),
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::QuadraticMean => "quadratic_mean",
            Self::GeometricMedian => "geometric_median",
            Self::Logistic => "logistic",
        })
    }
}

/// Scalar description of a synthetic problem. The domain is the centered
/// ball of diameter `diameter`; the law is a truncated Gaussian around
/// `mean_norm / sqrt(d) * (1, ..., 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    pub diameter: f64,
    pub mean_norm: f64,
    pub scale: f64,
    pub truncation: f64,
    /// Extra radius on which the quadratic loss is declared Lipschitz.
    pub margin: f64,
    pub oracle_samples: usize,
    pub oracle_seed: u64,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            diameter: 2.0,
            mean_norm: 0.5,
            scale: 0.5,
            truncation: 2.0,
            margin: 0.0,
            oracle_samples: 1_000_000,
            oracle_seed: 0x5eed,
        }
    }

    pub fn domain(&self) -> Result<BallDomain> {
        BallDomain::centered(self.dim, self.diameter / 2.0)
    }

    pub fn law(&self) -> Result<TruncatedGaussian> {
        if self.dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let c = self.mean_norm / (self.dim as f64).sqrt();
        TruncatedGaussian::new(vec![c; self.dim], self.scale, self.truncation)
    }

    pub fn quadratic(&self) -> Result<QuadraticMean> {
        QuadraticMean::new(self.domain()?, self.law()?, self.margin)
    }

    pub fn geometric_median(&self) -> Result<GeometricMedian> {
        Ok(GeometricMedian::new(self.domain()?, self.law()?, self.oracle_samples, self.oracle_seed))
    }

    /// Features are centered; labels follow a logistic model whose
    /// parameter is the law mean vector.
    pub fn logistic(&self) -> Result<Logistic> {
        let law = self.law()?;
        let truth = law.mean().to_vec();
        let features = TruncatedGaussian::new(vec![0.0; self.dim], self.scale, self.truncation)?;
        Ok(Logistic::new(self.domain()?, features, truth, self.oracle_samples, self.oracle_seed))
    }
}
