use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use userdp_core::algorithms::{
    accelerated_phased_erm, nonsmooth_setup, nonsmooth_solve, phased_sgd, schedule_alg1, schedule_alg3,
    NoiseSwitches, PhaseScheduleAlg1, PhaseScheduleAlg3, ProblemSize, RunReport,
};
use userdp_core::audit::{median, quantile};
use userdp_core::problems::{cached_optimum, generate_dataset, ItemOf, OracleCache, Problem, ProblemKind};
use userdp_core::rng::purpose;
use userdp_core::{Loss, RngStream};

use crate::config::{AlgorithmKind, ExperimentConfig};

pub const VERSION_LINE: &str = "userdp-sco-csv v1";
pub const COLUMNS: &str = "algorithm,n,m,d,eps,delta,kappa,seed,excess_risk,grad_evals,halted,halt_phase,wall_time";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub algorithm: String,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    pub seed: u64,
    pub excess_risk: f64,
    pub grad_evals: u64,
    pub halted: bool,
    pub halt_phase: Option<usize>,
    /// Seconds.
    pub wall_time: f64,
}

impl Row {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6}",
            self.algorithm,
            self.n,
            self.m,
            self.d,
            self.eps,
            self.delta,
            self.kappa,
            self.seed,
            self.excess_risk,
            self.grad_evals,
            self.halted,
            self.halt_phase.map(|p| p.to_string()).unwrap_or_default(),
            self.wall_time
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return None;
        }
        Some(Self {
            algorithm: f[0].to_string(),
            n: f[1].parse().ok()?,
            m: f[2].parse().ok()?,
            d: f[3].parse().ok()?,
            eps: f[4].parse().ok()?,
            delta: f[5].parse().ok()?,
            kappa: f[6].parse().ok()?,
            seed: f[7].parse().ok()?,
            excess_risk: f[8].parse().ok()?,
            grad_evals: f[9].parse().ok()?,
            halted: f[10].parse().ok()?,
            halt_phase: if f[11].is_empty() { None } else { Some(f[11].parse().ok()?) },
            wall_time: f[12].parse().ok()?,
        })
    }
}

enum Schedule {
    Alg1(PhaseScheduleAlg1),
    Alg3(PhaseScheduleAlg3),
}

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

fn build_schedule<P: Problem>(p: &P, cfg: &ExperimentConfig) -> Result<Schedule>
where
    P::Loss: Clone,
    ItemOf<P>: Send,
{
    let privacy = cfg.privacy()?;
    let size = size_of(p, cfg.n, cfg.m);
    Ok(match cfg.algorithm {
        AlgorithmKind::Alg1 => Schedule::Alg1(schedule_alg1(size, privacy, cfg.alg1)?),
        AlgorithmKind::Alg3 => Schedule::Alg3(schedule_alg3(size, privacy, cfg.alg3)?),
        AlgorithmKind::Alg3Nonsmooth => {
            let (_, s) = nonsmooth_setup(p.loss().clone(), p.domain(), cfg.n, cfg.m, privacy, cfg.alg3, cfg.k)?;
            Schedule::Alg3(s)
        }
    })
}

fn run_seed<P: Problem>(p: &P, cfg: &ExperimentConfig, schedule: &Schedule, seed: u64) -> Result<RunReport>
where
    P::Loss: Clone,
    ItemOf<P>: Send,
{
    let data_seed = RngStream::new(seed).child(purpose::DATA).rng_seed();
    let data = generate_dataset(p, cfg.n, cfg.m, data_seed)?;
    let noise = NoiseSwitches::ALL;
    let report = match (cfg.algorithm, schedule) {
        (AlgorithmKind::Alg1, Schedule::Alg1(s)) => phased_sgd(p.loss(), &data, p.domain(), s, seed, noise)?,
        (AlgorithmKind::Alg3, Schedule::Alg3(s)) => accelerated_phased_erm(p.loss(), &data, p.domain(), s, seed, noise)?,
        (AlgorithmKind::Alg3Nonsmooth, _) => {
            nonsmooth_solve(p.loss().clone(), &data, p.domain(), cfg.privacy()?, cfg.alg3, cfg.k, seed, noise)?
        }
        _ => unreachable!("schedule built for another algorithm"),
    };
    Ok(report)
}

/// One sweep point: build the problem once, then run every seed.
fn run_point<P: Problem>(p: &P, cfg: &ExperimentConfig, cache: &OracleCache) -> Result<Vec<Row>>
where
    P::Loss: Clone,
    ItemOf<P>: Send,
{
    let schedule = build_schedule(p, cfg)?;
    let optimum = cached_optimum(p, cache).context("oracle cache")?;
    cfg.seed_list()
        .into_par_iter()
        .map(|seed| {
            let started = Instant::now();
            let r = run_seed(p, cfg, &schedule, seed)?;
            Ok(Row {
                algorithm: cfg.algorithm.to_string(),
                n: cfg.n,
                m: cfg.m,
                d: cfg.problem.dim,
                eps: cfg.epsilon,
                delta: cfg.delta,
                kappa: cfg.kappa,
                seed,
                excess_risk: p.population_risk(&r.output) - optimum.value,
                grad_evals: r.grad_evals,
                halted: r.halted,
                halt_phase: r.halt_phase,
                wall_time: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn schedule_warnings(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    fn get<P: Problem>(p: &P, cfg: &ExperimentConfig) -> Result<Vec<String>>
    where
        P::Loss: Clone,
        ItemOf<P>: Send,
    {
        Ok(match build_schedule(p, cfg)? {
            Schedule::Alg1(s) => s.warnings,
            Schedule::Alg3(s) => s.warnings,
        })
    }
    let setup = &cfg.problem;
    match setup.kind {
        ProblemKind::QuadraticMean => get(&setup.quadratic()?, cfg),
        ProblemKind::GeometricMedian => get(&setup.geometric_median()?, cfg),
        ProblemKind::Logistic => get(&setup.logistic()?, cfg),
    }
}

fn dispatch(cfg: &ExperimentConfig, cache: &OracleCache) -> Result<Vec<Row>> {
    let setup = &cfg.problem;
    match setup.kind {
        ProblemKind::QuadraticMean => run_point(&setup.quadratic()?, cfg, cache),
        ProblemKind::GeometricMedian => run_point(&setup.geometric_median()?, cfg, cache),
        ProblemKind::Logistic => run_point(&setup.logistic()?, cfg, cache),
    }
}

/// Header lines: version, mode and the verbatim configuration.
pub fn header(cfg: &ExperimentConfig, notes: &[String]) -> String {
    let mut h = String::new();
    writeln!(h, "{VERSION_LINE}").unwrap();
    writeln!(h, "# mode = {}", cfg.mode).unwrap();
    for n in notes {
        writeln!(h, "# {n}").unwrap();
    }
    writeln!(h, "# config-begin").unwrap();
    for line in cfg.source.lines() {
        writeln!(h, "# {line}").unwrap();
    }
    writeln!(h, "# config-end").unwrap();
    h
}

pub fn output_path(config_path: &Path, cfg: &ExperimentConfig, out_dir: &Path) -> PathBuf {
    let name = cfg.output.clone().unwrap_or_else(|| {
        let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        format!("{stem}.csv")
    });
    out_dir.join(name)
}

pub fn cmd_run(config_path: &Path, cfg: &ExperimentConfig, out_dir: &Path, notes: &[String]) -> Result<PathBuf> {
    let points = cfg.sweep_points()?;
    let seeds = cfg.seed_list().len();
    eprintln!(
        "sweep: {} point(s) x {seeds} seed(s) = {} run(s)",
        points.len(),
        points.len() * seeds
    );
    // fail on the first infeasible point before any work is done
    for p in &points {
        for w in schedule_warnings(p)? {
            eprintln!("warning (n={}, m={}): {w}", p.n, p.m);
        }
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let cache = OracleCache::new(out_dir.join("oracle_cache.txt"));

    let mut rows = Vec::new();
    for p in &points {
        rows.extend(dispatch(p, &cache)?);
    }
    let mut text = header(cfg, notes);
    writeln!(text, "{COLUMNS}").unwrap();
    for r in &rows {
        writeln!(text, "{}", r.to_csv()).unwrap();
    }
    let csv = output_path(config_path, cfg, out_dir);
    fs::write(&csv, text).with_context(|| format!("writing {}", csv.display()))?;
    print!("{}", summary_table(&rows));
    println!("wrote {} row(s) to {}", rows.len(), csv.display());
    Ok(csv)
}

/// Identifying columns of a sweep point.
pub fn point_key(r: &Row) -> (String, usize, usize, usize, String, String, String) {
    (
        r.algorithm.clone(),
        r.n,
        r.m,
        r.d,
        r.eps.to_string(),
        r.delta.to_string(),
        r.kappa.to_string(),
    )
}

/// Rows grouped by sweep point in first-seen order.
pub fn group_rows(rows: &[Row]) -> Vec<Vec<&Row>> {
    let mut keys = Vec::new();
    let mut groups: Vec<Vec<&Row>> = Vec::new();
    for r in rows {
        let k = point_key(r);
        match keys.iter().position(|x| *x == k) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(k);
                groups.push(vec![r]);
            }
        }
    }
    groups
}

pub fn summary_table(rows: &[Row]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<15} {:>7} {:>5} {:>4} {:>6} {:>8} {:>6} {:>5} {:>12} {:>12} {:>12} {:>6} {:>12}",
        "algorithm", "n", "m", "d", "eps", "delta", "kappa", "seeds", "median_risk", "q25", "q75", "halted", "median_evals"
    )
    .unwrap();
    for g in group_rows(rows) {
        let r0 = g[0];
        let risks: Vec<f64> = g.iter().map(|r| r.excess_risk).collect();
        let evals: Vec<f64> = g.iter().map(|r| r.grad_evals as f64).collect();
        writeln!(
            out,
            "{:<15} {:>7} {:>5} {:>4} {:>6} {:>8} {:>6} {:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>6} {:>12}",
            r0.algorithm,
            r0.n,
            r0.m,
            r0.d,
            r0.eps,
            r0.delta,
            r0.kappa,
            g.len(),
            median(&risks),
            quantile(&risks, 0.25),
            quantile(&risks, 0.75),
            g.iter().filter(|r| r.halted).count(),
            median(&evals)
        )
        .unwrap();
    }
    out
}

/// Read the data rows of a results CSV; empty files hold no rows.
pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(first) = lines.next() else {
        return Ok(Vec::new());
    };
    if first.trim() != VERSION_LINE {
        bail!(SchemaError(format!("{}: expected '{VERSION_LINE}', found '{first}'", path.display())));
    }
    let mut rows = Vec::new();
    let mut seen_columns = false;
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_columns {
            if line.trim() != COLUMNS {
                bail!(SchemaError(format!("{}:{}: unexpected columns '{line}'", path.display(), k + 1)));
            }
            seen_columns = true;
            continue;
        }
        let row = Row::parse(line)
            .ok_or_else(|| SchemaError(format!("{}:{}: malformed row '{line}'", path.display(), k + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "schema mismatch: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, seed: u64) -> Row {
        Row {
            algorithm: "alg1".into(),
            n,
            m: 4,
            d: 2,
            eps: 1.0,
            delta: 1e-5,
            kappa: 0.5,
            seed,
            excess_risk: 0.125 / n as f64,
            grad_evals: 3 * n as u64,
            halted: seed == 1,
            halt_phase: if seed == 1 { Some(2) } else { None },
            wall_time: 0.25,
        }
    }

    #[test]
    fn rows_round_trip() {
        for r in [row(512, 0), row(1024, 1)] {
            assert_eq!(Row::parse(&r.to_csv()), Some(r));
        }
        assert_eq!(COLUMNS.split(',').count(), 13);
    }

    #[test]
    fn groups_follow_first_appearance() {
        let rows = vec![row(1024, 0), row(512, 0), row(1024, 1)];
        let g = group_rows(&rows);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].len(), 2);
        assert_eq!(g[1][0].n, 512);
    }
}
