//! Cached Monte-Carlo risk oracles and their on-disk records.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

/// Minimum of the population risk as found by an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub argmin: Vec<f64>,
    /// Standard error of `value` (zero for closed forms).
    pub std_err: f64,
}

const CHUNK: usize = 4096;

/// Mean and standard error of `f` over `items`. Chunks are reduced in a
/// fixed order, so the result does not depend on the thread count.
pub fn sample_mean<Z: Sync, F>(items: &[Z], f: F) -> (f64, f64)
where
    F: Fn(&Z) -> f64 + Sync,
{
    let partial: Vec<(f64, f64)> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk.iter().fold((0.0, 0.0), |(s, s2), z| {
                let v = f(z);
                (s + v, s2 + v * v)
            })
        })
        .collect();
    let (s, s2) = partial.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let n = items.len() as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Fixed-order parallel sum of per-item vectors.
pub fn sample_vector_sum<Z: Sync, F>(items: &[Z], dim: usize, f: F) -> Vec<f64>
where
    F: Fn(&Z, &mut [f64]) + Sync,
{
    let partial: Vec<Vec<f64>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; dim];
            for z in chunk {
                f(z, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; dim];
    for p in &partial {
        crate::linalg::axpy(1.0, p, &mut total);
    }
    total
}

/// One line of the oracle cache: `name,params_hash,f_star,ci,seed,samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub name: String,
    pub params_hash: String,
    pub value: f64,
    pub std_err: f64,
    pub seed: u64,
    pub samples: usize,
}

impl OracleRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{},{}",
            self.name, self.params_hash, self.value, self.std_err, self.seed, self.samples
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return None;
        }
        Some(Self {
            name: f[0].to_string(),
            params_hash: f[1].to_string(),
            value: f[2].parse().ok()?,
            std_err: f[3].parse().ok()?,
            seed: f[4].parse().ok()?,
            samples: f[5].parse().ok()?,
        })
    }
}

/// Flat text file of [`OracleRecord`]s, one per line. Lines starting with
/// `#` are comments.
#[derive(Debug, Clone)]
pub struct OracleCache {
    path: PathBuf,
}

impl OracleCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> io::Result<Vec<OracleRecord>> {
        let file = match fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        for line in io::BufReader::new(file).lines() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if let Some(r) = OracleRecord::parse(&line) {
                out.push(r);
            }
        }
        Ok(out)
    }

    pub fn lookup(&self, name: &str, params_hash: &str) -> io::Result<Option<OracleRecord>> {
        Ok(self
            .load()?
            .into_iter()
            .find(|r| r.name == name && r.params_hash == params_hash))
    }

    pub fn append(&self, record: &OracleRecord) -> io::Result<()> {
        let fresh = !self.path.exists();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        if fresh {
            writeln!(f, "# name,params_hash,f_star,ci,seed,samples")?;
        }
        writeln!(f, "{}", record.to_line())
    }
}

/// FNV-1a over a parameter description; stable across runs and platforms.
pub fn params_hash(description: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in description.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut s = String::with_capacity(16);
    let _ = write!(s, "{h:016x}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip() {
        let r = OracleRecord {
            name: "geometric_median".into(),
            params_hash: params_hash("d=8"),
            value: 1.2345678901234567,
            std_err: 1e-4,
            seed: 99,
            samples: 1_000_000,
        };
        assert_eq!(OracleRecord::parse(&r.to_line()), Some(r));
        assert_eq!(OracleRecord::parse("a,b,c"), None);
    }

    #[test]
    fn cache_appends_and_finds() {
        let dir = std::env::temp_dir().join(format!("userdp-oracle-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let cache = OracleCache::new(dir.join("oracle.txt"));
        let _ = fs::remove_file(cache.path());
        assert!(cache.lookup("x", "h").unwrap().is_none());
        let r = OracleRecord {
            name: "x".into(),
            params_hash: "h".into(),
            value: 0.5,
            std_err: 0.0,
            seed: 1,
            samples: 10,
        };
        cache.append(&r).unwrap();
        cache.append(&OracleRecord { name: "y".into(), ..r.clone() }).unwrap();
        assert_eq!(cache.lookup("x", "h").unwrap(), Some(r));
        assert_eq!(cache.load().unwrap().len(), 2);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sample_mean_is_thread_count_independent() {
        let xs: Vec<f64> = (0..50_000).map(|k| (k as f64 * 0.37).sin()).collect();
        let a = sample_mean(&xs, |x| *x);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_mean(&xs, |x| *x));
        assert_eq!(a, b);
    }
}
