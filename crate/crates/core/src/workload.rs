//! Deterministic query workloads over a key universe.
//!
//! The random stream is part of the file format: xoshiro256++ seeded through
//! SplitMix64 (`seed_from_u64`), integers in `[0, n)` by Lemire's
//! multiply-and-reject, reals as the top 53 bits scaled by 2^-53. These are
//! written out here rather than taken from `rand`'s distributions so that a
//! dependency upgrade can never change a workload.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

pub const POWER_LAW_ALPHA: f64 = -1.5;
const FILE_MAGIC: &str = "# ppcs-workload 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Distribution {
    UniformDistinct,
    PowerLaw,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::UniformDistinct => "uniform",
            Distribution::PowerLaw => "powerlaw",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_distinct" => Ok(Distribution::UniformDistinct),
            "powerlaw" | "power_law" => Ok(Distribution::PowerLaw),
            other => Err(Error::Workload(format!("unknown distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub distribution: Distribution,
    /// Exponent applied as `rank^alpha`; only used by the power law.
    pub alpha: f64,
    pub num_queries: usize,
    /// Keys per query: 1 = single-get.
    pub batch_size: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(distribution: Distribution, num_queries: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            distribution,
            alpha: POWER_LAW_ALPHA,
            num_queries,
            batch_size,
            seed,
        }
    }

    pub fn validate(&self, universe: usize) -> Result<()> {
        if self.num_queries == 0 {
            return Err(Error::Workload("num_queries must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Workload("batch_size must be >= 1".into()));
        }
        if universe == 0 {
            return Err(Error::Workload("empty key universe".into()));
        }
        match self.distribution {
            Distribution::UniformDistinct if self.num_queries > universe => Err(Error::Workload(format!(
                "{} distinct keys requested from a universe of {universe}",
                self.num_queries
            ))),
            Distribution::PowerLaw if !self.alpha.is_finite() => {
                Err(Error::Workload(format!("alpha {} is not finite", self.alpha)))
            }
            _ => Ok(()),
        }
    }
}

/// The fixed workload random stream.
pub struct WorkloadRng(Xoshiro256PlusPlus);

impl WorkloadRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `[0, n)`, `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as u64
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Seeded permutation of `0..n` (Fisher–Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i as u64 + 1) as usize;
            p.swap(i, j);
        }
        p
    }
}

/// Indices of `k` distinct universe elements, by partial Fisher–Yates.
pub fn sample_uniform_distinct_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::Workload(format!(
            "{k} distinct keys requested from a universe of {n}"
        )));
    }
    let mut rng = WorkloadRng::new(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    Ok(idx)
}

/// Normalised `P(rank = i)` for `i = 1..=n`, by direct summation.
pub fn power_law_pmf(n: usize, alpha: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(alpha)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Sampler of 1-based ranks with `P(i) ∝ i^alpha` (inverse CDF by binary search).
pub struct PowerLawSampler {
    cdf: Vec<f64>,
}

impl PowerLawSampler {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Workload("empty key universe".into()));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=n)
            .map(|i| {
                acc += (i as f64).powf(alpha);
                acc
            })
            .collect();
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        *cdf.last_mut().expect("n >= 1") = 1.0;
        Ok(Self { cdf })
    }

    pub fn sample_rank(&self, rng: &mut WorkloadRng) -> usize {
        let u = rng.unit();
        self.cdf.partition_point(|&c| c <= u) + 1
    }
}

/// Draws i.i.d. power-law ranks and maps them to universe indices through a
/// seeded permutation, so hot keys are scattered across the key space.
/// Returns `(indices, ranks)`.
pub fn sample_power_law_indices(n: usize, k: usize, alpha: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let sampler = PowerLawSampler::new(n, alpha)?;
    let mut rng = WorkloadRng::new(seed);
    let rank_to_index = rng.permutation(n);
    let ranks: Vec<usize> = (0..k).map(|_| sampler.sample_rank(&mut rng)).collect();
    let indices = ranks.iter().map(|&r| rank_to_index[r - 1]).collect();
    Ok((indices, ranks))
}

pub fn sample_uniform_distinct<'a>(spec: &WorkloadSpec, universe: &'a [Vec<u8>]) -> Result<Vec<&'a [u8]>> {
    spec.validate(universe.len())?;
    let idx = sample_uniform_distinct_indices(universe.len(), spec.num_queries, spec.seed)?;
    Ok(idx.into_iter().map(|i| universe[i].as_slice()).collect())
}

pub fn sample_power_law<'a>(spec: &WorkloadSpec, universe: &'a [Vec<u8>]) -> Result<Vec<&'a [u8]>> {
    spec.validate(universe.len())?;
    let (idx, _) = sample_power_law_indices(universe.len(), spec.num_queries, spec.alpha, spec.seed)?;
    Ok(idx.into_iter().map(|i| universe[i].as_slice()).collect())
}

/// The key sequence of `spec`: `num_queries` keys (each query of a
/// multi-get workload is `batch_size` consecutive keys of it).
pub fn generate<'a>(spec: &WorkloadSpec, universe: &'a [Vec<u8>]) -> Result<Vec<&'a [u8]>> {
    match spec.distribution {
        Distribution::UniformDistinct => sample_uniform_distinct(spec, universe),
        Distribution::PowerLaw => sample_power_law(spec, universe),
    }
}

pub fn make_batches<T>(keys: &[T], batch_size: usize) -> Result<Vec<&[T]>> {
    if batch_size == 0 {
        return Err(Error::Workload("batch_size must be >= 1".into()));
    }
    Ok(keys.chunks(batch_size).collect())
}

/// A generated workload as persisted on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadFile {
    pub spec: WorkloadSpec,
    pub universe_size: usize,
    pub keys: Vec<Vec<u8>>,
}

impl WorkloadFile {
    pub fn generate(spec: &WorkloadSpec, universe: &[Vec<u8>]) -> Result<Self> {
        Ok(Self {
            spec: spec.clone(),
            universe_size: universe.len(),
            keys: generate(spec, universe)?.into_iter().map(<[u8]>::to_vec).collect(),
        })
    }

    fn header(&self) -> String {
        format!(
            "{FILE_MAGIC} dist={} alpha={} queries={} batch={} seed={} universe={} rng=xoshiro256pp-splitmix64",
            self.spec.distribution,
            self.spec.alpha,
            self.spec.num_queries,
            self.spec.batch_size,
            self.spec.seed,
            self.universe_size
        )
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let io = |e| Error::io("writing workload", e);
        writeln!(out, "{}", self.header()).map_err(io)?;
        for k in &self.keys {
            writeln!(out, "{}", hex::encode(k)).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let bad = |m: String| Error::Workload(format!("workload file: {m}"));
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| Error::io("reading workload", e))?;
        let rest = header
            .strip_prefix(FILE_MAGIC)
            .ok_or_else(|| bad("missing header".into()))?;
        let mut fields = std::collections::HashMap::new();
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field {kv:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("header lacks {k}")));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("bad {k}"))) };
        let spec = WorkloadSpec {
            distribution: get("dist")?.parse()?,
            alpha: get("alpha")?.parse().map_err(|_| bad("bad alpha".into()))?,
            num_queries: num("queries")? as usize,
            batch_size: num("batch")? as usize,
            seed: num("seed")?,
        };
        let mut keys = Vec::with_capacity(spec.num_queries);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("reading workload", e))?;
            if line.is_empty() {
                continue;
            }
            keys.push(hex::decode(&line).map_err(|e| bad(format!("line {}: {e}", i + 2)))?);
        }
        if keys.len() != spec.num_queries {
            return Err(bad(format!("{} keys, header says {}", keys.len(), spec.num_queries)));
        }
        Ok(Self {
            universe_size: num("universe")? as usize,
            spec,
            keys,
        })
    }
}
