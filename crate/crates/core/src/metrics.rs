//! Timing, package-energy probes, derived rates, Pareto frontiers and the
//! benchmark CSV.
//!
//! Units: throughput is MiB/s (2^20 bytes), energy efficiency is MB/J
//! (10^6 bytes). The mix is deliberate and matches how such plots are
//! usually labelled.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIB: f64 = 1_048_576.0;
pub const MB: f64 = 1_000_000.0;

/// Cumulative energy source. `read_joules` is monotone: counter wraps are
/// already folded in.
pub trait EnergyProbe: Send + Sync {
    fn domain(&self) -> &str;
    fn available(&self) -> bool;
    fn read_joules(&self) -> Option<f64>;
}

/// Probe for machines without readable counters.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullProbe;

impl EnergyProbe for NullProbe {
    fn domain(&self) -> &str {
        "none"
    }

    fn available(&self) -> bool {
        false
    }

    fn read_joules(&self) -> Option<f64> {
        None
    }
}

/// Turns a raw microjoule counter that wraps at `max_range` into a
/// monotone total.
#[derive(Debug)]
pub struct WrapCorrector {
    max_range: u64,
    last: Option<u64>,
    total_uj: u128,
}

impl WrapCorrector {
    pub fn new(max_range: u64) -> Self {
        Self {
            max_range,
            last: None,
            total_uj: 0,
        }
    }

    /// Feeds a raw reading; returns the accumulated microjoules.
    pub fn update(&mut self, raw: u64) -> u128 {
        if let Some(prev) = self.last {
            let delta = if raw >= prev {
                raw - prev
            } else {
                // wrapped once between reads
                raw + self.max_range.saturating_sub(prev)
            };
            self.total_uj += u128::from(delta);
        }
        self.last = Some(raw);
        self.total_uj
    }
}

struct RaplDomain {
    energy_path: PathBuf,
    corrector: WrapCorrector,
}

/// Package-level counters exposed under a powercap tree
/// (`<root>/intel-rapl:N/energy_uj`), summed over packages.
pub struct RaplProbe {
    label: String,
    domains: Mutex<Vec<RaplDomain>>,
}

pub const DEFAULT_POWERCAP_ROOT: &str = "/sys/class/powercap";

impl RaplProbe {
    /// Finds readable package domains; `None` if there are none.
    pub fn discover(root: &Path) -> Option<Self> {
        let mut found = Vec::new();
        for entry in fs::read_dir(root).ok()?.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            // packages are `<vendor>-rapl:N`; sub-domains carry a second `:`
            let Some((_, idx)) = name.split_once(':') else { continue };
            if !name.contains("rapl") || idx.contains(':') {
                continue;
            }
            let dir = entry.path();
            let read_u64 = |f: &str| -> Option<u64> { fs::read_to_string(dir.join(f)).ok()?.trim().parse().ok() };
            let (Some(_), Some(range)) = (read_u64("energy_uj"), read_u64("max_energy_range_uj")) else {
                continue;
            };
            let label = fs::read_to_string(dir.join("name"))
                .map(|s| s.trim().to_string())
                .unwrap_or(name.clone());
            found.push((
                label,
                RaplDomain {
                    energy_path: dir.join("energy_uj"),
                    corrector: WrapCorrector::new(range),
                },
            ));
        }
        if found.is_empty() {
            return None;
        }
        found.sort_by(|a, b| a.0.cmp(&b.0));
        let label = found.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join("+");
        Some(Self {
            label,
            domains: Mutex::new(found.into_iter().map(|(_, d)| d).collect()),
        })
    }
}

impl EnergyProbe for RaplProbe {
    fn domain(&self) -> &str {
        &self.label
    }

    fn available(&self) -> bool {
        true
    }

    fn read_joules(&self) -> Option<f64> {
        let mut domains = self.domains.lock().unwrap_or_else(|p| p.into_inner());
        let mut total = 0u128;
        for d in domains.iter_mut() {
            let raw: u64 = fs::read_to_string(&d.energy_path).ok()?.trim().parse().ok()?;
            total += d.corrector.update(raw);
        }
        Some(total as f64 / 1e6)
    }
}

/// Replays a fixed list of raw counter readings (microjoules); the last one
/// repeats once the list is exhausted. For tests and dry runs.
pub struct ScriptedProbe {
    readings: Mutex<(VecDeque<u64>, u64, WrapCorrector)>,
}

impl ScriptedProbe {
    pub fn new(readings: impl IntoIterator<Item = u64>, max_range: u64) -> Self {
        let q: VecDeque<u64> = readings.into_iter().collect();
        let first = q.front().copied().unwrap_or(0);
        Self {
            readings: Mutex::new((q, first, WrapCorrector::new(max_range))),
        }
    }
}

impl EnergyProbe for ScriptedProbe {
    fn domain(&self) -> &str {
        "scripted"
    }

    fn available(&self) -> bool {
        true
    }

    fn read_joules(&self) -> Option<f64> {
        let mut guard = self.readings.lock().unwrap_or_else(|p| p.into_inner());
        let (q, last, corr) = &mut *guard;
        if let Some(v) = q.pop_front() {
            *last = v;
        }
        Some(corr.update(*last) as f64 / 1e6)
    }
}

/// `--energy auto`: the powercap probe when readable, else the null probe.
pub fn auto_probe() -> Box<dyn EnergyProbe> {
    match RaplProbe::discover(Path::new(DEFAULT_POWERCAP_ROOT)) {
        Some(p) => Box::new(p),
        None => Box::new(NullProbe),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSample {
    pub seconds: f64,
    pub bytes: u64,
    pub joules: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Mean over runs.
    pub wall_time: f64,
    /// Mean over runs.
    pub bytes_processed: u64,
    /// Mean over runs; `None` when any read of the probe failed.
    pub energy: Option<f64>,
    pub run_count: usize,
    pub runs: Vec<RunSample>,
}

/// Runs `phase` `repeats` times. The phase returns the bytes it processed.
pub fn measure<F>(mut phase: F, probe: &dyn EnergyProbe, repeats: usize) -> Result<Measurement>
where
    F: FnMut() -> Result<u64>,
{
    if repeats == 0 {
        return Err(Error::Precondition("repeats must be >= 1".into()));
    }
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let before = probe.read_joules();
        let start = Instant::now();
        let bytes = phase()?;
        let seconds = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
        let after = probe.read_joules();
        let joules = match (before, after) {
            (Some(b), Some(a)) => Some((a - b).max(0.0)),
            _ => None,
        };
        runs.push(RunSample { seconds, bytes, joules });
    }
    let n = runs.len() as f64;
    let energy = runs
        .iter()
        .map(|r| r.joules)
        .sum::<Option<f64>>()
        .map(|total| total / n);
    Ok(Measurement {
        wall_time: runs.iter().map(|r| r.seconds).sum::<f64>() / n,
        bytes_processed: (runs.iter().map(|r| r.bytes as f64).sum::<f64>() / n).round() as u64,
        energy,
        run_count: runs.len(),
        runs,
    })
}

/// MiB/s.
pub fn throughput(m: &Measurement) -> f64 {
    m.bytes_processed as f64 / MIB / m.wall_time
}

/// MB/J, undefined without a positive energy reading.
pub fn efficiency(m: &Measurement) -> Option<f64> {
    m.energy.filter(|&j| j > 0.0).map(|j| m.bytes_processed as f64 / MB / j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Build,
    Get,
    MultiGet,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Build => "build",
            Phase::Get => "get",
            Phase::MultiGet => "multi_get",
        })
    }
}

pub const CSV_HEADER: &str =
    "phase,codec,level,block_kib,threads,distribution,batch,runs,bytes,seconds,joules,mib_per_s,mb_per_j,ratio";

/// One benchmark cell. Optional fields serialize as empty CSV cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub phase: Phase,
    pub codec: String,
    pub level: Option<u8>,
    pub block_kib: u64,
    pub threads: usize,
    pub distribution: Option<String>,
    pub batch: Option<usize>,
    pub runs: usize,
    pub bytes: u64,
    pub seconds: f64,
    pub joules: Option<f64>,
    pub mib_per_s: f64,
    pub mb_per_j: Option<f64>,
    pub ratio: Option<f64>,
}

/// Configuration columns of a row, without the measured values.
#[derive(Debug, Clone, PartialEq)]
pub struct RowConfig {
    pub phase: Phase,
    pub codec: String,
    pub level: Option<u8>,
    pub block_kib: u64,
    pub threads: usize,
    pub distribution: Option<String>,
    pub batch: Option<usize>,
}

impl ReportRow {
    pub fn from_measurement(cfg: RowConfig, m: &Measurement, ratio: Option<f64>) -> Self {
        Self {
            phase: cfg.phase,
            codec: cfg.codec,
            level: cfg.level,
            block_kib: cfg.block_kib,
            threads: cfg.threads,
            distribution: cfg.distribution,
            batch: cfg.batch,
            runs: m.run_count,
            bytes: m.bytes_processed,
            seconds: m.wall_time,
            joules: m.energy,
            mib_per_s: throughput(m),
            mb_per_j: efficiency(m),
            ratio,
        }
    }

    /// Numeric value of a column, for objective evaluation.
    pub fn field(&self, name: &str) -> Option<f64> {
        let v = match name {
            "ratio" => self.ratio?,
            "mib_per_s" => self.mib_per_s,
            "mb_per_j" => self.mb_per_j?,
            "seconds" => self.seconds,
            "joules" => self.joules?,
            "bytes" => self.bytes as f64,
            "threads" => self.threads as f64,
            "block_kib" => self.block_kib as f64,
            "level" => f64::from(self.level?),
            "batch" => self.batch? as f64,
            _ => return None,
        };
        v.is_finite().then_some(v)
    }

    pub fn label(&self) -> String {
        let codec = match self.level {
            Some(l) => format!("{}-{l}", self.codec),
            None => self.codec.clone(),
        };
        let mut s = format!("{} {codec}/{}KiB p={}", self.phase, self.block_kib, self.threads);
        if let Some(d) = &self.distribution {
            s.push_str(&format!(" {d}"));
        }
        if let Some(b) = self.batch {
            s.push_str(&format!(" batch={b}"));
        }
        s
    }
}

pub fn write_csv(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("writing CSV", e))
}

pub fn read_csv(input: impl Read) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Report(format!("unexpected CSV header {:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn append_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let exists = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io_path("opening", path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if !exists {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io_path("writing", path, e))
}

pub const RUNS_CSV_HEADER: &str = "phase,codec,level,block_kib,threads,distribution,batch,run,bytes,seconds,joules";

/// Per-run values behind a set of rows, for re-analysis.
pub fn write_runs_csv(rows: &[(RowConfig, Measurement)], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RUNS_CSV_HEADER.split(','))?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for (cfg, m) in rows {
        for (i, run) in m.runs.iter().enumerate() {
            w.write_record([
                cfg.phase.to_string(),
                cfg.codec.clone(),
                opt(cfg.level.map(|l| l.to_string())),
                cfg.block_kib.to_string(),
                cfg.threads.to_string(),
                opt(cfg.distribution.clone()),
                opt(cfg.batch.map(|b| b.to_string())),
                (i + 1).to_string(),
                run.bytes.to_string(),
                run.seconds.to_string(),
                opt(run.joules.map(|j| j.to_string())),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("writing CSV", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objective {
    pub field: String,
    pub direction: Direction,
}

impl Objective {
    pub fn min(field: &str) -> Self {
        Self {
            field: field.into(),
            direction: Direction::Min,
        }
    }

    pub fn max(field: &str) -> Self {
        Self {
            field: field.into(),
            direction: Direction::Max,
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    /// `field:min` or `field:max`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((f, "min")) if !f.is_empty() => Ok(Objective::min(f)),
            Some((f, "max")) if !f.is_empty() => Ok(Objective::max(f)),
            _ => Err(Error::Config(format!("objective {s:?} is not FIELD:min or FIELD:max"))),
        }
    }
}

/// The default space/time/energy objectives.
pub fn default_objectives() -> Vec<Objective> {
    vec![Objective::min("ratio"), Objective::max("mib_per_s")]
}

/// True when `a` is at least as good as `b` everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64], dirs: &[Direction]) -> bool {
    let mut strictly = false;
    for ((&x, &y), d) in a.iter().zip(b).zip(dirs) {
        let (better, worse) = match d {
            Direction::Min => (x < y, x > y),
            Direction::Max => (x > y, x < y),
        };
        if worse {
            return false;
        }
        strictly |= better;
    }
    strictly
}

/// Indices of non-dominated rows, in input order.
pub fn pareto_indices(rows: &[ReportRow], objectives: &[Objective]) -> Result<Vec<usize>> {
    let dirs: Vec<Direction> = objectives.iter().map(|o| o.direction).collect();
    let points = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            objectives
                .iter()
                .map(|o| {
                    r.field(&o.field).ok_or_else(|| {
                        Error::Report(format!("row {} ({}) has no value for {}", i + 1, r.label(), o.field))
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..points.len())
        .filter(|&i| !points.iter().any(|p| dominates(p, &points[i], &dirs)))
        .collect())
}

pub fn pareto_frontier(rows: &[ReportRow], objectives: &[Objective]) -> Result<Vec<ReportRow>> {
    Ok(pareto_indices(rows, objectives)?
        .into_iter()
        .map(|i| rows[i].clone())
        .collect())
}

/// Fixed-width table for terminals.
pub fn render_table(rows: &[ReportRow]) -> String {
    let fmt_opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"));
    let mut s = format!(
        "{:<44} {:>12} {:>10} {:>10} {:>10} {:>8}\n",
        "configuration", "bytes", "seconds", "MiB/s", "MB/J", "ratio"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<44} {:>12} {:>10.3} {:>10.2} {:>10} {:>8}\n",
            r.label(),
            r.bytes,
            r.seconds,
            r.mib_per_s,
            fmt_opt(r.mb_per_j, 2),
            fmt_opt(r.ratio, 4)
        ));
    }
    s
}
