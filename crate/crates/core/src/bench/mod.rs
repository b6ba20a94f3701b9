//! Experiment driver: bulk build, threaded query sweeps, verification and
//! reporting. The CLI is a thin layer over these functions.

pub mod sort;
pub mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Barrier;

use crate::codec::CodecSpec;
use crate::corpus::parse_record_stream;
use crate::engine::{Engine, EngineStats, StoreConfig, KIB, MIB};
use crate::error::{Error, IoContext, Result};
use crate::key::derive_key;
use crate::metrics::{self, EnergyProbe, Measurement, Objective, Phase, ReportRow, RowConfig};
use crate::workload::{self, Distribution, WorkloadSpec};

pub use sort::ExternalSorter;
pub use synth::{SynthCorpus, SynthSpec};

pub const DEFAULT_SORT_BUDGET: usize = 512 * MIB as usize;

pub fn open_corpus(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::with_capacity(
        1 << 20,
        File::open(path).ctx("opening corpus", path)?,
    ))
}

/// Sorts a corpus into `(encoded key, content)` pairs.
pub fn sort_corpus(corpus: impl BufRead, budget: usize, scratch: Option<&Path>) -> Result<sort::SortedPairs> {
    let mut sorter = ExternalSorter::new(budget, scratch)?;
    for rec in parse_record_stream(corpus) {
        let rec = rec?;
        let key = derive_key(rec.canonical_name()?, &rec.content_id)?;
        sorter.push(key.encode(), rec.content)?;
    }
    log::info!(
        "sorted {} records in {} spilled runs",
        sorter.len(),
        sorter.spilled_runs()
    );
    sorter.finish()
}

fn ensure_fresh(dir: &Path) -> Result<()> {
    match std::fs::read_dir(dir) {
        Ok(mut it) => {
            if it.next().is_some() {
                return Err(Error::Precondition(format!(
                    "{} is not empty; build needs a fresh store directory",
                    dir.display()
                )));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io_path("reading", dir, e)),
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub row: ReportRow,
    pub measurement: Measurement,
    pub stats: EngineStats,
}

fn row_config(phase: Phase, codec: CodecSpec, block: usize, threads: usize) -> RowConfig {
    RowConfig {
        phase,
        codec: codec.algorithm().name().to_string(),
        level: codec.level(),
        block_kib: block as u64 / KIB,
        threads,
        distribution: None,
        batch: None,
    }
}

/// Bulk-loads `corpus` into a fresh store at `config.data_dir`.
///
/// The external sort runs before the timed section; the row covers the
/// sorted puts, the final flush and the full compaction. `bytes` is the raw
/// key + value volume written.
pub fn cmd_build(corpus: &Path, config: StoreConfig, probe: &dyn EnergyProbe) -> Result<BuildOutcome> {
    build_from(open_corpus(corpus)?, config, DEFAULT_SORT_BUDGET, probe)
}

pub fn build_from(
    corpus: impl BufRead,
    config: StoreConfig,
    sort_budget: usize,
    probe: &dyn EnergyProbe,
) -> Result<BuildOutcome> {
    ensure_fresh(&config.data_dir)?;
    config.validate()?;
    std::fs::create_dir_all(&config.data_dir).ctx("creating", &config.data_dir)?;
    let sorted = sort_corpus(corpus, sort_budget, Some(&config.data_dir))?;
    let cfg = row_config(
        Phase::Build,
        config.codec,
        config.target_block_size,
        config.compaction_threads,
    );
    let engine = Engine::open(config)?;
    let mut sorted = Some(sorted);
    let measurement = metrics::measure(
        || {
            let mut bytes = 0u64;
            for pair in sorted.take().expect("build runs once") {
                let (k, v) = pair?;
                bytes += (k.len() + v.len()) as u64;
                engine.put_encoded(&k, &v)?;
            }
            engine.flush()?;
            engine.compact()?;
            Ok(bytes)
        },
        probe,
        1,
    )?;
    let stats = engine.stats();
    if stats.entry_count == 0 {
        log::warn!("empty corpus: store has no entries and the ratio is undefined");
    }
    engine.close()?;
    Ok(BuildOutcome {
        row: ReportRow::from_measurement(cfg, &measurement, stats.ratio),
        measurement,
        stats,
    })
}

/// Incremental ingest into a new or existing store (no sort, no compaction).
/// Returns the number of records written.
pub fn cmd_ingest(corpus: &Path, config: StoreConfig) -> Result<u64> {
    let engine = Engine::open(config)?;
    let mut n = 0;
    for rec in parse_record_stream(open_corpus(corpus)?) {
        let rec = rec?;
        let key = derive_key(rec.canonical_name()?, &rec.content_id)?;
        engine.put(&key, &rec.content)?;
        n += 1;
    }
    engine.close()?;
    Ok(n)
}

/// Opens an existing store for reading.
pub fn open_store(path: &Path, mmap: bool) -> Result<Engine> {
    if !path.join("MANIFEST").exists() {
        return Err(Error::Precondition(format!("no store at {}", path.display())));
    }
    let mut config = StoreConfig::new(path);
    config.mmap_reads = mmap;
    config.l0_compaction_trigger = 0;
    Engine::open(config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOptions {
    pub threads: usize,
    pub repeats: usize,
    /// Sort the sampled keys before cutting them into queries.
    pub ordered: bool,
}

/// Hit-only query execution over a fixed key universe.
pub struct QueryRunner<'a> {
    engine: &'a Engine,
    universe: Vec<Vec<u8>>,
    ratio: Option<f64>,
    layout: (CodecSpec, usize),
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub row: ReportRow,
    pub measurement: Measurement,
}

impl<'a> QueryRunner<'a> {
    /// Samples are drawn from the live keys of `engine`.
    pub fn new(engine: &'a Engine) -> Result<Self> {
        let universe = engine.live_keys()?;
        let layout = engine
            .table_layout()
            .unwrap_or((engine.config().codec, engine.config().target_block_size));
        Ok(Self {
            ratio: engine.stats().ratio,
            engine,
            universe,
            layout,
        })
    }

    pub fn universe(&self) -> &[Vec<u8>] {
        &self.universe
    }

    pub fn run(&self, spec: &WorkloadSpec, opts: &QueryOptions, probe: &dyn EnergyProbe) -> Result<QueryOutcome> {
        let keys = workload::generate(spec, &self.universe)?;
        self.run_keys(spec, keys, opts, probe)
    }

    /// Runs an explicit key sequence (e.g. one loaded from a workload file).
    pub fn run_keys(
        &self,
        spec: &WorkloadSpec,
        mut keys: Vec<&[u8]>,
        opts: &QueryOptions,
        probe: &dyn EnergyProbe,
    ) -> Result<QueryOutcome> {
        if opts.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if opts.ordered {
            keys.sort_unstable();
        }
        let batches = workload::make_batches(&keys, spec.batch_size)?;
        let multi = spec.batch_size > 1;
        let measurement = metrics::measure(
            || execute(self.engine, &batches, opts.threads, multi),
            probe,
            opts.repeats,
        )?;
        let mut cfg = row_config(
            if multi { Phase::MultiGet } else { Phase::Get },
            self.layout.0,
            self.layout.1,
            opts.threads,
        );
        let mut dist = spec.distribution.name().to_string();
        if opts.ordered {
            dist.push_str("-ordered");
        }
        cfg.distribution = Some(dist);
        cfg.batch = Some(spec.batch_size);
        Ok(QueryOutcome {
            row: ReportRow::from_measurement(cfg, &measurement, self.ratio),
            measurement,
        })
    }
}

/// `threads` workers pull query indices from a shared counter until the
/// queue is exhausted. Returns the value bytes returned.
pub fn execute(engine: &Engine, batches: &[&[&[u8]]], threads: usize, multi: bool) -> Result<u64> {
    let next = AtomicUsize::new(0);
    let start = Barrier::new(threads);
    let missing = |k: &[u8]| Error::Integrity(format!("hit-only workload: key {} is absent", hex::encode(k)));
    let worker = || -> Result<u64> {
        start.wait();
        let mut bytes = 0u64;
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(batch) = batches.get(i) else {
                return Ok(bytes);
            };
            if multi {
                for (k, v) in batch.iter().zip(engine.multi_get(batch)?) {
                    bytes += v.ok_or_else(|| missing(k))?.len() as u64;
                }
            } else {
                for k in batch.iter() {
                    bytes += engine.get_encoded(k)?.ok_or_else(|| missing(k))?.len() as u64;
                }
            }
        }
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads).map(|_| s.spawn(worker)).collect();
        let mut total = 0u64;
        let mut first_err = None;
        for h in handles {
            match h.join().expect("query worker panicked") {
                Ok(b) => total += b,
                Err(e) => {
                    // drain the queue so the other workers stop early
                    next.store(usize::MAX / 2, Ordering::Relaxed);
                    first_err.get_or_insert(e);
                }
            }
        }
        first_err.map_or(Ok(total), Err)
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checked: u64,
    pub matched: u64,
    /// Content ids whose stored value differs.
    pub mismatched: Vec<String>,
    /// Content ids with no stored value.
    pub missing: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.matched == self.checked
    }

    pub fn summary(&self) -> String {
        format!(
            "checked {} matched {} mismatched {} missing {}",
            self.checked,
            self.matched,
            self.mismatched.len(),
            self.missing.len()
        )
    }
}

const VERIFY_BATCH: usize = 512;

/// Byte-compares every corpus record against the store.
pub fn verify_engine(engine: &Engine, corpus: impl BufRead) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let mut pending = Vec::with_capacity(VERIFY_BATCH);
    let check = |pending: &mut Vec<(Vec<u8>, String, Vec<u8>)>, report: &mut VerifyReport| -> Result<()> {
        let keys: Vec<&[u8]> = pending.iter().map(|p| p.0.as_slice()).collect();
        let got = engine.multi_get(&keys)?;
        for ((_, id, want), got) in pending.drain(..).zip(got) {
            report.checked += 1;
            match got {
                Some(v) if v == want => report.matched += 1,
                Some(_) => report.mismatched.push(id),
                None => report.missing.push(id),
            }
        }
        Ok(())
    };
    for rec in parse_record_stream(corpus) {
        let rec = rec?;
        let key = derive_key(rec.canonical_name()?, &rec.content_id)?;
        pending.push((key.encode(), rec.content_id, rec.content));
        if pending.len() == VERIFY_BATCH {
            check(&mut pending, &mut report)?;
        }
    }
    check(&mut pending, &mut report)?;
    Ok(report)
}

pub fn cmd_verify(store: &Path, corpus: &Path) -> Result<VerifyReport> {
    let engine = open_store(store, false)?;
    let report = verify_engine(&engine, open_corpus(corpus)?)?;
    engine.close()?;
    Ok(report)
}

/// Frontier of the rows in all `csvs` plus its rendering.
pub fn cmd_report(csvs: &[PathBuf], objectives: &[Objective]) -> Result<(Vec<ReportRow>, String)> {
    let mut rows = Vec::new();
    for p in csvs {
        rows.extend(metrics::read_csv(File::open(p).ctx("opening", p)?)?);
    }
    let frontier = metrics::pareto_frontier(&rows, objectives)?;
    let table = metrics::render_table(&frontier);
    Ok((frontier, table))
}

/// One store configuration of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub codec: CodecSpec,
    pub block_size: usize,
}

impl Variant {
    pub fn new(codec: CodecSpec, block_kib: usize) -> Self {
        Self {
            codec,
            block_size: block_kib * KIB as usize,
        }
    }

    pub fn name(&self) -> String {
        let level = self.codec.level().map(|l| format!("-{l}")).unwrap_or_default();
        format!(
            "{}{level}-{}k",
            self.codec.algorithm().name(),
            self.block_size as u64 / KIB
        )
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    /// `codec[:level]/block_kib`, e.g. `zstd:6/128`.
    fn from_str(s: &str) -> Result<Self> {
        let (codec, kib) = s
            .rsplit_once('/')
            .ok_or_else(|| Error::Config(format!("variant {s:?}: expected codec/block_kib")))?;
        let kib: usize = kib
            .parse()
            .map_err(|_| Error::Config(format!("variant {s:?}: bad block size")))?;
        Ok(Variant::new(codec.parse()?, kib))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub variants: Vec<Variant>,
    pub threads: Vec<usize>,
    pub workloads: Vec<WorkloadSpec>,
    pub repeats: usize,
    /// Template for the per-variant stores (buffer sizes, bloom bits...).
    pub store: StoreConfig,
}

/// 1, 2, 4, ... up to the hardware concurrency (which is always included).
pub fn default_thread_sweep() -> Vec<usize> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut v: Vec<usize> = std::iter::successors(Some(1usize), |&p| Some(p * 2))
        .take_while(|&p| p < cores)
        .collect();
    v.push(cores);
    v
}

pub fn standard_variants() -> Vec<Variant> {
    let z = |l| CodecSpec::zstd(l).expect("valid level");
    vec![
        Variant::new(z(3), 64),
        Variant::new(z(6), 4),
        Variant::new(z(6), 128),
        Variant::new(z(9), 128),
    ]
}

/// Uniform and power-law workloads, each as single-gets and 100-key multi-gets.
pub fn standard_workloads(queries: usize, seed: u64) -> Vec<WorkloadSpec> {
    let mut v = Vec::new();
    for d in [Distribution::UniformDistinct, Distribution::PowerLaw] {
        v.push(WorkloadSpec::new(d, queries, 1, seed));
        v.push(WorkloadSpec::new(d, queries, 100, seed));
    }
    v
}

impl BenchPlan {
    pub fn standard(store: StoreConfig, queries: usize, seed: u64) -> Self {
        Self {
            variants: standard_variants(),
            threads: default_thread_sweep(),
            workloads: standard_workloads(queries, seed),
            repeats: 5,
            store,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("plan has no store variants".into()));
        }
        if self.threads.is_empty() || self.threads[0] == 0 {
            return Err(Error::Config("thread counts must be >= 1".into()));
        }
        if self.threads.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "thread counts must be strictly increasing: {:?}",
                self.threads
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        Ok(())
    }
}

/// Builds one store per variant under `work_dir` and runs every workload at
/// every thread count against it. Rows come out in execution order.
pub fn run_plan(plan: &BenchPlan, corpus: &Path, work_dir: &Path, probe: &dyn EnergyProbe) -> Result<Vec<ReportRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for v in &plan.variants {
        let mut config = plan.store.clone().with_codec(v.codec).with_block_size(v.block_size);
        config.data_dir = work_dir.join(v.name());
        log::info!("building {}", v.name());
        let built = cmd_build(corpus, config.clone(), probe)?;
        rows.push(built.row);
        let engine = open_store(&config.data_dir, config.mmap_reads)?;
        let runner = QueryRunner::new(&engine)?;
        let universe = runner.universe().len();
        for spec in &plan.workloads {
            let mut spec = spec.clone();
            if spec.distribution == Distribution::UniformDistinct && spec.num_queries > universe {
                log::warn!("uniform workload capped at the {universe} stored keys");
                spec.num_queries = universe;
            }
            for &p in &plan.threads {
                let opts = QueryOptions {
                    threads: p,
                    repeats: plan.repeats,
                    ordered: false,
                };
                rows.push(runner.run(&spec, &opts, probe)?.row);
            }
        }
        engine.close()?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::NullProbe;

    fn small_corpus(files: usize, bytes: u64, seed: u64) -> Vec<u8> {
        let mut buf = Vec::new();
        SynthCorpus::new(SynthSpec::new(files, bytes, seed))
            .unwrap()
            .write_jsonl(&mut buf)
            .unwrap();
        buf
    }

    fn small_store(dir: &Path) -> StoreConfig {
        let mut c = StoreConfig::new(dir).with_write_buffer(4 * MIB);
        c.compaction_threads = 2;
        c.target_table_bytes = 2 * MIB;
        c
    }

    #[test]
    fn build_ten_mib_redundant_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(1000, 10 * MIB, 11);
        let out = build_from(
            corpus.as_slice(),
            small_store(&dir.path().join("s")),
            1 << 20,
            &NullProbe,
        )
        .unwrap();
        assert_eq!(out.row.phase, Phase::Build);
        assert_eq!(out.stats.entry_count, 1000);
        let ratio = out.row.ratio.unwrap();
        assert!(ratio < 0.5, "ratio {ratio}");
        assert!(out.row.joules.is_none());

        let engine = open_store(&dir.path().join("s"), false).unwrap();
        let report = verify_engine(&engine, corpus.as_slice()).unwrap();
        assert!(report.ok(), "{}", report.summary());
        assert_eq!(report.checked, 1000);
    }

    #[test]
    fn rebuild_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(300, 2 * MIB, 2);
        let a = build_from(
            corpus.as_slice(),
            small_store(&dir.path().join("a")),
            1 << 18,
            &NullProbe,
        )
        .unwrap();
        let b = build_from(
            corpus.as_slice(),
            small_store(&dir.path().join("b")),
            1 << 30,
            &NullProbe,
        )
        .unwrap();
        assert_eq!(a.row.ratio, b.row.ratio);
        let read_all = |d: &str| {
            let mut files: Vec<_> = std::fs::read_dir(dir.path().join(d))
                .unwrap()
                .map(|e| e.unwrap().path())
                .filter(|p| p.extension().is_some_and(|e| e == "ppcs"))
                .collect();
            files.sort();
            files.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(read_all("a"), read_all("b"));
    }

    #[test]
    fn empty_corpus_builds_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let out = build_from(&b""[..], small_store(&dir.path().join("s")), 1 << 20, &NullProbe).unwrap();
        assert_eq!(out.stats.entry_count, 0);
        assert_eq!(out.row.ratio, None);
        assert_eq!(out.row.bytes, 0);
    }

    #[test]
    fn build_refuses_non_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("junk"), b"x").unwrap();
        let err = build_from(&b""[..], small_store(dir.path()), 1 << 20, &NullProbe).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn build_reports_corpus_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut corpus = small_corpus(3, 3000, 1);
        corpus.extend_from_slice(b"{not json\n");
        let err = build_from(
            corpus.as_slice(),
            small_store(&dir.path().join("s")),
            1 << 20,
            &NullProbe,
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn query_bytes_independent_of_threads() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(500, 2 * MIB, 4);
        build_from(
            corpus.as_slice(),
            small_store(&dir.path().join("s")),
            1 << 20,
            &NullProbe,
        )
        .unwrap();
        let engine = open_store(&dir.path().join("s"), false).unwrap();
        let runner = QueryRunner::new(&engine).unwrap();
        assert_eq!(runner.universe().len(), 500);
        for spec in standard_workloads(400, 9) {
            // p = 1 matches a plain sequential loop
            let keys = workload::generate(&spec, runner.universe()).unwrap();
            let oracle: u64 = keys
                .iter()
                .map(|k| engine.get_encoded(k).unwrap().unwrap().len() as u64)
                .sum();
            for p in [1, 3, 8] {
                for ordered in [false, true] {
                    let opts = QueryOptions {
                        threads: p,
                        repeats: 2,
                        ordered,
                    };
                    let out = runner.run(&spec, &opts, &NullProbe).unwrap();
                    assert_eq!(out.row.bytes, oracle);
                    assert!(out.measurement.runs.iter().all(|r| r.bytes == oracle));
                    assert_eq!(out.row.threads, p);
                    assert_eq!(out.row.codec, "zstd");
                    assert_eq!(out.row.block_kib, 64);
                }
            }
        }
    }

    #[test]
    fn every_query_runs_exactly_once() {
        let dir = tempfile::tempdir().unwrap();
        let engine = Engine::open(small_store(dir.path())).unwrap();
        for i in 0..50u32 {
            engine.put_encoded(&i.to_be_bytes(), &vec![0u8; i as usize]).unwrap();
        }
        let keys: Vec<[u8; 4]> = (0..50u32).map(u32::to_be_bytes).collect();
        let refs: Vec<&[u8]> = keys.iter().map(|k| k.as_slice()).collect();
        let batches = workload::make_batches(&refs, 7).unwrap();
        let want: u64 = (0..50).sum();
        for p in 1..6 {
            assert_eq!(execute(&engine, &batches, p, true).unwrap(), want);
        }
        let singles = workload::make_batches(&refs, 1).unwrap();
        assert_eq!(execute(&engine, &singles, 4, false).unwrap(), want);
    }

    #[test]
    fn absent_key_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let engine = Engine::open(small_store(dir.path())).unwrap();
        engine.put_encoded(b"a", b"1").unwrap();
        let keys: Vec<&[u8]> = vec![b"a", b"zz"];
        let batches = workload::make_batches(&keys, 1).unwrap();
        for multi in [false, true] {
            let err = execute(&engine, &batches, 2, multi).unwrap_err();
            assert!(matches!(err, Error::Integrity(_)), "{err}");
        }
    }

    #[test]
    fn verify_flags_differences() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(50, 100_000, 5);
        build_from(
            corpus.as_slice(),
            small_store(&dir.path().join("s")),
            1 << 20,
            &NullProbe,
        )
        .unwrap();
        let engine = open_store(&dir.path().join("s"), false).unwrap();
        let recs: Vec<_> = parse_record_stream(corpus.as_slice()).map(|r| r.unwrap()).collect();
        let k0 = derive_key(recs[0].canonical_name().unwrap(), &recs[0].content_id).unwrap();
        let k1 = derive_key(recs[1].canonical_name().unwrap(), &recs[1].content_id).unwrap();
        engine.put(&k0, b"tampered").unwrap();
        engine.delete(&k1).unwrap();
        let r = verify_engine(&engine, corpus.as_slice()).unwrap();
        assert!(!r.ok());
        assert_eq!(r.checked, 50);
        assert_eq!(r.matched, 48);
        assert_eq!(r.mismatched, vec![recs[0].content_id.clone()]);
        assert_eq!(r.missing, vec![recs[1].content_id.clone()]);
    }

    #[test]
    fn plan_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = BenchPlan::standard(small_store(dir.path()), 100, 0);
        assert_eq!(plan.repeats, 5);
        assert_eq!(plan.variants.len(), 4);
        plan.validate().unwrap();
        let sweep = default_thread_sweep();
        assert_eq!(sweep[0], 1);
        assert!(sweep.windows(2).all(|w| w[0] < w[1]));
        plan.threads = vec![1, 4, 2];
        assert!(plan.validate().is_err());
        plan.threads = vec![0, 1];
        assert!(plan.validate().is_err());
        plan.threads = vec![1, 1];
        assert!(plan.validate().is_err());
    }

    #[test]
    fn variant_syntax() {
        let v: Variant = "zstd:6/128".parse().unwrap();
        assert_eq!(v.block_size, 128 * 1024);
        assert_eq!(v.codec, CodecSpec::zstd(6).unwrap());
        assert_eq!(v.name(), "zstd-6-128k");
        assert!("zstd:6".parse::<Variant>().is_err());
        assert!("zstd:6/x".parse::<Variant>().is_err());
    }
}
