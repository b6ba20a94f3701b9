use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ppcstore::bench::{self, BenchPlan, QueryOptions, QueryRunner, SynthCorpus, SynthSpec, Variant};
use ppcstore::codec::CodecSpec;
use ppcstore::engine::{StoreConfig, KIB, MIB};
use ppcstore::error::IoContext;
use ppcstore::key::derive_key;
use ppcstore::metrics::{self, EnergyProbe, NullProbe, Objective, ReportRow};
use ppcstore::workload::{Distribution, WorkloadFile, WorkloadSpec};
use ppcstore::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ppcs",
    version,
    about = "Compressed key-value store for source files, with benchmarks"
)]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, default_value = "ppcs-data")]
    data_dir: PathBuf,
    /// Block codec: zstd:N, deflate:N, snappy or identity.
    #[arg(long, global = true, default_value = "zstd:3")]
    codec: CodecSpec,
    #[arg(long, global = true, default_value_t = 64)]
    block_kib: usize,
    /// Worker counts; a comma list runs a sweep. Defaults to 1,2,4,... up to the core count.
    #[arg(long, global = true, value_delimiter = ',')]
    threads: Vec<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Dist::Uniform)]
    dist: Dist,
    /// Keys per query; 1 runs single-gets.
    #[arg(long, global = true, default_value_t = 1)]
    batch: usize,
    #[arg(long, global = true, default_value_t = 5)]
    repeats: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Append result rows to this CSV (created with a header if missing).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Energy::Auto)]
    energy: Energy,
    /// Sort each workload's keys before cutting them into queries.
    #[arg(long, global = true)]
    ordered: bool,
    /// Memtable size before a flush.
    #[arg(long, global = true, default_value_t = 2048)]
    write_buffer_mib: u64,
    /// Read tables through mmap instead of pread.
    #[arg(long, global = true)]
    mmap: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Uniform,
    Powerlaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum Energy {
    Auto,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Add corpus records to a new or existing store, in input order.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Sort a corpus by key and bulk-load it into a fresh store.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        /// Memory for the external sort before spilling.
        #[arg(long, default_value_t = 512)]
        sort_budget_mib: usize,
    },
    /// Run a hit-only workload against a store.
    Query {
        /// Query count: keys for single-gets, keys in total for multi-gets.
        #[arg(long, default_value_t = 10_000)]
        queries: usize,
        /// Replay the keys of a saved workload instead of sampling.
        #[arg(long, conflicts_with = "workload_out")]
        workload: Option<PathBuf>,
        /// Save the sampled workload.
        #[arg(long)]
        workload_out: Option<PathBuf>,
    },
    /// Pareto frontier over one or more result CSVs.
    Report {
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        /// `column:min` or `column:max`; repeatable. Default ratio:min, mib_per_s:max.
        #[arg(long = "objective")]
        objectives: Vec<Objective>,
        /// Write the frontier rows here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Byte-compare every corpus record against the store.
    Verify {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Print the store key of a file name and content id.
    DeriveKey { name: String, content_id: String },
    /// Write a synthetic JSONL corpus.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        files: usize,
        #[arg(long, default_value_t = 1024)]
        mib: u64,
        /// Fraction of each file's lines shared with its family.
        #[arg(long, default_value_t = 0.7)]
        overlap: f64,
    },
    /// Build every configuration and run the query sweep on each.
    Matrix {
        #[arg(long)]
        corpus: PathBuf,
        /// Parent directory of the per-configuration stores.
        #[arg(long)]
        work_dir: PathBuf,
        /// `codec/block_kib` list; defaults to zstd:3/64,zstd:6/4,zstd:6/128,zstd:9/128.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long, default_value_t = 10_000)]
        queries: usize,
    },
}

impl Cli {
    fn store_config(&self) -> StoreConfig {
        StoreConfig::new(&self.data_dir)
            .with_codec(self.codec)
            .with_block_size(self.block_kib * KIB as usize)
            .with_write_buffer(self.write_buffer_mib * MIB)
    }

    fn probe(&self) -> Box<dyn EnergyProbe> {
        match self.energy {
            Energy::Auto => metrics::auto_probe(),
            Energy::Off => Box::new(NullProbe),
        }
    }

    fn threads(&self) -> Vec<usize> {
        if self.threads.is_empty() {
            bench::default_thread_sweep()
        } else {
            self.threads.clone()
        }
    }

    fn workload(&self, queries: usize) -> WorkloadSpec {
        let d = match self.dist {
            Dist::Uniform => Distribution::UniformDistinct,
            Dist::Powerlaw => Distribution::PowerLaw,
        };
        WorkloadSpec::new(d, queries, self.batch, self.seed)
    }

    fn emit(&self, rows: &[ReportRow]) -> Result<()> {
        print!("{}", metrics::render_table(rows));
        if let Some(p) = &self.csv {
            metrics::append_csv(p, rows)?;
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Ingest { corpus } => {
            let n = bench::cmd_ingest(corpus, cli.store_config())?;
            println!("ingested {n} records into {}", cli.data_dir.display());
        }
        Cmd::Build {
            corpus,
            sort_budget_mib,
        } => {
            let mut config = cli.store_config();
            if let Some(&t) = cli.threads.last() {
                config.compaction_threads = t;
            }
            let out = bench::build_from(
                bench::open_corpus(corpus)?,
                config,
                sort_budget_mib * MIB as usize,
                cli.probe().as_ref(),
            )?;
            cli.emit(&[out.row])?;
        }
        Cmd::Query {
            queries,
            workload,
            workload_out,
        } => {
            let engine = bench::open_store(&cli.data_dir, cli.mmap)?;
            let runner = QueryRunner::new(&engine)?;
            let file = match workload {
                Some(p) => WorkloadFile::read_from(BufReader::new(File::open(p).ctx("opening", p)?))?,
                None => WorkloadFile::generate(&cli.workload(*queries), runner.universe())?,
            };
            if let Some(p) = workload_out {
                file.write_to(BufWriter::new(File::create(p).ctx("creating", p)?))?;
            }
            let probe = cli.probe();
            let mut rows = Vec::new();
            for p in cli.threads() {
                let opts = QueryOptions {
                    threads: p,
                    repeats: cli.repeats,
                    ordered: cli.ordered,
                };
                let keys = file.keys.iter().map(Vec::as_slice).collect();
                rows.push(runner.run_keys(&file.spec, keys, &opts, probe.as_ref())?.row);
            }
            engine.close()?;
            cli.emit(&rows)?;
        }
        Cmd::Report { csvs, objectives, out } => {
            let objectives = if objectives.is_empty() {
                metrics::default_objectives()
            } else {
                objectives.clone()
            };
            let (frontier, table) = bench::cmd_report(csvs, &objectives)?;
            print!("{table}");
            if let Some(p) = out {
                metrics::write_csv(&frontier, File::create(p).ctx("creating", p)?)?;
            }
        }
        Cmd::Verify { corpus } => {
            let report = bench::cmd_verify(&cli.data_dir, corpus)?;
            println!("{}", report.summary());
            if !report.ok() {
                for id in report.mismatched.iter().take(20) {
                    println!("mismatch {id}");
                }
                for id in report.missing.iter().take(20) {
                    println!("missing {id}");
                }
                return Err(Error::Integrity(report.summary()));
            }
        }
        Cmd::DeriveKey { name, content_id } => {
            let key = derive_key(name, content_id)?;
            println!("{}\t{key}", hex::encode(key.encode()));
        }
        Cmd::GenCorpus {
            out,
            files,
            mib,
            overlap,
        } => {
            let mut spec = SynthSpec::new(*files, mib * MIB, cli.seed);
            spec.overlap = *overlap;
            let corpus = SynthCorpus::new(spec)?;
            let (n, bytes) = corpus.write_jsonl(BufWriter::new(File::create(out).ctx("creating", out)?))?;
            println!("wrote {n} records, {bytes} content bytes to {}", out.display());
        }
        Cmd::Matrix {
            corpus,
            work_dir,
            variants,
            queries,
        } => {
            let mut plan = BenchPlan::standard(cli.store_config(), *queries, cli.seed);
            if !variants.is_empty() {
                plan.variants = variants.clone();
            }
            plan.threads = cli.threads();
            plan.repeats = cli.repeats;
            let rows = bench::run_plan(&plan, corpus, work_dir, cli.probe().as_ref())?;
            cli.emit(&rows)?;
        }
    }
    Ok(())
}

fn exit_code(code: i32) -> ExitCode {
    ExitCode::from(code.clamp(0, 255) as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit_code(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ppcs: {e}");
            exit_code(e.exit_code())
        }
    }
}
