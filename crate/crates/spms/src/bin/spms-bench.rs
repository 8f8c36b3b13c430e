use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spms::bench::{self, BenchConfig, Generator, Source, TRACE_DIR_VAR};
use spms::report::{write_csv, RunReport, SCHEMA};
use spms::sched::CostModel;

const USAGE: u8 = 2;
const FAILED: u8 = 1;

#[derive(Parser)]
#[command(name = "spms-bench", about = "Run, measure and verify the instrumented SPMS sort")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sort one input, check it against the oracle and print a JSON report.
    Sort {
        #[command(flatten)]
        common: Common,
        /// Generate this many keys instead of reading --input.
        #[arg(long)]
        n: Option<usize>,
        /// Key file: .bin (little-endian u64) or .txt (decimal lines).
        #[arg(long, conflicts_with = "n")]
        input: Option<PathBuf>,
        /// Where to write the sorted keys, same formats as --input.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a grid of sizes, processor counts and scheduler seeds; CSV out.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Input sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Processor counts; defaults to --p.
        #[arg(long = "procs", value_delimiter = ',')]
        procs: Vec<usize>,
        /// Scheduler seeds; defaults to --sched-seed.
        #[arg(long = "sched-seeds", value_delimiter = ',')]
        sched_seeds: Vec<u64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every invariant suite on one input and print a verdict per suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Generated input size.
        #[arg(long, default_value_t = 4096)]
        n: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value_t = Generator::Uniform)]
    gen: Generator,
    /// Input generator seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    c: u32,
    /// Cache size in words.
    #[arg(long = "M", default_value_t = 1 << 14)]
    capacity: u64,
    /// Block size in words.
    #[arg(long = "B", default_value_t = 64)]
    block: u64,
    /// Simulated processors.
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long = "sched-seed", default_value_t = 0)]
    sched_seed: u64,
    /// Ticks per cache miss.
    #[arg(long = "miss-cost", alias = "b", default_value_t = 8)]
    miss_cost: u64,
    /// Ticks per successful steal.
    #[arg(long = "steal-cost", alias = "s", default_value_t = 32)]
    steal_cost: u64,
    /// Ticks per failed steal attempt; defaults to the steal cost.
    #[arg(long = "failed-steal-cost")]
    failed_steal_cost: Option<u64>,
    /// Copy transposing-redistribution pieces list by list (mutation test).
    #[arg(long)]
    inject_fault: bool,
}

impl Common {
    fn config(&self) -> Result<BenchConfig, bench::BenchConfigError> {
        let cost = CostModel {
            miss: self.miss_cost,
            steal: self.steal_cost,
            failed_steal: self.failed_steal_cost.unwrap_or(self.steal_cost),
        };
        let mut cfg = BenchConfig::new(self.c, self.capacity, self.block, self.p, cost)?;
        cfg.sched_seed = self.sched_seed;
        cfg.inject_fault = self.inject_fault;
        Ok(cfg)
    }

    fn generated(&self, n: usize) -> (Vec<u64>, Source) {
        (bench::generate(self.gen, n, self.seed), Source { name: self.gen.name().to_string(), seed: self.seed })
    }
}

fn trace_dir() -> Option<PathBuf> {
    std::env::var_os(TRACE_DIR_VAR).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("spms-bench: {msg}");
    ExitCode::from(USAGE)
}

fn failure(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("spms-bench: {msg}");
    ExitCode::from(FAILED)
}

fn emit(path: Option<&Path>, text: &[u8]) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Sort { common, n, input, output, report } => {
            let cfg = match common.config() {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            let (keys, source) = match &input {
                Some(path) => match bench::read_keys(path) {
                    Ok(k) => (k, Source { name: path.display().to_string(), seed: 0 }),
                    Err(e) => return usage(e),
                },
                None => common.generated(n.unwrap_or(4096)),
            };
            let out = match bench::run_once(&cfg, &keys, &source, false, trace_dir().as_deref()) {
                Ok(o) => o,
                Err(e) => return failure(format!("trace dump failed: {e}")),
            };
            if let Some(path) = &output {
                if let Err(e) = bench::write_keys(path, &out.sorted.keys) {
                    return failure(e);
                }
            }
            let mut text = out.report.to_json().expect("report serializes");
            text.push('\n');
            if let Err(e) = emit(report.as_deref(), text.as_bytes()) {
                return failure(e);
            }
            match out.mismatch {
                Some(at) => failure(format!("output differs from the oracle sort at position {at}")),
                None => ExitCode::SUCCESS,
            }
        }
        Command::Sweep { common, n, procs, sched_seeds, out } => {
            let base = match common.config() {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            let procs = if procs.is_empty() { vec![base.procs] } else { procs };
            let seeds = if sched_seeds.is_empty() { vec![base.sched_seed] } else { sched_seeds };
            if procs.contains(&0) {
                return usage("need at least one processor");
            }
            let trace = trace_dir();
            let mut rows = Vec::new();
            for &size in &n {
                let (keys, source) = common.generated(size);
                for &p in &procs {
                    for &seed in &seeds {
                        let cfg = BenchConfig { procs: p, sched_seed: seed, ..base.clone() };
                        rows.push(sweep_cell(&cfg, &keys, &source, trace.as_deref()));
                    }
                }
            }
            let mut buf = Vec::new();
            write_csv(&rows, &mut buf).expect("in-memory CSV");
            if let Err(e) = emit(out.as_deref(), &buf) {
                return failure(e);
            }
            if rows.iter().all(|r| r.verified && r.error.is_empty()) {
                ExitCode::SUCCESS
            } else {
                failure("some sweep cells failed")
            }
        }
        Command::Verify { common, n } => {
            let cfg = match common.config() {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            let (keys, source) = common.generated(n);
            let suites = match bench::verify(&cfg, &keys, &source) {
                Ok(s) => s,
                Err(e) => return failure(e),
            };
            let mut text = String::new();
            for s in &suites {
                text.push_str(&format!("{s}\n"));
            }
            let pass = suites.iter().all(|s| s.pass);
            text.push_str(if pass { "verdict: pass\n" } else { "verdict: FAIL\n" });
            print!("{text}");
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(FAILED)
            }
        }
    }
}

/// One grid cell; a panic inside the run is recorded in the row.
fn sweep_cell(cfg: &BenchConfig, keys: &[u64], source: &Source, trace: Option<&Path>) -> RunReport {
    let run =
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| bench::run_once(cfg, keys, source, false, trace)));
    match run {
        Ok(Ok(o)) => o.report,
        Ok(Err(e)) => failed_row(cfg, keys, source, format!("trace dump failed: {e}")),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            failed_row(cfg, keys, source, msg)
        }
    }
}

fn failed_row(cfg: &BenchConfig, keys: &[u64], source: &Source, error: String) -> RunReport {
    RunReport {
        schema: SCHEMA,
        n: keys.len() as u64,
        source: source.name.clone(),
        input_seed: source.seed,
        c: cfg.params.c,
        block: cfg.cache.block,
        capacity: cfg.cache.capacity,
        procs: cfg.procs as u64,
        sched_seed: cfg.sched_seed,
        miss_cost: cfg.cost.miss,
        steal_cost: cfg.cost.steal,
        failed_steal_cost: cfg.cost.failed_steal,
        fault_injected: cfg.inject_fault,
        error,
        ..RunReport::default()
    }
}
