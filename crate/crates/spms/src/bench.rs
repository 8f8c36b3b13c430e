//! Harness behind the `spms-bench` binary: inputs, one measured run per
//! configuration, and the invariant suites of `verify`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::replay_sequential;
use crate::dag::{check_steal_path, direct_steals, steal_path, task_depth_and_work, NodeId};
use crate::exec::{Exec, ExecOptions, Recording, FRAME_WORDS};
use crate::fs::sharing_audit;
use crate::memory::{CacheConfig, ConfigError};
use crate::report::{RunReport, SCHEMA};
use crate::sched::{self, CostModel, SchedOptions, Schedule};
use crate::spms::{sort, ParamError, Sorted, SpmsParams};

/// Environment variable naming a directory for trace dumps.
pub const TRACE_DIR_VAR: &str = "SPMS_TRACE_DIR";

/// Shared writable blocks allowed between the two sides of a fork inside
/// transposing redistribution: one at each end of a subtask's output.
pub const TR_SHARED_LIMIT: u64 = 2;
/// The same for every other audited procedure.
pub const SHARED_LIMIT: u64 = 8;
/// Charged delay of one permuting-writes scratch array, in units of B.
pub const SCRATCH_DELAY_LIMIT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Uniform,
    Sorted,
    Reverse,
    FewDistinct,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Uniform => "uniform",
            Generator::Sorted => "sorted",
            Generator::Reverse => "reverse",
            Generator::FewDistinct => "few-distinct",
        }
    }
}

/// Keys from `gen`; identical for identical arguments.
pub fn generate(gen: Generator, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match gen {
        Generator::Uniform => (0..n).map(|_| rng.gen()).collect(),
        Generator::Sorted => {
            let mut v: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
            v.sort_unstable();
            v
        }
        Generator::Reverse => {
            let mut v: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
            v.sort_unstable_by(|a, b| b.cmp(a));
            v
        }
        Generator::FewDistinct => (0..n).map(|_| rng.gen_range(0..16)).collect(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("{0}: unknown key file extension (want .bin or .txt)")]
    Extension(PathBuf),
    #[error("{0}: length {1} is not a multiple of 8 bytes")]
    Truncated(PathBuf, usize),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

enum Format {
    Binary,
    Text,
}

fn format_of(path: &Path) -> Result<Format, InputError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => Ok(Format::Binary),
        Some("txt") => Ok(Format::Text),
        _ => Err(InputError::Extension(path.to_path_buf())),
    }
}

/// Reads little-endian u64 keys from `.bin` or decimal lines from `.txt`.
pub fn read_keys(path: &Path) -> Result<Vec<u64>, InputError> {
    let io = |e| InputError::Io(path.to_path_buf(), e);
    match format_of(path)? {
        Format::Binary => {
            let bytes = std::fs::read(path).map_err(io)?;
            if bytes.len() % 8 != 0 {
                return Err(InputError::Truncated(path.to_path_buf(), bytes.len()));
            }
            Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
        }
        Format::Text => {
            let mut keys = Vec::new();
            for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
                let line = line.map_err(io)?;
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                let k = t.parse().map_err(|e: std::num::ParseIntError| InputError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
                keys.push(k);
            }
            Ok(keys)
        }
    }
}

pub fn write_keys(path: &Path, keys: &[u64]) -> Result<(), InputError> {
    let io = |e| InputError::Io(path.to_path_buf(), e);
    let format = format_of(path)?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for k in keys {
        match format {
            Format::Binary => w.write_all(&k.to_le_bytes()),
            Format::Text => writeln!(w, "{k}"),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, thiserror::Error)]
pub enum BenchConfigError {
    #[error(transparent)]
    Cache(#[from] ConfigError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("need at least one processor")]
    NoProcessors,
    #[error("steal cost {steal} is below the miss cost {miss}")]
    StealCost { steal: u64, miss: u64 },
    #[error("costs must be positive")]
    ZeroCost,
}

/// One run's configuration, keys aside.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub params: SpmsParams,
    pub cache: CacheConfig,
    pub procs: usize,
    pub sched_seed: u64,
    pub cost: CostModel,
    /// Copies pieces list by list inside transposing redistribution.
    pub inject_fault: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            params: SpmsParams::default(),
            cache: CacheConfig::default(),
            procs: 1,
            sched_seed: 0,
            cost: CostModel::default(),
            inject_fault: false,
        }
    }
}

impl BenchConfig {
    /// Builds and checks a configuration: M ≥ B², p ≥ 1, c even and ≥ 6, s ≥ b.
    pub fn new(c: u32, capacity: u64, block: u64, procs: usize, cost: CostModel) -> Result<Self, BenchConfigError> {
        let cache = CacheConfig::new(capacity, block)?;
        let params = SpmsParams::new(c)?;
        if procs == 0 {
            return Err(BenchConfigError::NoProcessors);
        }
        if cost.miss == 0 || cost.failed_steal == 0 {
            return Err(BenchConfigError::ZeroCost);
        }
        if cost.steal < cost.miss {
            return Err(BenchConfigError::StealCost { steal: cost.steal, miss: cost.miss });
        }
        Ok(Self { params, cache, procs, cost, ..Self::default() })
    }

    fn exec_options(&self, record: bool) -> ExecOptions {
        ExecOptions {
            cache: self.cache,
            record,
            stream_cache: true,
            output_order: !self.inject_fault,
            ..ExecOptions::default()
        }
    }
}

/// Where the keys came from, for the report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub name: String,
    pub seed: u64,
}

/// First position where `out` differs from the oracle sort of `keys`.
pub fn oracle_mismatch(keys: &[u64], out: &Sorted) -> Option<usize> {
    let mut ids: Vec<u64> = (0..keys.len() as u64).collect();
    ids.sort_by_key(|&i| keys[i as usize]);
    if out.ids.len() != ids.len() {
        return Some(out.ids.len().min(ids.len()));
    }
    out.ids.iter().zip(&ids).position(|(a, b)| a != b)
}

/// Everything one run produced.
pub struct Outcome {
    pub report: RunReport,
    pub sorted: Sorted,
    pub mismatch: Option<usize>,
    /// Kept only when the run was recorded.
    pub recording: Option<Recording>,
    pub schedule: Option<Schedule>,
}

fn trace_file(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Sorts `keys` under `cfg`, checks the output against the oracle and
/// measures the run. A run is recorded and scheduled when `p > 1`, when
/// `record` is set, or when `trace_dir` asks for dumps; otherwise the
/// single-processor schedule is the sequential execution itself.
pub fn run_once(
    cfg: &BenchConfig,
    keys: &[u64],
    source: &Source,
    record: bool,
    trace_dir: Option<&Path>,
) -> std::io::Result<Outcome> {
    let record = record || cfg.procs > 1 || trace_dir.is_some();
    let mut m = Exec::new(cfg.exec_options(record));
    let sorted = sort(&mut m, keys, cfg.params);
    let mismatch = oracle_mismatch(keys, &sorted);
    let q_seq = m.seq_misses().expect("streaming cache is on");
    let n = keys.len();
    let mut r = RunReport {
        schema: SCHEMA,
        n: n as u64,
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
        verified: mismatch.is_none(),
        work: m.work(),
        span: m.span(),
        forks: m.forks(),
        peak_heap_words: m.peak_heap_words(),
        step1_calls: sorted.stats.step1_calls,
        window_violations: sorted.stats.window_violations,
        weak_bound_flags: sorted.stats.weak_bound_flags,
        buffer_violations: m.buffer_violations(),
        q_seq,
        kernels: 1,
        ..RunReport::default()
    };
    let recording = m.into_recording();
    let mut schedule = None;
    match &recording {
        Some(rec) => {
            let s = match trace_dir {
                Some(dir) => {
                    let mut w = trace_file(dir, &format!("memory-n{n}.csv"))?;
                    rec.dump_trace(&mut w)?;
                    w.flush()?;
                    let mut w = trace_file(dir, &format!("schedule-n{n}-p{}-s{}.csv", cfg.procs, cfg.sched_seed))?;
                    writeln!(w, "time,proc,event,node")?;
                    let s = sched::run(rec, sched_options(cfg), Some(&mut w));
                    w.flush()?;
                    s
                }
                None => sched::run(rec, sched_options(cfg), None),
            };
            fill_from_schedule(&mut r, &s);
            schedule = Some(s);
        }
        None => {
            r.q_par = q_seq;
            r.makespan = r.work;
            r.charged_makespan = r.work + cfg.cost.miss * q_seq;
        }
    }
    r.derive();
    Ok(Outcome { report: r, sorted, mismatch, recording, schedule })
}

fn sched_options(cfg: &BenchConfig) -> SchedOptions {
    SchedOptions { procs: cfg.procs, seed: cfg.sched_seed, cost: cfg.cost }
}

/// Schedules an existing recording under `cfg`'s processors, seed and costs.
/// `base` is the report of the recorded run; its sort-side fields are kept.
pub fn reschedule(cfg: &BenchConfig, base: &RunReport, rec: &Recording) -> (RunReport, Schedule) {
    let s = sched::run(rec, sched_options(cfg), None);
    let mut r = RunReport {
        procs: cfg.procs as u64,
        sched_seed: cfg.sched_seed,
        miss_cost: cfg.cost.miss,
        steal_cost: cfg.cost.steal,
        failed_steal_cost: cfg.cost.failed_steal,
        ..base.clone()
    };
    fill_from_schedule(&mut r, &s);
    r.derive();
    (r, s)
}

fn fill_from_schedule(r: &mut RunReport, s: &Schedule) {
    r.q_par = s.q_par();
    r.steal_misses = r.q_par as i64 - r.q_seq as i64;
    r.epsilon = r.q_seq.saturating_sub(r.q_par);
    r.steals = s.steals.len() as u64;
    r.usurpations = s.usurpations;
    r.failed_steals = s.failed_attempts;
    r.steal_ticks = s.nominal.iter().map(|l| l.steal_ok).sum();
    r.failed_steal_ticks = s.nominal.iter().map(|l| l.steal_failed).sum();
    r.idle_ticks = s.nominal.iter().map(|l| l.idle).sum();
    r.makespan = s.makespan;
    r.charged_makespan = s.charged_makespan;
    r.fs_delay = s.fs.total;
    r.max_block_delay = s.fs.max_block_delay;
    r.max_charged_delay = s.fs.max_charged;
    r.shared_blocks = s.fs.shared_blocks;
    r.invalidations = s.invalidations;
    r.max_scratch_delay = s.scratch_delay.iter().map(|d| d.1).max().unwrap_or(0);
    r.kernels = s.kernels.len() as u64;
    r.kernel_faults = s.kernel_faults;
    r.misalign_max = s.misalign_max;
    r.misalign_violations = s.misalign_violations;
}

/// Verdict of one invariant suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suite {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.pass { "pass" } else { "FAIL" };
        write!(f, "{:<18} {verdict}  {}", self.name, self.detail)
    }
}

fn suite(name: &'static str, pass: bool, detail: String) -> Suite {
    Suite { name, pass, detail }
}

/// Runs `keys` recorded and scheduled, then checks every invariant suite.
/// The verdict text is a pure function of the inputs.
pub fn verify(cfg: &BenchConfig, keys: &[u64], source: &Source) -> std::io::Result<Vec<Suite>> {
    let out = run_once(cfg, keys, source, true, None)?;
    let rec = out.recording.as_ref().expect("verify records");
    let s = out.schedule.as_ref().expect("verify schedules");
    let r = &out.report;
    let dag = &rec.dag;
    let block = cfg.cache.block;
    let mut suites = Vec::new();

    suites.push(suite(
        "oracle",
        out.mismatch.is_none(),
        match out.mismatch {
            None => format!("n={} matches", keys.len()),
            Some(at) => format!("first difference at position {at}"),
        },
    ));
    let st = &out.sorted.stats;
    suites.push(suite(
        "windows",
        st.window_violations == 0,
        format!(
            "{} partitions, {} subproblems checked, {} violations, {} weak-bound flags",
            st.step1_calls, st.subproblems_checked, st.window_violations, st.weak_bound_flags
        ),
    ));
    suites.push(suite(
        "buffers",
        r.buffer_violations == 0,
        format!("{} buffered arrays, {} violations", rec.buffers.len(), r.buffer_violations),
    ));

    let q_replay = replay_sequential(rec, &rec.config);
    suites.push(suite(
        "dag",
        dag.is_well_formed() && dag.work() == r.work && dag.span() == r.span && q_replay == r.q_seq,
        format!("work {} span {} Q_seq {} (replay {q_replay})", dag.work(), dag.span(), r.q_seq),
    ));

    let same_kernels = s.kernels.len() == s.derived_kernels.len()
        && s.kernels.iter().zip(&s.derived_kernels).all(|(a, b)| a.start == b.start && a.end == b.end);
    let steals = s.steals.len() as u64;
    // An empty dag has no kernels to count.
    let count_ok = r.kernels == 2 * steals + 1 || (dag.is_empty() && r.kernels == 0);
    suites.push(suite(
        "kernels",
        same_kernels && count_ok && s.kernel_faults == 0 && s.usurpations <= steals,
        format!("{} kernels for S={steals}, U={}, {} contiguity faults", r.kernels, s.usurpations, s.kernel_faults),
    ));

    let stolen: Vec<NodeId> = s.steals.iter().map(|x| x.fork).collect();
    let mut sorted_stolen = stolen.clone();
    sorted_stolen.sort_unstable();
    let is_stolen = |f: NodeId| sorted_stolen.binary_search(&f).is_ok();
    let groups = direct_steals(dag, &stolen);
    let bad_paths = groups
        .iter()
        .filter(|(root, direct)| !check_steal_path(dag, &steal_path(dag, **root, &is_stolen), direct, &is_stolen))
        .count();
    suites.push(suite("steal_paths", bad_paths == 0, format!("{} tasks, {bad_paths} failing", groups.len())));

    let depths = task_depth_and_work(dag, &stolen);
    let seg_bad = depths.iter().filter(|&&(d, w)| d as u64 > w.max(1)).count();
    let worst = depths.iter().map(|&(d, w)| (FRAME_WORDS * d as u64) as f64 / w.max(1) as f64).fold(0.0, f64::max);
    suites.push(suite(
        "segments",
        seg_bad == 0,
        format!("max path words per unit of task work {worst:.4}, {seg_bad} over {FRAME_WORDS}"),
    ));

    let ticks: u64 = s.nominal.iter().map(|l| l.total()).sum();
    let charged: u64 = s.charged.iter().map(|l| l.total()).sum();
    let p = cfg.procs as u64;
    suites.push(suite(
        "conservation",
        ticks == p * s.makespan && charged == p * s.charged_makespan && r.idle_ticks == 0,
        format!("{ticks} ticks over {p} processors, makespan {}, idle {}", s.makespan, r.idle_ticks),
    ));

    suites.push(suite(
        "misalignment",
        s.misalign_violations == 0 && s.heap_misaligned == 0,
        format!("max {} parallel blocks per sequential block (limit {})", s.misalign_max, sched::MISALIGN_LIMIT),
    ));

    let fs_ok = steals > 0 || s.fs.total == 0;
    suites.push(suite(
        "false_sharing",
        fs_ok && s.stack_audit.violations.is_empty(),
        format!(
            "F={} over S={steals}, max block delay {}, {} stack blocks audited, {} over 2x+u",
            s.fs.total,
            s.fs.max_block_delay,
            s.stack_audit.blocks,
            s.stack_audit.violations.len()
        ),
    ));

    let audit = sharing_audit(rec);
    let tr = audit.max_shared("transposing_redistribution");
    let others = audit
        .scopes
        .iter()
        .filter(|(name, _)| name.as_str() != "transposing_redistribution")
        .map(|(_, v)| v.max_shared)
        .max()
        .unwrap_or(0);
    suites.push(suite(
        "sharing",
        tr <= TR_SHARED_LIMIT && others <= SHARED_LIMIT,
        format!(
            "transposing redistribution {tr} (limit {TR_SHARED_LIMIT}), other procedures {others} (limit {SHARED_LIMIT})"
        ),
    ));
    let worst_scratch = s.scratch_delay.iter().map(|d| d.1).max().unwrap_or(0);
    suites.push(suite(
        "scratch",
        worst_scratch <= SCRATCH_DELAY_LIMIT * block,
        format!(
            "{} scratch arrays, max charged delay {worst_scratch} (limit {})",
            s.scratch_delay.len(),
            SCRATCH_DELAY_LIMIT * block
        ),
    ));
    Ok(suites)
}
