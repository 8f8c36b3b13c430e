//! Flat per-run report: JSON for single runs, CSV rows for sweeps.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported report schema {0}")]
    Schema(u32),
}

/// One run. Costs are in ticks; `capacity` and `block` are M and B in words.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub n: u64,
    pub source: String,
    pub input_seed: u64,
    pub c: u32,
    pub block: u64,
    pub capacity: u64,
    pub procs: u64,
    pub sched_seed: u64,
    pub miss_cost: u64,
    pub steal_cost: u64,
    pub failed_steal_cost: u64,
    pub fault_injected: bool,

    pub verified: bool,
    pub work: u64,
    pub span: u64,
    pub forks: u64,
    pub peak_heap_words: u64,
    pub step1_calls: u64,
    pub window_violations: u64,
    pub weak_bound_flags: u64,
    pub buffer_violations: u64,

    pub q_seq: u64,
    pub q_par: u64,
    /// Q_par − Q_seq.
    pub steal_misses: i64,
    /// Misses saved by sharing between processors: max(0, Q_seq − Q_par).
    pub epsilon: u64,

    pub steals: u64,
    pub usurpations: u64,
    pub failed_steals: u64,
    pub steal_ticks: u64,
    pub failed_steal_ticks: u64,
    pub idle_ticks: u64,
    pub makespan: u64,
    pub charged_makespan: u64,
    /// (T1 + b·Q_seq + b·S·M/B + b·F + T_s + T_u + I) / p.
    pub tp_estimate: f64,

    pub fs_delay: u64,
    pub max_block_delay: u64,
    pub max_charged_delay: u64,
    pub shared_blocks: u64,
    pub invalidations: u64,
    pub max_scratch_delay: u64,
    pub kernels: u64,
    pub kernel_faults: u64,
    pub misalign_max: u64,
    pub misalign_violations: u64,

    pub work_ratio: Option<f64>,
    pub span_ratio: Option<f64>,
    pub qseq_ratio: Option<f64>,
    pub steal_miss_ratio: Option<f64>,
    pub fs_ratio: Option<f64>,
    pub kernel_ratio: Option<f64>,
    /// S / (p·(span + (b/s)·B·log n / log B)).
    pub steal_band_ratio: Option<f64>,

    pub error: String,
}

fn log2(x: f64) -> f64 {
    x.log2()
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0 && den.is_finite()).then(|| num / den)
}

impl RunReport {
    /// Fills the estimate and the ratio columns from the raw fields.
    pub fn derive(&mut self) {
        let n = self.n as f64;
        let (m, b) = (self.capacity as f64, self.block as f64);
        let s = self.steals as f64;
        let logn = log2(n);
        self.tp_estimate = (self.work as f64
            + (self.miss_cost * self.q_seq) as f64
            + self.miss_cost as f64 * s * m / b
            + (self.miss_cost * self.fs_delay) as f64
            + self.steal_ticks as f64
            + self.failed_steal_ticks as f64
            + self.idle_ticks as f64)
            / self.procs.max(1) as f64;
        self.work_ratio = if n >= 2.0 { ratio(self.work as f64, n * logn) } else { None };
        self.span_ratio = if n >= 4.0 { ratio(self.span as f64, logn * log2(logn)) } else { None };
        self.qseq_ratio = if n >= 2.0 { ratio(self.q_seq as f64 * b * log2(m), n * logn) } else { None };
        self.steal_miss_ratio = ratio(self.steal_misses as f64 * b, s * m);
        self.fs_ratio = ratio(self.fs_delay as f64, s * b);
        self.kernel_ratio = ratio(self.kernels as f64, 2.0 * s + 1.0);
        self.steal_band_ratio = if n >= 2.0 && b >= 2.0 {
            let cost = self.miss_cost as f64 / self.steal_cost as f64;
            ratio(s, self.procs as f64 * (self.span as f64 + cost * b * logn / log2(b)))
        } else {
            None
        };
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let r: RunReport = serde_json::from_str(text)?;
        if r.schema != SCHEMA {
            return Err(ReportError::Schema(r.schema));
        }
        Ok(r)
    }
}

/// Header plus one row per report.
pub fn write_csv(reports: &[RunReport], out: impl Write) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<RunReport>, ReportError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let r: RunReport = row?;
        if r.schema != SCHEMA {
            return Err(ReportError::Schema(r.schema));
        }
        out.push(r);
    }
    Ok(out)
}
