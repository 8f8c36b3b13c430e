//! The sort itself: base case, deterministic sample and partition, and the
//! two rounds of recursive merging, over two ping-pong arenas.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::memory::SimArray;
use crate::procedures::{
    prefix_sums, probe_bound, small_multi_merge, tr_prep, transposing_redistribution, Directory, PivotTable, Region,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("exponent c must be even and at least 6, got {0}")]
    BadExponent(u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("run {0} is not sorted")]
    Unsorted(usize),
    #[error("runs do not tile the values contiguously (run {0})")]
    NotContiguous(usize),
    #[error("{runs} runs exceed r = {r}")]
    TooManyRuns { runs: usize, r: usize },
    #[error("n = {n} exceeds 3 r^c for r = {r}")]
    TooLong { n: usize, r: usize },
    #[error("r must be positive")]
    ZeroR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpmsParams {
    pub c: u32,
    pub base_threshold: usize,
}

impl Default for SpmsParams {
    fn default() -> Self {
        Self { c: 6, base_threshold: 24 }
    }
}

fn sat_pow(r: usize, e: u32) -> u128 {
    (r as u128).checked_pow(e).unwrap_or(u128::MAX)
}

impl SpmsParams {
    pub fn new(c: u32) -> Result<Self, ParamError> {
        if c < 6 || !c.is_multiple_of(2) {
            return Err(ParamError::BadExponent(c));
        }
        Ok(Self { c, ..Self::default() })
    }

    /// Sampling interval `max(1, r^(c/2 - 1))`.
    pub fn sample_gap(&self, r: usize) -> usize {
        sat_pow(r, self.c / 2 - 1).clamp(1, usize::MAX as u128) as usize
    }

    /// `r^(c/2)`: sizes above three times this trigger sample and partition.
    pub fn half_power(&self, r: usize) -> u128 {
        sat_pow(r, self.c / 2)
    }

    pub fn runs_step1(&self, n: usize, r: usize) -> bool {
        n > self.base_threshold && (n as u128) > self.half_power(r).saturating_mul(3)
    }
}

pub fn ceil_sqrt(r: usize) -> usize {
    let mut q = (r as f64).sqrt() as usize;
    while q * q < r {
        q += 1;
    }
    while q > 1 && (q - 1) * (q - 1) >= r {
        q -= 1;
    }
    q.max(1)
}

/// Sizes of the subproblems one sample-and-partition produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub r: usize,
    pub n: usize,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpmsStats {
    pub step1_calls: u64,
    pub degenerate_step1: u64,
    pub base_cases: u64,
    pub max_depth: u32,
    /// Non-final subproblems checked against the size window.
    pub subproblems_checked: u64,
    /// Non-final subproblems outside `[r^(c/2) + 1, 3 r^(c/2) - 1]`.
    pub window_violations: u64,
    /// Of those, how many still fit the looser `3c r^(c/2)` bound.
    pub weak_bound_flags: u64,
    /// Any subproblem (final ones included) above `3 r^(c/2) - 1`.
    pub oversize: u64,
    #[serde(skip)]
    pub partitions: Vec<PartitionRecord>,
}

#[derive(Debug, Clone, Copy)]
enum Lists {
    /// `count` one-element lists at consecutive words starting at `o`.
    Unit {
        count: usize,
    },
    Stored {
        dir: Directory,
    },
}

impl Lists {
    fn count(&self) -> usize {
        match *self {
            Lists::Unit { count } => count,
            Lists::Stored { dir } => dir.entries(),
        }
    }
}

struct Ctx {
    params: SpmsParams,
    arenas: [SimArray; 2],
    stats: RefCell<SpmsStats>,
}

impl Ctx {
    fn other(&self, a: SimArray) -> SimArray {
        if a == self.arenas[0] {
            self.arenas[1]
        } else {
            self.arenas[0]
        }
    }
}

fn copy(m: &mut Exec, from: SimArray, to: SimArray, o: usize, n: usize) {
    let grain = m.grain();
    m.par_for(n, grain, &|m, i| {
        let v = m.read(from, o + i);
        m.write(to, o + i, v);
    });
}

/// Merges the lists occupying `src[o..o+n]` into `dst[o..o+n]`.
#[allow(clippy::too_many_arguments)]
fn merge(
    ctx: &Ctx,
    m: &mut Exec,
    src: SimArray,
    dst: SimArray,
    o: usize,
    n: usize,
    r: usize,
    lists: Lists,
    depth: u32,
) {
    debug_assert_ne!(src, dst);
    {
        let mut st = ctx.stats.borrow_mut();
        st.max_depth = st.max_depth.max(depth);
    }
    if n == 0 {
        return;
    }
    if lists.count() <= 1 {
        copy(m, src, dst, o, n);
    } else if n <= ctx.params.base_threshold {
        ctx.stats.borrow_mut().base_cases += 1;
        m.leaf(|m| {
            let mut v: Vec<u64> = (0..n).map(|i| m.read(src, o + i)).collect();
            for i in 1..v.len() {
                let mut j = i;
                while j > 0 && m.less(v[j], v[j - 1]) {
                    v.swap(j, j - 1);
                    j -= 1;
                }
            }
            for (i, x) in v.into_iter().enumerate() {
                m.write(dst, o + i, x);
            }
        });
    } else if ctx.params.runs_step1(n, r) {
        let Lists::Stored { dir } = lists else {
            unreachable!("one-element lists never exceed the sampling threshold")
        };
        let (k, dir_out) = step1(ctx, m, src, dst, o, n, r, dir);
        let l = dir.entries();
        let out = Directory::new(Region::whole(dir_out).sub(0, 2 * k * l));
        m.par_tasks(k, &|m, b| {
            let (ob, nb) = m.leaf(|m| {
                let start = out.start_of(m, b * l) as usize;
                let end = if b + 1 < k { out.start_of(m, (b + 1) * l) as usize } else { o + n };
                (start, end - start)
            });
            solve_sub(ctx, m, dst, dst, ob, nb, r, Lists::Stored { dir: out.sub(b * l, l) }, depth + 1);
        });
        m.free(dir_out);
    } else {
        solve_sub(ctx, m, src, dst, o, n, r, lists, depth);
    }
}

/// Steps 2 and 3 on one subproblem whose lists are in `input`; the result
/// goes to `out`, which is either `input` or the other arena.
#[allow(clippy::too_many_arguments)]
fn solve_sub(
    ctx: &Ctx,
    m: &mut Exec,
    input: SimArray,
    out: SimArray,
    o: usize,
    n: usize,
    r: usize,
    lists: Lists,
    depth: u32,
) {
    if n == 0 {
        return;
    }
    let other = ctx.other(input);
    let q = ceil_sqrt(r);
    let count = lists.count();
    let groups = count.div_ceil(q);
    if groups <= 1 {
        merge(ctx, m, input, other, o, n, q, lists, depth + 1);
        if out == input {
            copy(m, other, input, o, n);
        }
        return;
    }

    let dir3 = m.alloc(2 * groups);
    let merged = Directory::new(Region::whole(dir3));
    let grain = m.grain();
    m.par_for(groups, grain, &|m, g| {
        let (start, size) = match lists {
            Lists::Unit { count } => (o + g * q, q.min(count - g * q)),
            Lists::Stored { dir } => {
                let start = dir.start_of(m, g * q) as usize;
                let end = if g + 1 < groups { dir.start_of(m, (g + 1) * q) as usize } else { o + n };
                (start, end - start)
            }
        };
        merged.set(m, g, size as u64, start as u64);
    });
    m.par_tasks(groups, &|m, g| {
        let (size, start) = m.leaf(|m| (merged.len_of(m, g) as usize, merged.start_of(m, g) as usize));
        let first = g * q;
        let cnt = q.min(count - first);
        let sub = match lists {
            Lists::Unit { .. } => Lists::Unit { count: cnt },
            Lists::Stored { dir } => Lists::Stored { dir: dir.sub(first, cnt) },
        };
        merge(ctx, m, input, other, start, size, q, sub, depth + 1);
    });
    merge(ctx, m, other, input, o, n, q, Lists::Stored { dir: merged }, depth + 1);
    if out != input {
        copy(m, input, out, o, n);
    }
    m.free(dir3);
}

/// Sample, sort the sample, pick pivots and redistribute `src[o..o+n]` into
/// `dst[o..o+n]` as `k` consecutive subproblems. Returns `k` and the output
/// directory (`k * lists` entries, subproblem-major), which the caller frees.
#[allow(clippy::too_many_arguments)]
fn step1(
    ctx: &Ctx,
    m: &mut Exec,
    src: SimArray,
    dst: SimArray,
    o: usize,
    n: usize,
    r: usize,
    dir: Directory,
) -> (usize, SimArray) {
    ctx.stats.borrow_mut().step1_calls += 1;
    let params = ctx.params;
    let l = dir.entries();
    let gap = params.sample_gap(r);
    let grain = m.grain();
    let k_max = n / (2 * r * gap) + 1;
    let dir_out = m.alloc(2 * k_max * l);

    m.scoped("step1", |m| {
        // Sample every gap-th item of each list.
        let cnts = Region::whole(m.alloc(l));
        let sigma = Region::whole(m.alloc(l));
        m.par_for(l, grain, &|m, i| {
            let len = dir.len_of(m, i);
            cnts.write(m, i, len / gap as u64);
        });
        let s = prefix_sums(m, cnts.strided(0, 1), l, sigma.strided(0, 1)) as usize;
        let pivots = s / (2 * r);
        let k = pivots + 1;
        if pivots == 0 {
            ctx.stats.borrow_mut().degenerate_step1 += 1;
        }

        let cs = Region::whole(m.alloc(l));
        let tau = Region::whole(m.alloc(l));
        m.par_for(l, grain, &|m, i| {
            let c = cnts.read(m, i);
            cs.write(m, i, c / r as u64);
        });
        let ss = prefix_sums(m, cs.strided(0, 1), l, tau.strided(0, 1)) as usize;

        let probes_s = ss * l * probe_bound(r);
        let s_buf = m.alloc_buffered(s, probes_s);
        let s_core = Region::buffered(m, &s_buf);
        let dir_sl = Directory::new(Region::whole(m.alloc(2 * l)));
        let a_view = Region::new(src, 0, src.len);
        m.par_tasks(l, &|m, i| {
            let (cnt, base, start) = m.leaf(|m| {
                let cnt = cnts.read(m, i) as usize;
                let base = sigma.read(m, i) as usize;
                dir_sl.set(m, i, cnt as u64, s_core.arr_index(base) as u64);
                (cnt, base, dir.start_of(m, i) as usize)
            });
            m.par_for(cnt, grain, &|m, t| {
                let v = a_view.read(m, start + (t + 1) * gap - 1);
                s_core.write(m, base + t, v);
            });
        });
        m.seal(&s_buf);

        // Substep I: sort every r-th sample.
        let probes_ss = ss * l.saturating_sub(1) * probe_bound(ss);
        let ss_buf = m.alloc_buffered(ss, probes_ss);
        let ss_core = Region::buffered(m, &ss_buf);
        let dir_ss = Directory::new(Region::whole(m.alloc(2 * l)));
        m.par_tasks(l, &|m, i| {
            let (cnt, base, sbase) = m.leaf(|m| {
                let cnt = cs.read(m, i) as usize;
                let base = tau.read(m, i) as usize;
                dir_ss.set(m, i, cnt as u64, ss_core.arr_index(base) as u64);
                (cnt, base, sigma.read(m, i) as usize)
            });
            m.par_for(cnt, grain, &|m, u| {
                let v = s_core.read(m, sbase + (u + 1) * r - 1);
                ss_core.write(m, base + u, v);
            });
        });
        m.seal(&ss_buf);
        let stride = 2 * l + 1;
        let ranked_ss = Region::whole(m.alloc(ss * stride));
        small_multi_merge(m, ss_core, dir_ss, l, None, ranked_ss);

        // Substep II: split the sample around the sorted subsample.
        let buckets = ss + 1;
        let ranks_s = Region::whole(m.alloc((buckets + 1) * l));
        let dir_buckets = Directory::new(Region::whole(m.alloc(2 * buckets * l)));
        let table = PivotTable { ranked: ranked_ss, first: 0, stride, count: ss, window: r, d: r - 1 };
        tr_prep(m, s_core, dir_sl, &table, ranks_s, dir_buckets);
        let probes_s2 = s * l.saturating_sub(1) * probe_bound(r);
        let s2_buf = m.alloc_buffered(s, probes_s2);
        let s2_core = Region::buffered(m, &s2_buf);
        let dir_s2 = Directory::new(Region::whole(m.alloc(2 * buckets * l)));
        transposing_redistribution(m, s_core, dir_buckets, l, s2_core, Some(dir_s2));
        m.seal(&s2_buf);

        // Substep III: sort each bucket; straddles become ranks within the sample lists.
        let ranked_s = Region::whole(m.alloc(s * stride));
        small_multi_merge(m, s2_core, dir_s2, l, Some(ranks_s.sub(0, buckets * l)), ranked_s);

        // Partition the input around every 2r-th sorted sample.
        let ranks_a = Region::whole(m.alloc((k + 1) * l));
        let dir_pieces = Directory::new(Region::whole(m.alloc(2 * k * l)));
        let a_buf = m.buffered_view(src, o, n);
        m.seal(&a_buf);
        let a_core = Region { off: 0, len: src.len, ..Region::buffered(m, &a_buf) };
        let table = PivotTable {
            ranked: ranked_s,
            first: (2 * r - 1) * stride,
            stride: 2 * r * stride,
            count: pivots,
            window: gap,
            d: gap - 1,
        };
        tr_prep(m, a_core, dir, &table, ranks_a, dir_pieces);
        let out_dir = Directory::new(Region::whole(dir_out).sub(0, 2 * k * l));
        transposing_redistribution(m, a_core, dir_pieces, l, Region::new(dst, o, n), Some(out_dir));

        record_partition(ctx, m, out_dir, k, l, o + n, r, n);

        m.free(dir_pieces.words.arr);
        m.free(ranks_a.arr);
        m.free(ranked_s.arr);
        m.free(dir_s2.words.arr);
        m.free_buffered(s2_buf);
        m.free(dir_buckets.words.arr);
        m.free(ranks_s.arr);
        m.free(ranked_ss.arr);
        m.free(dir_ss.words.arr);
        m.free_buffered(ss_buf);
        m.free(dir_sl.words.arr);
        m.free_buffered(s_buf);
        m.free(tau.arr);
        m.free(cs.arr);
        m.free(sigma.arr);
        m.free(cnts.arr);
        (k, dir_out)
    })
}

#[allow(clippy::too_many_arguments)]
fn record_partition(ctx: &Ctx, m: &Exec, out: Directory, k: usize, l: usize, end: usize, r: usize, n: usize) {
    let entries = out.peek_all(m);
    let sizes: Vec<usize> = (0..k)
        .map(|b| {
            let start = entries[b * l].1 as usize;
            let stop = if b + 1 < k { entries[(b + 1) * l].1 as usize } else { end };
            stop - start
        })
        .collect();
    let half = ctx.params.half_power(r);
    let weak = half.saturating_mul(3 * ctx.params.c as u128);
    let mut st = ctx.stats.borrow_mut();
    for (b, &size) in sizes.iter().enumerate() {
        let size = size as u128;
        if size + 1 > 3 * half {
            st.oversize += 1;
        }
        if b + 1 == k {
            continue;
        }
        st.subproblems_checked += 1;
        if size <= half || size + 1 > 3 * half {
            st.window_violations += 1;
            if size <= weak {
                st.weak_bound_flags += 1;
            }
        }
    }
    st.partitions.push(PartitionRecord { r, n, sizes });
}

/// Result of a sort or merge run.
#[derive(Debug, Clone)]
pub struct Sorted {
    /// Element ids (original input positions) in output order.
    pub ids: Vec<u64>,
    pub keys: Vec<u64>,
    pub stats: SpmsStats,
}

fn run(m: &mut Exec, keys: &[u64], params: SpmsParams, r: usize, runs: Option<&[(usize, usize)]>) -> Sorted {
    let n = keys.len();
    m.set_keys(keys.to_vec());
    let x = m.alloc(n);
    let y = m.alloc(n);
    for i in 0..n {
        m.poke(x, i, i as u64);
    }
    let ctx = Ctx { params, arenas: [x, y], stats: RefCell::new(SpmsStats::default()) };
    match runs {
        None => merge(&ctx, m, x, y, 0, n, r.max(1), Lists::Unit { count: n }, 0),
        Some(runs) => {
            let d = m.alloc(2 * runs.len());
            for (i, &(off, len)) in runs.iter().enumerate() {
                m.poke(d, 2 * i, len as u64);
                m.poke(d, 2 * i + 1, off as u64);
            }
            let dir = Directory::new(Region::whole(d));
            merge(&ctx, m, x, y, 0, n, r, Lists::Stored { dir }, 0);
            m.free(d);
        }
    }
    let ids: Vec<u64> = (0..n).map(|i| m.peek(y, i)).collect();
    m.free(y);
    m.free(x);
    let keys = ids.iter().map(|&i| keys[i as usize]).collect();
    Sorted { ids, keys, stats: ctx.stats.into_inner() }
}

/// Sorts `keys`, treating the input as `n` one-element lists.
pub fn sort(m: &mut Exec, keys: &[u64], params: SpmsParams) -> Sorted {
    run(m, keys, params, keys.len(), None)
}

/// Sorted runs stored back to back, run 0 first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeInstance {
    pub values: Vec<u64>,
    /// `(offset, length)` of each run.
    pub runs: Vec<(usize, usize)>,
    pub r: usize,
}

impl MergeInstance {
    pub fn from_runs(runs: &[Vec<u64>], r: usize) -> Self {
        let mut values = Vec::new();
        let mut dir = Vec::new();
        for run in runs {
            dir.push((values.len(), run.len()));
            values.extend_from_slice(run);
        }
        Self { values, runs: dir, r }
    }

    pub fn validate(&self, params: &SpmsParams) -> Result<(), InstanceError> {
        if self.r == 0 {
            return Err(InstanceError::ZeroR);
        }
        if self.runs.len() > self.r {
            return Err(InstanceError::TooManyRuns { runs: self.runs.len(), r: self.r });
        }
        let mut at = 0;
        for (j, &(off, len)) in self.runs.iter().enumerate() {
            if off != at || off + len > self.values.len() {
                return Err(InstanceError::NotContiguous(j));
            }
            if self.values[off..off + len].windows(2).any(|w| w[0] > w[1]) {
                return Err(InstanceError::Unsorted(j));
            }
            at += len;
        }
        if at != self.values.len() {
            return Err(InstanceError::NotContiguous(self.runs.len()));
        }
        let n = self.values.len();
        if n as u128 > sat_pow(self.r, params.c).saturating_mul(3) {
            return Err(InstanceError::TooLong { n, r: self.r });
        }
        Ok(())
    }
}

/// Merges the runs of a validated instance.
pub fn spms_merge(m: &mut Exec, inst: &MergeInstance, params: SpmsParams) -> Result<Sorted, InstanceError> {
    inst.validate(&params)?;
    Ok(run(m, &inst.values, params, inst.r, Some(&inst.runs)))
}
