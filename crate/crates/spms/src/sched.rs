//! Randomized work-stealing over a recorded dag, as a discrete-event
//! simulation. The same pass replays every access in schedule order through
//! per-processor caches and the false-sharing ledger.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::FastMap;

use crate::cache::Lru;
use crate::dag::{partition_kernels, Kernel, NodeId, NodeKind, StealRecord};
use crate::exec::{Recording, FRAME_WORDS};
use crate::fs::{FsLedger, FsSummary, StackAudit};
use crate::memory::{AccessKind, STACK_SPAN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    /// Ticks per cache miss (b).
    pub miss: u64,
    /// Ticks per successful steal (s).
    pub steal: u64,
    /// Ticks per failed steal attempt.
    pub failed_steal: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { miss: 8, steal: 32, failed_steal: 32 }
    }
}

impl CostModel {
    pub fn is_valid(&self) -> bool {
        self.steal >= self.miss && self.steal > 0 && self.failed_steal > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedOptions {
    pub procs: usize,
    pub seed: u64,
    pub cost: CostModel,
}

/// Tick classification for one processor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickLedger {
    pub work: u64,
    pub miss: u64,
    pub fs: u64,
    pub steal_ok: u64,
    pub steal_failed: u64,
    pub idle: u64,
}

impl TickLedger {
    pub fn total(&self) -> u64 {
        self.work + self.miss + self.fs + self.steal_ok + self.steal_failed + self.idle
    }
}

/// Everything one scheduled run measured.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub procs: usize,
    pub makespan: u64,
    pub steals: Vec<StealRecord>,
    pub failed_attempts: u64,
    pub usurpations: u64,
    /// First pass: nominal costs only.
    pub nominal: Vec<TickLedger>,
    /// Second pass: misses and fs delay added, idle padding to the longest processor.
    pub charged: Vec<TickLedger>,
    pub charged_makespan: u64,
    pub kernels: Vec<Kernel>,
    /// Kernels derived from the steal set, for comparison with `kernels`.
    pub derived_kernels: Vec<Kernel>,
    pub kernel_faults: u64,
    pub misses_per_proc: Vec<u64>,
    pub misses_per_kernel: Vec<u64>,
    pub invalidations: u64,
    pub fs: FsSummary,
    pub stack_audit: StackAudit,
    /// Per scratch allocation of permuting writes: (x, charged delay).
    pub scratch_delay: Vec<(usize, u64)>,
    pub misalign_max: u64,
    pub misalign_violations: u64,
    pub heap_misaligned: u64,
}

impl Schedule {
    pub fn q_par(&self) -> u64 {
        self.misses_per_proc.iter().sum()
    }
}

/// Most parallel blocks one sequential block's data may land in.
pub const MISALIGN_LIMIT: u64 = 4;

const ROOT: u32 = 0;

#[derive(Debug, Clone)]
struct Task {
    fork: Option<NodeId>,
    /// Stack depth of the first frame this task pushes.
    base_depth: u32,
    stack_base: u64,
    /// Parallel minus sequential heap address for its allocations.
    heap_shift: i64,
    /// Task whose stack holds the stolen fork's frame.
    parent: u32,
    usurpations: u32,
    /// Ledger incarnation of each block of this task's stack region.
    stack_incs: Vec<u32>,
    /// Per sequential stack block (from the base): parallel blocks this task
    /// reached its data through.
    seq_blocks: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy)]
struct OpenFork {
    fork: NodeId,
    right: NodeId,
    join: NodeId,
    in_right: bool,
}

#[derive(Debug, Clone)]
struct Context {
    task: u32,
    /// Forks executed in this context whose join has not run yet.
    open: Vec<OpenFork>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arrival {
    VictimWaiting(u32),
    ThiefDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Run,
    /// Busy with a steal attempt until `until`; `claimed` is the task won.
    Steal {
        until: u64,
        claimed: Option<(NodeId, u32)>,
    },
    Done,
}

#[derive(Debug, Clone)]
struct Proc {
    time: u64,
    mode: Mode,
    ctx: u32,
    cursor: NodeId,
    end: NodeId,
    kernel: u32,
    /// Inside a leaf: next event, end of events, tick the leaf ends at.
    leaf: Option<(u64, u64, u64)>,
    deque: VecDeque<(NodeId, u32)>,
    ledger: TickLedger,
    attempt_start: u64,
}

struct KernelRun {
    start: NodeId,
    next: NodeId,
    proc: usize,
}

struct Sim<'a> {
    rec: &'a Recording,
    opts: SchedOptions,
    rng: ChaCha8Rng,
    procs: Vec<Proc>,
    tasks: Vec<Task>,
    ctxs: Vec<Context>,
    arrivals: FastMap<NodeId, Arrival>,
    steals: Vec<StealRecord>,
    failed_attempts: u64,
    usurpations: u64,
    kernels: Vec<KernelRun>,
    kernel_faults: u64,
    finish: Option<u64>,
    trace: Option<&'a mut dyn Write>,
    // Replay state.
    block_shift: u32,
    heap_stride: u64,
    caches: Vec<Lru>,
    misses: Vec<u64>,
    kernel_misses: Vec<u64>,
    invalidations: u64,
    fs: FsLedger,
    /// Per incarnation: 1 + the processor known to hold the only copy, or 0.
    exclusive: Vec<u16>,
    heap_first_block: Vec<u32>,
    alloc_shift: Vec<i64>,
    allocs_at: Vec<u32>,
    /// Bit per node: some allocation is attributed to it.
    alloc_nodes: Vec<u64>,
    heap_misaligned: u64,
}

/// Runs the recorded computation on `opts.procs` simulated processors.
/// `trace` receives `time,proc,event,node` lines when given.
pub fn run<'a>(rec: &'a Recording, opts: SchedOptions, trace: Option<&'a mut dyn Write>) -> Schedule {
    assert!(opts.procs >= 1, "need at least one processor");
    assert!(opts.procs <= u16::MAX as usize);
    assert!(opts.cost.is_valid(), "steal cost must be at least the miss cost");
    Sim::new(rec, opts, trace).run()
}

impl<'a> Sim<'a> {
    fn new(rec: &'a Recording, opts: SchedOptions, trace: Option<&'a mut dyn Write>) -> Self {
        let cfg = rec.config;
        assert!(cfg.block.is_power_of_two());
        let block_shift = cfg.block.trailing_zeros();
        let mut heap_first_block = Vec::with_capacity(rec.allocs.len() + 1);
        let mut blocks = 0u64;
        let mut heap_end = 0;
        for a in &rec.allocs {
            heap_first_block.push(u32::try_from(blocks).expect("too many heap blocks"));
            blocks += a.span >> block_shift;
            heap_end = heap_end.max(a.base + a.span);
        }
        heap_first_block.push(u32::try_from(blocks).expect("too many heap blocks"));
        let heap_stride = cfg.round_up(heap_end.max(1));
        let procs = (0..opts.procs)
            .map(|_| Proc {
                time: 0,
                mode: Mode::Steal { until: 0, claimed: None },
                ctx: 0,
                cursor: 0,
                end: 0,
                kernel: 0,
                leaf: None,
                deque: VecDeque::new(),
                ledger: TickLedger::default(),
                attempt_start: 0,
            })
            .collect();
        let allocs_at: Vec<u32> = rec.allocs.iter().map(|a| a.node).collect();
        let mut alloc_nodes = vec![0u64; rec.dag.len() / 64 + 1];
        for &v in &allocs_at {
            if (v as usize) < rec.dag.len() {
                alloc_nodes[v as usize / 64] |= 1 << (v % 64);
            }
        }
        Self {
            rec,
            opts,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            procs,
            tasks: vec![Task {
                fork: None,
                base_depth: 0,
                stack_base: rec.stack_base,
                heap_shift: 0,
                parent: ROOT,
                usurpations: 0,
                stack_incs: Vec::new(),
                seq_blocks: Vec::new(),
            }],
            ctxs: vec![Context { task: ROOT, open: Vec::new() }],
            arrivals: FastMap::default(),
            steals: Vec::new(),
            failed_attempts: 0,
            usurpations: 0,
            kernels: Vec::new(),
            kernel_faults: 0,
            finish: None,
            trace,
            block_shift,
            heap_stride,
            caches: (0..opts.procs).map(|_| Lru::for_config(&cfg)).collect(),
            misses: vec![0; opts.procs],
            kernel_misses: Vec::new(),
            invalidations: 0,
            fs: FsLedger::new(blocks as u32),
            exclusive: vec![0; blocks as usize],
            heap_first_block,
            alloc_shift: vec![0; rec.allocs.len()],
            allocs_at,
            alloc_nodes,
            heap_misaligned: 0,
        }
    }

    fn log(&mut self, time: u64, proc: usize, event: &str, node: NodeId) {
        if let Some(w) = self.trace.as_mut() {
            writeln!(w, "{time},{proc},{event},{node}").expect("schedule trace write failed");
        }
    }

    fn new_kernel(&mut self, p: usize, start: NodeId) {
        self.procs[p].kernel = self.kernels.len() as u32;
        self.kernels.push(KernelRun { start, next: start, proc: p });
        self.kernel_misses.push(0);
    }

    fn run(mut self) -> Schedule {
        let dag = &self.rec.dag;
        if dag.is_empty() {
            return self.finish_report(0);
        }
        self.procs[0].mode = Mode::Run;
        self.procs[0].end = dag.len() as NodeId;
        self.new_kernel(0, 0);
        // Ticks in increasing order; within a tick, processors by id.
        let mut t = 0;
        loop {
            let mut next = u64::MAX;
            for p in 0..self.procs.len() {
                if self.procs[p].time == t {
                    self.tick(p, t);
                }
                if self.procs[p].mode != Mode::Done {
                    next = next.min(self.procs[p].time);
                }
            }
            match self.finish {
                Some(end) if next >= end => break,
                _ if next == u64::MAX => break,
                _ => t = next,
            }
        }
        let t = self.finish.expect("computation never finished");
        self.finish_report(t)
    }

    /// Everything processor `p` does at tick `t`.
    fn tick(&mut self, p: usize, t: u64) {
        let horizon = (t + 1, 0);
        while self.procs[p].time == t {
            match self.procs[p].mode {
                Mode::Done => return,
                Mode::Steal { claimed: Some((fork, ctx)), .. } => self.begin_stolen(p, fork, ctx),
                Mode::Steal { claimed: None, .. } => self.attempt(p),
                Mode::Run => self.advance(p, horizon),
            }
        }
    }

    fn attempt(&mut self, p: usize) {
        let now = self.procs[p].time;
        if let Some(t) = self.finish {
            // Nothing left to steal; pad to the end.
            let pr = &mut self.procs[p];
            if now < t {
                pr.ledger.steal_failed += t - now;
                pr.time = t;
            }
            pr.mode = Mode::Done;
            return;
        }
        let n = self.opts.procs;
        if n == 1 {
            self.procs[p].mode = Mode::Done;
            return;
        }
        let mut victim = self.rng.gen_range(0..n - 1);
        if victim >= p {
            victim += 1;
        }
        let cost = self.opts.cost;
        let claimed = self.procs[victim].deque.pop_front();
        let pr = &mut self.procs[p];
        pr.attempt_start = now;
        match claimed {
            Some((fork, ctx)) => {
                pr.ledger.steal_ok += cost.steal;
                pr.time = now + cost.steal;
                pr.mode = Mode::Steal { until: pr.time, claimed: Some((fork, ctx)) };
                let index = self.steals.len();
                self.steals.push(StealRecord { index, fork, thief: p, victim, time: now });
                self.log(now, p, "steal", fork);
            }
            None => {
                pr.ledger.steal_failed += cost.failed_steal;
                pr.time = now + cost.failed_steal;
                pr.mode = Mode::Steal { until: pr.time, claimed: None };
                self.failed_attempts += 1;
            }
        }
    }

    fn begin_stolen(&mut self, p: usize, fork: NodeId, victim_ctx: u32) {
        let dag = &self.rec.dag;
        let parent = self.ctxs[victim_ctx as usize].task;
        let k = self.tasks.len() as u64;
        let region = k * self.heap_stride;
        assert!(region + self.heap_stride < self.rec.stack_base, "parallel heap regions would reach the stacks");
        let heap_shift = region as i64 - dag.heap_top(fork) as i64;
        if heap_shift.rem_euclid(self.rec.config.block as i64) != 0 {
            self.heap_misaligned += 1;
        }
        self.tasks.push(Task {
            fork: Some(fork),
            base_depth: dag.stack_depth(fork) + 1,
            stack_base: self.rec.stack_base + k * STACK_SPAN,
            heap_shift,
            parent,
            usurpations: 0,
            stack_incs: Vec::new(),
            seq_blocks: Vec::new(),
        });
        let ctx = self.ctxs.len() as u32;
        self.ctxs.push(Context { task: k as u32, open: Vec::new() });
        let pr = &mut self.procs[p];
        pr.mode = Mode::Run;
        pr.ctx = ctx;
        pr.cursor = dag.right_of(fork);
        pr.end = dag.join_of(fork);
        self.new_kernel(p, dag.right_of(fork));
    }

    fn go_steal(&mut self, p: usize) {
        let t = self.procs[p].time;
        self.procs[p].mode = Mode::Steal { until: t, claimed: None };
    }

    /// Executes a bounded amount of work for a running processor.
    fn advance(&mut self, p: usize, horizon: (u64, usize)) {
        let dag = &self.rec.dag;
        if let Some((next, end, done_at)) = self.procs[p].leaf {
            self.leaf_events(p, next, end, done_at, horizon);
            return;
        }
        let v = self.procs[p].cursor;
        if v == self.procs[p].end {
            self.task_end(p);
            return;
        }
        let ci = self.procs[p].ctx as usize;
        if let Some(&OpenFork { fork: f, right, join, in_right }) = self.ctxs[ci].open.last() {
            if !in_right && v == right {
                if self.procs[p].deque.back().map(|e| e.0) == Some(f) {
                    self.procs[p].deque.pop_back();
                    self.ctxs[ci].open.last_mut().expect("open fork").in_right = true;
                } else {
                    self.victim_arrives(p, f);
                }
                return;
            }
            if in_right && v == join {
                self.enter_node(p, v);
                let time = self.procs[p].time;
                let task = self.ctxs[ci].task;
                for w in 0..FRAME_WORDS {
                    self.stack_event(p, task, f, w, AccessKind::Read, time);
                }
                self.ctxs[ci].open.pop();
                let pr = &mut self.procs[p];
                pr.cursor = v + 1;
                pr.time += 1;
                pr.ledger.work += 1;
                return;
            }
        }
        match dag.kind(v) {
            NodeKind::Leaf => {
                self.enter_node(p, v);
                let ev = dag.events(v);
                let w = dag.weight(v);
                let pr = &mut self.procs[p];
                pr.ledger.work += w;
                pr.leaf = Some((ev.start, ev.end, pr.time + w));
            }
            NodeKind::Fork => {
                self.enter_node(p, v);
                let time = self.procs[p].time;
                let task = self.ctxs[ci].task;
                match self.ctxs[ci].open.last() {
                    Some(g) => self.stack_event(p, task, g.fork, 0, AccessKind::Read, time),
                    None => {
                        if let Some(g) = self.tasks[task as usize].fork {
                            let parent = self.tasks[task as usize].parent;
                            self.stack_event(p, parent, g, 0, AccessKind::Read, time);
                        }
                    }
                }
                for w in 0..FRAME_WORDS {
                    self.stack_event(p, task, v, w, AccessKind::Write, time);
                }
                let open = OpenFork { fork: v, right: dag.right_of(v), join: dag.join_of(v), in_right: false };
                self.ctxs[ci].open.push(open);
                let pr = &mut self.procs[p];
                pr.deque.push_back((v, ci as u32));
                pr.cursor = v + 1;
                pr.time += 1;
                pr.ledger.work += 1;
            }
            NodeKind::Join => unreachable!("join {v} reached outside its fork"),
        }
    }

    fn leaf_events(&mut self, p: usize, mut next: u64, end: u64, done_at: u64, horizon: (u64, usize)) {
        while next < end && (self.procs[p].time, p) < horizon {
            let e = self.rec.event(next);
            let t = self.procs[p].time;
            self.heap_event(p, e.owner(), e.offset(), e.kind(), t);
            next += 1;
            self.procs[p].time = t + 1;
        }
        let pr = &mut self.procs[p];
        if next < end {
            pr.leaf = Some((next, end, done_at));
            return;
        }
        // Remaining ticks of a leaf with fewer events than its weight.
        pr.time = pr.time.max(done_at);
        pr.leaf = None;
        pr.cursor += 1;
    }

    /// Bookkeeping common to every node a processor starts.
    fn enter_node(&mut self, p: usize, v: NodeId) {
        let k = self.procs[p].kernel as usize;
        if self.kernels[k].next != v {
            self.kernel_faults += 1;
        }
        self.kernels[k].next = v + 1;
        if self.alloc_nodes[v as usize / 64] & (1 << (v % 64)) != 0 {
            let lo = self.allocs_at.partition_point(|&n| n < v);
            let task = self.ctxs[self.procs[p].ctx as usize].task as usize;
            let shift = self.tasks[task].heap_shift;
            let mut a = lo;
            while a < self.allocs_at.len() && self.allocs_at[a] == v {
                self.alloc_shift[a] = shift;
                a += 1;
            }
        }
        if self.trace.is_some() {
            let t = self.procs[p].time;
            let label = match self.rec.dag.kind(v) {
                NodeKind::Fork => "fork",
                NodeKind::Join => "join",
                NodeKind::Leaf => "leaf",
            };
            self.log(t, p, label, v);
        }
    }

    /// The victim finished the left child of stolen fork `f`.
    fn victim_arrives(&mut self, p: usize, f: NodeId) {
        let ctx = self.procs[p].ctx;
        match self.arrivals.remove(&f) {
            Some(Arrival::ThiefDone) => self.continue_at_join(p, ctx, f),
            Some(Arrival::VictimWaiting(_)) => unreachable!("victim arrived twice at {f}"),
            None => {
                self.arrivals.insert(f, Arrival::VictimWaiting(ctx));
                self.go_steal(p);
            }
        }
    }

    /// The running task reached its end.
    fn task_end(&mut self, p: usize) {
        let ctx = self.procs[p].ctx as usize;
        let task = self.ctxs[ctx].task;
        let Some(f) = self.tasks[task as usize].fork else {
            let t = self.procs[p].time;
            self.finish = Some(t);
            self.procs[p].mode = Mode::Done;
            return;
        };
        match self.arrivals.remove(&f) {
            Some(Arrival::VictimWaiting(vctx)) => {
                self.usurpations += 1;
                let vtask = self.ctxs[vctx as usize].task;
                self.tasks[vtask as usize].usurpations += 1;
                let t = self.procs[p].time;
                self.log(t, p, "usurp", f);
                self.continue_at_join(p, vctx, f);
            }
            Some(Arrival::ThiefDone) => unreachable!("thief arrived twice at {f}"),
            None => {
                self.arrivals.insert(f, Arrival::ThiefDone);
                self.go_steal(p);
            }
        }
    }

    fn continue_at_join(&mut self, p: usize, ctx: u32, f: NodeId) {
        let dag = &self.rec.dag;
        let top = self.ctxs[ctx as usize].open.last_mut().expect("join with no open fork");
        assert_eq!(top.fork, f);
        top.in_right = true;
        let task = self.ctxs[ctx as usize].task;
        let end = match self.tasks[task as usize].fork {
            Some(g) => dag.join_of(g),
            None => dag.len() as NodeId,
        };
        let pr = &mut self.procs[p];
        pr.mode = Mode::Run;
        pr.ctx = ctx;
        pr.cursor = dag.join_of(f);
        pr.end = end;
        self.new_kernel(p, dag.join_of(f));
    }

    fn frame_word(&self, task: u32, fork: NodeId, w: u64) -> u64 {
        let t = &self.tasks[task as usize];
        let depth = self.rec.dag.stack_depth(fork);
        debug_assert!(depth >= t.base_depth);
        t.stack_base + FRAME_WORDS * (depth - t.base_depth) as u64 + w
    }

    fn stack_event(&mut self, p: usize, owner: u32, fork: NodeId, w: u64, kind: AccessKind, time: u64) {
        let addr = self.frame_word(owner, fork, w);
        let block = addr >> self.block_shift;
        let ctx_task = self.ctxs[self.procs[p].ctx as usize].task;
        if ctx_task != ROOT {
            let seq = ((self.rec.frame_addr(fork, w) - self.rec.stack_base) >> self.block_shift) as usize;
            let seen = &mut self.tasks[ctx_task as usize].seq_blocks;
            if seen.len() <= seq {
                seen.resize(seq + 1, Vec::new());
            }
            if !seen[seq].contains(&block) {
                seen[seq].push(block);
            }
        }
        let local = ((addr - self.tasks[owner as usize].stack_base) >> self.block_shift) as usize;
        let incs = &mut self.tasks[owner as usize].stack_incs;
        if incs.len() <= local {
            incs.resize(local + 1, u32::MAX);
        }
        if incs[local] == u32::MAX {
            incs[local] = self.fs.new_stack_incarnation(owner);
            self.exclusive.push(0);
        }
        let inc = incs[local];
        self.touch(p, block, inc, kind);
        let kernel = self.procs[p].kernel;
        self.fs.access(inc, p as u16, kernel, time, kind == AccessKind::Write, ctx_task != owner);
    }

    #[inline]
    fn heap_event(&mut self, p: usize, alloc: u32, offset: u64, kind: AccessKind, time: u64) {
        let a = alloc as usize;
        let seq = self.rec.allocs[a].base + offset;
        let addr = (seq as i64 + self.alloc_shift[a]) as u64;
        let block = addr >> self.block_shift;
        let inc = self.heap_first_block[a] + (offset >> self.block_shift) as u32;
        self.touch(p, block, inc, kind);
        let kernel = self.procs[p].kernel;
        self.fs.access(inc, p as u16, kernel, time, kind == AccessKind::Write, false);
    }

    #[inline]
    fn touch(&mut self, p: usize, block: u64, inc: u32, kind: AccessKind) {
        if !self.caches[p].access(block) {
            self.misses[p] += 1;
            let k = self.procs[p].kernel as usize;
            self.kernel_misses[k] += 1;
        }
        let me = p as u16 + 1;
        let excl = &mut self.exclusive[inc as usize];
        if kind == AccessKind::Write {
            // A write by the sole holder has nobody to invalidate.
            if *excl != me {
                *excl = me;
                for q in 0..self.caches.len() {
                    if q != p && self.caches[q].invalidate(block) {
                        self.invalidations += 1;
                    }
                }
            }
        } else if *excl != me {
            *excl = 0;
        }
    }

    fn finish_report(mut self, makespan: u64) -> Schedule {
        let procs = self.opts.procs;
        for pr in &mut self.procs {
            // Attempts still running at the end are cut off there.
            if pr.time > makespan {
                let over = pr.time - makespan;
                if let Mode::Steal { claimed: None, .. } = pr.mode {
                    pr.ledger.steal_failed -= over;
                } else {
                    unreachable!("processor busy past the end of the computation");
                }
                pr.time = makespan;
            }
            pr.ledger.idle += makespan - pr.time;
        }
        let nominal: Vec<TickLedger> = self.procs.iter().map(|p| p.ledger).collect();
        let fs = self.fs.summarize(procs);
        let cost = self.opts.cost;
        let mut charged: Vec<TickLedger> = nominal
            .iter()
            .enumerate()
            .map(|(i, l)| TickLedger {
                miss: cost.miss * self.misses[i],
                fs: cost.miss * fs.per_proc[i],
                idle: 0,
                ..*l
            })
            .collect();
        let charged_makespan = charged.iter().map(|l| l.total()).max().unwrap_or(0);
        for l in &mut charged {
            l.idle = charged_makespan - l.total();
        }
        let dag = &self.rec.dag;
        let stolen: Vec<NodeId> = self.steals.iter().map(|s| s.fork).collect();
        let derived_kernels = if dag.is_empty() { Vec::new() } else { partition_kernels(dag, &stolen) };
        let mut kernels: Vec<Kernel> = self
            .kernels
            .iter()
            .enumerate()
            .map(|(id, k)| Kernel { id, start: k.start, end: k.next, proc: Some(k.proc) })
            .collect();
        kernels.sort_by_key(|k| k.start);
        let usurps: Vec<u32> = self.tasks.iter().map(|t| t.usurpations).collect();
        let stack_audit = self.fs.stack_audit(&usurps);
        let scratch_delay = self
            .rec
            .scratches
            .iter()
            .map(|s| {
                let a = s.alloc.0 as usize;
                (s.x, self.fs.charged_in(self.heap_first_block[a]..self.heap_first_block[a + 1]))
            })
            .collect();
        let reach = || self.tasks.iter().flat_map(|t| t.seq_blocks.iter().map(|b| b.len() as u64));
        let misalign_max = reach().max().unwrap_or(0);
        let misalign_violations = reach().filter(|&c| c > MISALIGN_LIMIT).count() as u64;
        Schedule {
            procs,
            makespan,
            steals: self.steals,
            failed_attempts: self.failed_attempts,
            usurpations: self.usurpations,
            nominal,
            charged,
            charged_makespan,
            kernels,
            derived_kernels,
            kernel_faults: self.kernel_faults,
            misses_per_proc: self.misses,
            misses_per_kernel: self.kernel_misses,
            invalidations: self.invalidations,
            fs,
            stack_audit,
            scratch_delay,
            misalign_max,
            misalign_violations,
            heap_misaligned: self.heap_misaligned,
        }
    }
}
