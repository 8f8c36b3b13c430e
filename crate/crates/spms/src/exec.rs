//! Execution context: runs a fork-join program sequentially (left-to-right
//! dfs) over simulated memory, charging work and span and optionally
//! recording the dag and the access trace.

use crate::cache::Lru;
use crate::dag::{Dag, NodeId};
use crate::memory::{AccessKind, AllocId, AllocRecord, BufferedArray, CacheConfig, ExecStack, SimArray, SimMemory};

/// Words in the stack segment each fork pushes for its residual task.
pub const FRAME_WORDS: u64 = 2;

pub(crate) const WRITE_BIT: u64 = 1 << 63;
pub(crate) const STACK_BIT: u64 = 1 << 62;
const ID_LIMIT: u32 = 1 << 30;

/// Packed trace event: kind bit, stack bit, 30-bit owner id, 32-bit offset.
/// The owner is an allocation for heap words and a fork node for stack words.
pub(crate) fn pack(kind: AccessKind, stack: bool, id: u32, offset: u64) -> u64 {
    debug_assert!(id < ID_LIMIT && offset <= u32::MAX as u64);
    let mut e = ((id as u64) << 32) | offset;
    if kind == AccessKind::Write {
        e |= WRITE_BIT;
    }
    if stack {
        e |= STACK_BIT;
    }
    e
}

const CHUNK_BITS: u32 = 20;
const CHUNK_MASK: u64 = (1 << CHUNK_BITS) - 1;

/// Append-only event store in fixed chunks, so growth never copies.
#[derive(Debug, Clone, Default)]
pub(crate) struct EventLog {
    chunks: Vec<Vec<u64>>,
    len: u64,
}

impl EventLog {
    #[inline]
    fn push(&mut self, e: u64) {
        if self.len & CHUNK_MASK == 0 {
            self.chunks.push(Vec::with_capacity(1 << CHUNK_BITS));
        }
        self.chunks.last_mut().expect("chunk just ensured").push(e);
        self.len += 1;
    }

    #[inline]
    pub fn get(&self, i: u64) -> u64 {
        self.chunks[(i >> CHUNK_BITS) as usize][(i & CHUNK_MASK) as usize]
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    fn shrink(&mut self) {
        if let Some(c) = self.chunks.last_mut() {
            c.shrink_to_fit();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Packed(pub u64);

impl Packed {
    pub fn kind(self) -> AccessKind {
        if self.0 & WRITE_BIT != 0 {
            AccessKind::Write
        } else {
            AccessKind::Read
        }
    }
    pub fn is_stack(self) -> bool {
        self.0 & STACK_BIT != 0
    }
    pub fn owner(self) -> u32 {
        ((self.0 >> 32) as u32) & (ID_LIMIT - 1)
    }
    pub fn offset(self) -> u64 {
        self.0 & 0xFFFF_FFFF
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub cache: CacheConfig,
    /// Keep the dag and the full access trace.
    pub record: bool,
    /// Feed every access to a sequential LRU cache as it happens.
    pub stream_cache: bool,
    /// Iterations per leaf in element loops.
    pub grain: usize,
    /// Transposing redistribution walks subvectors in output order.
    /// Turning this off is the fault-injection switch.
    pub output_order: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { cache: CacheConfig::default(), record: false, stream_cache: false, grain: 4, output_order: true }
    }
}

/// Phase bookkeeping for one buffered array.
#[derive(Debug, Clone)]
pub struct BufferState {
    pub raw: SimArray,
    pub origin: usize,
    pub q: usize,
    pub len: usize,
    pub sealed_at: Option<u64>,
    pub writes: Vec<u8>,
    pub violations: u64,
    pub owned: bool,
}

/// Most phase-1 writes allowed per core entry.
pub const MAX_PHASE1_WRITES: u8 = 4;

/// Everything a recorded run leaves behind for the schedulers and auditors.
#[derive(Debug, Clone)]
pub struct Recording {
    pub config: CacheConfig,
    pub dag: Dag,
    pub(crate) events: EventLog,
    pub allocs: Vec<AllocRecord>,
    pub buffers: Vec<BufferState>,
    pub scopes: Vec<Scope>,
    pub scratches: Vec<Scratch>,
    /// Base of the root execution stack.
    pub stack_base: u64,
}

impl Recording {
    /// Recorded leaf events; fork and join stack accesses are not stored.
    pub fn event_count(&self) -> u64 {
        self.events.len()
    }

    #[inline]
    pub(crate) fn event(&self, i: u64) -> Packed {
        Packed(self.events.get(i))
    }

    /// Address of recorded event `i` in the sequential execution.
    pub fn seq_addr(&self, i: u64) -> u64 {
        let e = self.event(i);
        debug_assert!(!e.is_stack());
        self.allocs[e.owner() as usize].base + e.offset()
    }

    pub fn kind(&self, i: u64) -> AccessKind {
        self.event(i).kind()
    }

    /// Sequential address of word `w` of fork `f`'s frame.
    pub fn frame_addr(&self, f: NodeId, w: u64) -> u64 {
        self.stack_base + FRAME_WORDS * self.dag.stack_depth(f) as u64 + w
    }

    /// Every access of the run in sequential order, stack accesses included.
    /// The visitor gets the node making the access, its kind and its address.
    pub fn for_each_access(&self, mut visit: impl FnMut(NodeId, AccessKind, u64)) {
        let dag = &self.dag;
        for v in 0..dag.len() as NodeId {
            match dag.kind(v) {
                crate::dag::NodeKind::Leaf => {
                    for i in dag.events(v) {
                        let e = self.event(i);
                        visit(v, e.kind(), self.allocs[e.owner() as usize].base + e.offset());
                    }
                }
                crate::dag::NodeKind::Fork => {
                    let depth = dag.stack_depth(v) as u64;
                    if depth > 0 {
                        visit(v, AccessKind::Read, self.stack_base + FRAME_WORDS * (depth - 1));
                    }
                    for w in 0..FRAME_WORDS {
                        visit(v, AccessKind::Write, self.frame_addr(v, w));
                    }
                }
                crate::dag::NodeKind::Join => {
                    let f = dag.fork_of(v);
                    for w in 0..FRAME_WORDS {
                        visit(v, AccessKind::Read, self.frame_addr(f, w));
                    }
                }
            }
        }
    }

    /// Writes the sequential trace as `time,proc,task,node,kind,addr,block` lines.
    pub fn dump_trace(&self, out: &mut dyn std::io::Write) -> std::io::Result<()> {
        writeln!(out, "{}", crate::memory::TRACE_HEADER)?;
        let mut time = 0;
        let mut result = Ok(());
        self.for_each_access(|node, kind, addr| {
            if result.is_ok() {
                let ev = crate::memory::TraceEvent { kind, addr, task: 0, node, time };
                result = writeln!(out, "{}", ev.dump_line(0, self.config.block));
            }
            time += 1;
        });
        result
    }
}

/// Dag nodes `[first, end)` created by one named procedure invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub name: &'static str,
    pub first: NodeId,
    pub end: NodeId,
}

/// Spread-out scratch array of a permuting-writes call on `x` items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scratch {
    pub alloc: AllocId,
    pub x: usize,
}

#[derive(Debug, Clone)]
pub struct Exec {
    opts: ExecOptions,
    mem: SimMemory,
    stack: ExecStack,
    frames: Vec<NodeId>,
    keys: Vec<u64>,
    dag: Option<Dag>,
    events: EventLog,
    clock: u64,
    work: u64,
    path: u64,
    in_leaf: bool,
    cur_node: NodeId,
    seq_cache: Option<Lru>,
    buffers: Vec<BufferState>,
    scopes: Vec<Scope>,
    scratches: Vec<Scratch>,
    fork_count: u64,
    /// Whether accesses go anywhere beyond the clock.
    tracing: bool,
}

impl Exec {
    pub fn new(opts: ExecOptions) -> Self {
        let mut mem = SimMemory::new(opts.cache);
        let stack = mem.new_stack(0);
        Self {
            opts,
            mem,
            stack,
            frames: Vec::new(),
            keys: Vec::new(),
            dag: opts.record.then(Dag::new),
            events: EventLog::default(),
            clock: 0,
            work: 0,
            path: 0,
            in_leaf: false,
            cur_node: 0,
            seq_cache: opts.stream_cache.then(|| Lru::for_config(&opts.cache)),
            buffers: Vec::new(),
            scopes: Vec::new(),
            scratches: Vec::new(),
            fork_count: 0,
            tracing: opts.record || opts.stream_cache,
        }
    }

    pub fn options(&self) -> &ExecOptions {
        &self.opts
    }

    pub fn config(&self) -> CacheConfig {
        self.opts.cache
    }

    pub fn grain(&self) -> usize {
        self.opts.grain.max(1)
    }

    /// Installs the key table that element words index into.
    pub fn set_keys(&mut self, keys: Vec<u64>) {
        self.keys = keys;
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    /// Element order: (key, original index).
    #[inline]
    pub fn less(&self, x: u64, y: u64) -> bool {
        let (kx, ky) = (self.keys[x as usize], self.keys[y as usize]);
        kx < ky || (kx == ky && x < y)
    }

    pub fn work(&self) -> u64 {
        self.work
    }

    /// Span of everything executed so far.
    pub fn span(&self) -> u64 {
        self.path
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn forks(&self) -> u64 {
        self.fork_count
    }

    pub fn seq_misses(&self) -> Option<u64> {
        self.seq_cache.as_ref().map(|c| c.misses)
    }

    pub fn peak_heap_words(&self) -> u64 {
        self.mem.peak_words()
    }

    pub fn live_heap_words(&self) -> u64 {
        self.mem.live_words()
    }

    pub fn buffers(&self) -> &[BufferState] {
        &self.buffers
    }

    pub fn buffer_violations(&self) -> u64 {
        self.buffers.iter().map(|b| b.violations).sum()
    }

    pub fn memory(&self) -> &SimMemory {
        &self.mem
    }

    fn node_for_alloc(&self) -> u32 {
        self.dag.as_ref().map_or(0, |d| d.len() as u32)
    }

    pub fn alloc(&mut self, len: usize) -> SimArray {
        assert!(!self.in_leaf, "allocation inside a leaf");
        let node = self.node_for_alloc();
        let a = self.mem.alloc(len, node);
        assert!(a.id.0 < ID_LIMIT, "too many allocations to trace");
        a
    }

    pub fn free(&mut self, a: SimArray) {
        self.mem.free(a);
    }

    /// Untraced store, for placing inputs before a run.
    pub fn poke(&mut self, a: SimArray, i: usize, v: u64) {
        assert!(i < a.len);
        self.mem.set(a.addr(i), v);
    }

    /// Untraced load, for reading results after a run.
    pub fn peek(&self, a: SimArray, i: usize) -> u64 {
        assert!(i < a.len);
        self.mem.get(a.addr(i))
    }

    #[inline(always)]
    fn emit(&mut self, kind: AccessKind, stack: bool, owner: u32, addr: u64, offset: u64) {
        self.clock += 1;
        if self.tracing {
            self.trace(kind, stack, owner, addr, offset);
        }
    }

    #[inline(never)]
    fn trace(&mut self, kind: AccessKind, stack: bool, owner: u32, addr: u64, offset: u64) {
        if let Some(c) = self.seq_cache.as_mut() {
            c.access(addr / self.opts.cache.block);
        }
        if self.dag.is_some() && !stack {
            self.events.push(pack(kind, stack, owner, offset));
        }
    }

    #[inline(always)]
    pub fn read(&mut self, a: SimArray, i: usize) -> u64 {
        debug_assert!(self.in_leaf, "memory access outside a leaf");
        assert!(i < a.len, "read past end of array ({i} >= {})", a.len);
        let addr = a.addr(i);
        self.emit(AccessKind::Read, false, a.id.0, addr, i as u64);
        self.mem.get(addr)
    }

    #[inline(always)]
    pub fn write(&mut self, a: SimArray, i: usize, v: u64) {
        debug_assert!(self.in_leaf, "memory access outside a leaf");
        assert!(i < a.len, "write past end of array ({i} >= {})", a.len);
        let addr = a.addr(i);
        self.emit(AccessKind::Write, false, a.id.0, addr, i as u64);
        self.mem.set(addr, v);
    }

    #[inline(always)]
    fn stack_access(&mut self, kind: AccessKind, fork: NodeId, seg_base: u64, offset: u64) {
        self.emit(kind, true, fork, seg_base + offset, offset);
    }

    /// Runs `body` as one leaf; its weight is the number of accesses it makes (at least 1).
    pub fn leaf<R>(&mut self, body: impl FnOnce(&mut Self) -> R) -> R {
        assert!(!self.in_leaf, "leaves do not nest");
        if let Some(d) = self.dag.as_mut() {
            self.cur_node = d.leaf_at(0, self.events.len());
        }
        self.in_leaf = true;
        let start = self.clock;
        let r = body(self);
        self.in_leaf = false;
        // Leaves never fork, so every event since `start` is this leaf's.
        let w = (self.clock - start).max(1);
        if let Some(d) = self.dag.as_mut() {
            d.set_work(self.cur_node, u32::try_from(w).unwrap_or(u32::MAX));
        }
        self.work += w;
        self.path += w;
        r
    }

    /// Binary fork: `left` then `right` in sequential order; join afterwards.
    pub fn fork_join<A, B>(&mut self, left: impl FnOnce(&mut Self) -> A, right: impl FnOnce(&mut Self) -> B) -> (A, B) {
        assert!(!self.in_leaf, "fork inside a leaf");
        self.fork_count += 1;
        let depth = self.stack.depth() as u32;
        let fork = match self.dag.as_mut() {
            Some(d) => d.fork_at(self.events.len(), self.mem.top(), depth),
            None => 0,
        };
        if let (Some(&parent), Some(seg)) = (self.frames.last(), self.stack.peek().copied()) {
            self.stack_access(AccessKind::Read, parent, seg.base, 0);
        }
        let seg = self.stack.push_segment(fork, FRAME_WORDS);
        self.frames.push(fork);
        for w in 0..FRAME_WORDS {
            self.stack_access(AccessKind::Write, fork, seg.base, w);
        }
        self.work += 1;
        self.path += 1;
        let at_fork = self.path;

        let heap_top = self.mem.top();
        let a = left(self);
        assert_eq!(self.mem.top(), heap_top, "left child leaked heap allocations");
        let after_left = self.path;
        self.path = at_fork;
        if let Some(d) = self.dag.as_mut() {
            d.start_right(self.events.len());
        }
        let b = right(self);
        assert_eq!(self.mem.top(), heap_top, "right child leaked heap allocations");
        let after_right = self.path;

        if let Some(d) = self.dag.as_mut() {
            d.join_at(self.events.len());
        }
        for w in 0..FRAME_WORDS {
            self.stack_access(AccessKind::Read, fork, seg.base, w);
        }
        self.frames.pop();
        self.stack.pop_segment();
        self.work += 1;
        self.path = after_left.max(after_right) + 1;
        (a, b)
    }

    /// Fork-join loop over `0..n` with leaves of at most `grain` iterations.
    pub fn par_for(&mut self, n: usize, grain: usize, body: &dyn Fn(&mut Self, usize)) {
        self.par_range(0, n, grain.max(1), body);
    }

    fn par_range(&mut self, lo: usize, hi: usize, grain: usize, body: &dyn Fn(&mut Self, usize)) {
        if hi <= lo {
            return;
        }
        if hi - lo <= grain {
            self.leaf(|m| {
                for i in lo..hi {
                    body(m, i);
                }
            });
        } else {
            let mid = lo + (hi - lo) / 2;
            self.fork_join(|m| m.par_range(lo, mid, grain, body), |m| m.par_range(mid, hi, grain, body));
        }
    }

    /// Fork-join loop whose iterations are whole subcomputations.
    pub fn par_tasks(&mut self, n: usize, body: &dyn Fn(&mut Self, usize)) {
        self.par_tasks_range(0, n, body);
    }

    fn par_tasks_range(&mut self, lo: usize, hi: usize, body: &dyn Fn(&mut Self, usize)) {
        match hi.saturating_sub(lo) {
            0 => {}
            1 => body(self, lo),
            _ => {
                let mid = lo + (hi - lo) / 2;
                self.fork_join(|m| m.par_tasks_range(lo, mid, body), |m| m.par_tasks_range(mid, hi, body));
            }
        }
    }

    /// Array with `q` dead words on each side of a `len`-word core.
    pub fn alloc_buffered(&mut self, len: usize, q: usize) -> BufferedArray {
        let raw = self.alloc(len + 2 * q);
        self.register_buffer(raw, q, q, len, true)
    }

    /// Phase-tracked view of `len` words of `arr` starting at `origin`, with no dead zones.
    pub fn buffered_view(&mut self, arr: SimArray, origin: usize, len: usize) -> BufferedArray {
        assert!(origin + len <= arr.len);
        self.register_buffer(arr, origin, 0, len, false)
    }

    fn register_buffer(&mut self, raw: SimArray, origin: usize, q: usize, len: usize, owned: bool) -> BufferedArray {
        let slot = self.buffers.len();
        self.buffers.push(BufferState {
            raw,
            origin,
            q,
            len,
            sealed_at: None,
            writes: vec![0; len],
            violations: 0,
            owned,
        });
        BufferedArray { raw, q, len, slot }
    }

    /// Core view as a plain array (for passing to routines that only read).
    pub fn core_origin(&self, b: &BufferedArray) -> (SimArray, usize) {
        (b.raw, self.buffers[b.slot].origin)
    }

    /// Phase accounting for a write of underlying word `raw_index` of buffer `slot`.
    pub(crate) fn track_write(&mut self, slot: usize, raw_index: usize) {
        let st = &mut self.buffers[slot];
        let in_core = raw_index >= st.origin && raw_index < st.origin + st.len;
        if st.sealed_at.is_some() || !in_core {
            st.violations += 1;
        } else {
            let w = &mut st.writes[raw_index - st.origin];
            *w = w.saturating_add(1);
            if *w > MAX_PHASE1_WRITES {
                st.violations += 1;
            }
        }
    }

    pub(crate) fn track_read(&mut self, slot: usize, raw_index: usize) {
        let st = &mut self.buffers[slot];
        let in_core = raw_index >= st.origin && raw_index < st.origin + st.len;
        if st.sealed_at.is_some() && !in_core {
            st.violations += 1;
        }
    }

    pub fn buf_write(&mut self, b: &BufferedArray, i: usize, v: u64) {
        let st = &self.buffers[b.slot];
        assert!(i < st.len, "buffered write past core");
        let idx = st.origin + i;
        self.track_write(b.slot, idx);
        self.write(b.raw, idx, v);
    }

    pub fn buf_read(&mut self, b: &BufferedArray, i: usize) -> u64 {
        let st = &self.buffers[b.slot];
        assert!(i < st.len, "buffered read past core");
        let idx = st.origin + i;
        self.read(b.raw, idx)
    }

    /// Reads underlying word `raw_index`, flagging touches of the dead zones after sealing.
    pub fn buf_read_raw(&mut self, b: &BufferedArray, raw_index: usize) -> u64 {
        self.track_read(b.slot, raw_index);
        self.read(b.raw, raw_index)
    }

    /// Ends phase 1; later writes or dead-zone touches are violations.
    pub fn seal(&mut self, b: &BufferedArray) {
        let clock = self.clock;
        let st = &mut self.buffers[b.slot];
        if st.sealed_at.is_none() {
            st.sealed_at = Some(clock);
        }
    }

    pub fn free_buffered(&mut self, b: BufferedArray) {
        assert!(self.buffers[b.slot].owned, "views are not freed");
        self.free(b.raw);
    }

    /// Runs `body`, remembering which dag nodes it created under `name`.
    pub fn scoped<R>(&mut self, name: &'static str, body: impl FnOnce(&mut Self) -> R) -> R {
        let first = self.dag.as_ref().map_or(0, |d| d.len() as NodeId);
        let r = body(self);
        if let Some(d) = self.dag.as_ref() {
            self.scopes.push(Scope { name, first, end: d.len() as NodeId });
        }
        r
    }

    pub fn scopes(&self) -> &[Scope] {
        &self.scopes
    }

    pub(crate) fn note_scratch(&mut self, a: SimArray, x: usize) {
        if self.dag.is_some() {
            self.scratches.push(Scratch { alloc: a.id, x });
        }
    }

    /// Hands over the recorded dag and trace; `None` unless recording was on.
    pub fn into_recording(mut self) -> Option<Recording> {
        let mut dag = self.dag.take()?;
        dag.seal(self.events.len());
        self.events.shrink();
        Some(Recording {
            config: self.opts.cache,
            dag,
            events: self.events,
            allocs: self.mem.records().to_vec(),
            buffers: self.buffers,
            scopes: self.scopes,
            scratches: self.scratches,
            stack_base: self.stack.base,
        })
    }

    pub fn alloc_record(&self, id: AllocId) -> AllocRecord {
        self.mem.records()[id.0 as usize]
    }
}
