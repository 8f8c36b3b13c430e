//! Flat block-structured address space.
//!
//! Heap arrays come from a LIFO arena in block-sized units. Execution stacks
//! live in a separate address range and hold unpadded segments.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Sequential addresses at or above this value belong to execution stacks.
pub const STACK_SPACE: u64 = 1 << 40;
/// Address span reserved for each execution stack.
pub const STACK_SPAN: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("block size {0} is not a power of two")]
    BlockNotPowerOfTwo(u64),
    #[error("cache size {0} is not a power of two")]
    CacheNotPowerOfTwo(u64),
    #[error("cache size {capacity} is below the tall-cache minimum {min} (B^2)")]
    NotTall { capacity: u64, min: u64 },
}

/// Cache size `capacity` (M) and block size `block` (B), both in words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity: u64,
    pub block: u64,
}

impl CacheConfig {
    pub fn new(capacity: u64, block: u64) -> Result<Self, ConfigError> {
        if block == 0 || !block.is_power_of_two() {
            return Err(ConfigError::BlockNotPowerOfTwo(block));
        }
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(ConfigError::CacheNotPowerOfTwo(capacity));
        }
        if capacity < block * block {
            return Err(ConfigError::NotTall { capacity, min: block * block });
        }
        Ok(Self { capacity, block })
    }

    /// Number of blocks the cache holds.
    pub fn lines(&self) -> usize {
        (self.capacity / self.block) as usize
    }

    pub fn block_of(&self, addr: u64) -> u64 {
        addr / self.block
    }

    pub fn round_up(&self, words: u64) -> u64 {
        words.div_ceil(self.block) * self.block
    }
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self { capacity: 1 << 14, block: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocId(pub u32);

/// A live heap allocation. `base` is block-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimArray {
    pub id: AllocId,
    pub base: u64,
    pub len: usize,
}

impl SimArray {
    pub fn addr(&self, i: usize) -> u64 {
        self.base + i as u64
    }
}

/// Allocation history entry, kept for address translation and audits.
#[derive(Debug, Clone, Copy)]
pub struct AllocRecord {
    pub base: u64,
    /// Rounded length in words.
    pub span: u64,
    pub len: u64,
    /// Dag node that was current when the allocation was made.
    pub node: u32,
    pub freed: bool,
}

/// An array with `q` dead words on each side of its core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferedArray {
    pub raw: SimArray,
    pub q: usize,
    pub len: usize,
    /// Index into the owning context's phase registry.
    pub slot: usize,
}

impl BufferedArray {
    /// Underlying index of core entry `i`.
    pub fn raw_index(&self, i: usize) -> usize {
        self.q + i
    }
}

/// LIFO heap arena over a growable word store.
#[derive(Debug, Clone)]
pub struct SimMemory {
    config: CacheConfig,
    words: Vec<u64>,
    top: u64,
    live: Vec<AllocId>,
    records: Vec<AllocRecord>,
    live_words: u64,
    peak_words: u64,
    next_stack: u64,
}

impl SimMemory {
    pub fn new(config: CacheConfig) -> Self {
        Self {
            config,
            words: Vec::new(),
            top: 0,
            live: Vec::new(),
            records: Vec::new(),
            live_words: 0,
            peak_words: 0,
            next_stack: STACK_SPACE,
        }
    }

    pub fn config(&self) -> CacheConfig {
        self.config
    }

    /// Reserves `len` zeroed words rounded up to whole blocks.
    pub fn alloc(&mut self, len: usize, node: u32) -> SimArray {
        let span = self.config.round_up(len as u64);
        let base = self.top;
        let end = (base + span) as usize;
        if self.words.len() < end {
            self.words.resize(end, 0);
        }
        self.words[base as usize..end].fill(0);
        self.top += span;
        self.live_words += span;
        self.peak_words = self.peak_words.max(self.live_words);
        let id = AllocId(u32::try_from(self.records.len()).expect("allocation id overflow"));
        self.records.push(AllocRecord { base, span, len: len as u64, node, freed: false });
        self.live.push(id);
        SimArray { id, base, len }
    }

    /// Releases the most recent live allocation; anything else is a fault.
    pub fn free(&mut self, arr: SimArray) {
        let last = self.live.pop().expect("free with no live allocation");
        assert_eq!(last, arr.id, "heap arena frees must be LIFO");
        let rec = &mut self.records[arr.id.0 as usize];
        rec.freed = true;
        self.top = rec.base;
        self.live_words -= rec.span;
    }

    pub fn is_live(&self, id: AllocId) -> bool {
        !self.records[id.0 as usize].freed
    }

    #[inline(always)]
    pub fn get(&self, addr: u64) -> u64 {
        self.words[addr as usize]
    }

    #[inline(always)]
    pub fn set(&mut self, addr: u64, value: u64) {
        self.words[addr as usize] = value;
    }

    pub fn records(&self) -> &[AllocRecord] {
        &self.records
    }

    pub fn top(&self) -> u64 {
        self.top
    }

    pub fn peak_words(&self) -> u64 {
        self.peak_words
    }

    pub fn live_words(&self) -> u64 {
        self.live_words
    }

    /// A new execution stack starting on a fresh block boundary.
    pub fn new_stack(&mut self, owner: u32) -> ExecStack {
        let base = self.next_stack;
        self.next_stack += STACK_SPAN;
        ExecStack::new(owner, base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub node: u32,
    pub base: u64,
    pub size: u64,
}

/// Per-task stack of variable frames, pushed and popped in strict LIFO order.
#[derive(Debug, Clone)]
pub struct ExecStack {
    pub owner: u32,
    pub base: u64,
    top: u64,
    segments: Vec<Segment>,
}

impl ExecStack {
    pub fn new(owner: u32, base: u64) -> Self {
        Self { owner, base, top: base, segments: Vec::new() }
    }

    /// Pushes a segment directly above the current top, with no padding.
    pub fn push_segment(&mut self, node: u32, size: u64) -> Segment {
        let seg = Segment { node, base: self.top, size };
        self.top += size;
        self.segments.push(seg);
        seg
    }

    pub fn pop_segment(&mut self) -> Segment {
        let seg = self.segments.pop().expect("pop on an empty execution stack");
        self.top = seg.base;
        seg
    }

    pub fn top(&self) -> u64 {
        self.top
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn peek(&self) -> Option<&Segment> {
        self.segments.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
        })
    }
}

/// One memory access as seen by a processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: AccessKind,
    pub addr: u64,
    pub task: u32,
    pub node: u32,
    pub time: u64,
}

impl TraceEvent {
    /// `time,proc,task,node,kind,addr,block`
    pub fn dump_line(&self, proc: usize, block: u64) -> String {
        format!("{},{},{},{},{},{},{}", self.time, proc, self.task, self.node, self.kind, self.addr, self.addr / block)
    }
}

pub const TRACE_HEADER: &str = "time,proc,task,node,kind,addr,block";
