//! False-sharing accounting: per block incarnation, the writes that move the
//! block between processors, the access window of every kernel that touched
//! it, and the audits built on those.

use crate::dag::{NodeId, NodeKind};
use crate::exec::Recording;
use crate::hashing::FastMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const NONE: u32 = u32::MAX;

/// One kernel's access window on one block incarnation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kernel: u32,
    pub proc: u16,
    pub first: u64,
    pub last: u64,
}

/// Ledger entries of a block touched by more than one kernel.
#[derive(Debug, Clone, Default)]
pub struct SharedBlock {
    pub incarnation: u32,
    pub windows: Vec<Window>,
    /// (time, writing processor), time-ordered.
    pub writes: Vec<(u64, u16)>,
}

#[derive(Debug, Clone, Copy)]
struct BlockState {
    last_proc: u16,
    kernel: u32,
    shared: u32,
    last_time: u64,
    /// Stack blocks: accesses by tasks other than the stack's owner.
    foreign: u32,
}

const FRESH: BlockState = BlockState { last_proc: u16::MAX, kernel: NONE, shared: NONE, last_time: 0, foreign: 0 };

/// Writes to `writes` within `[t1, t2]`.
pub fn block_delay(writes: &[(u64, u16)], t1: u64, t2: u64) -> u64 {
    assert!(t1 <= t2, "block delay over an empty interval");
    let lo = writes.partition_point(|w| w.0 < t1);
    let hi = writes.partition_point(|w| w.0 <= t2);
    (hi - lo) as u64
}

/// Block delay charged to one window: writes by other processors inside it.
fn window_delay(writes: &[(u64, u16)], w: &Window) -> u64 {
    let lo = writes.partition_point(|x| x.0 < w.first);
    let hi = writes.partition_point(|x| x.0 <= w.last);
    writes[lo..hi].iter().filter(|x| x.1 != w.proc).count() as u64
}

/// Online ledger fed by the scheduled replay. Incarnations are dense ids:
/// heap blocks first (per allocation), then stack blocks as they appear.
#[derive(Debug, Clone)]
pub struct FsLedger {
    states: Vec<BlockState>,
    shared: Vec<SharedBlock>,
    /// Per stack incarnation (offset by the heap count): owning task.
    stack_owner: Vec<u32>,
    heap_count: u32,
    pub moving_writes: u64,
}

impl FsLedger {
    pub fn new(heap_blocks: u32) -> Self {
        Self {
            states: vec![FRESH; heap_blocks as usize],
            shared: Vec::new(),
            stack_owner: Vec::new(),
            heap_count: heap_blocks,
            moving_writes: 0,
        }
    }

    /// A fresh incarnation for a stack block of `task`'s region.
    pub fn new_stack_incarnation(&mut self, task: u32) -> u32 {
        let id = u32::try_from(self.states.len()).expect("too many block incarnations");
        self.states.push(FRESH);
        self.stack_owner.push(task);
        id
    }

    pub fn is_stack(&self, inc: u32) -> bool {
        inc >= self.heap_count
    }

    /// Records one access. A write counts toward block delay only when the
    /// block has to move: some other processor touched it since the writer did.
    #[inline]
    pub fn access(&mut self, inc: u32, proc: u16, kernel: u32, time: u64, write: bool, foreign: bool) {
        let st = &mut self.states[inc as usize];
        if foreign {
            st.foreign += 1;
        }
        if st.kernel == kernel && st.shared == NONE {
            st.last_proc = proc;
            st.last_time = time;
            return;
        }
        if st.kernel == NONE {
            *st = BlockState { last_proc: proc, kernel, shared: NONE, last_time: time, foreign: st.foreign };
            return;
        }
        let moving = write && st.last_proc != proc;
        if st.shared == NONE {
            st.shared = self.shared.len() as u32;
            // No moving write can precede the second kernel, so the first
            // window's start does not matter.
            let first = Window { kernel: st.kernel, proc: st.last_proc, first: 0, last: st.last_time };
            self.shared.push(SharedBlock { incarnation: inc, windows: vec![first], writes: Vec::new() });
        }
        st.kernel = kernel;
        st.last_proc = proc;
        st.last_time = time;
        let sb = &mut self.shared[st.shared as usize];
        match sb.windows.iter_mut().rev().find(|w| w.kernel == kernel) {
            Some(w) => w.last = time,
            None => sb.windows.push(Window { kernel, proc, first: time, last: time }),
        }
        if moving {
            sb.writes.push((time, proc));
            self.moving_writes += 1;
        }
    }

    pub fn shared_blocks(&self) -> &[SharedBlock] {
        &self.shared
    }

    pub fn foreign_accesses(&self, inc: u32) -> u32 {
        self.states[inc as usize].foreign
    }

    pub fn stack_owner(&self, inc: u32) -> Option<u32> {
        inc.checked_sub(self.heap_count).map(|i| self.stack_owner[i as usize])
    }

    /// Total and per-processor charged delay, plus the largest lifetime delay of one block.
    pub fn summarize(&self, procs: usize) -> FsSummary {
        let mut per_proc = vec![0u64; procs];
        let mut total = 0;
        let mut max_block = 0;
        let mut max_charged = 0;
        for sb in &self.shared {
            max_block = max_block.max(sb.writes.len() as u64);
            let mut charged = 0;
            for w in &sb.windows {
                let d = window_delay(&sb.writes, w);
                per_proc[w.proc as usize] += d;
                charged += d;
            }
            total += charged;
            max_charged = max_charged.max(charged);
        }
        FsSummary { total, per_proc, max_block_delay: max_block, max_charged, shared_blocks: self.shared.len() as u64 }
    }

    /// Charged delay summed over the blocks of each given heap incarnation range.
    pub fn charged_in(&self, range: std::ops::Range<u32>) -> u64 {
        let mut sum = 0;
        for inc in range {
            let st = self.states[inc as usize];
            if st.shared != NONE {
                let sb = &self.shared[st.shared as usize];
                sum += sb.windows.iter().map(|w| window_delay(&sb.writes, w)).sum::<u64>();
            }
        }
        sum
    }

    /// Checks every stack block against delay ≤ 2x + u, where x counts
    /// accesses by tasks other than the owner and u the owner's usurpations.
    pub fn stack_audit(&self, usurpations: &[u32]) -> StackAudit {
        let mut audit = StackAudit::default();
        for sb in &self.shared {
            let Some(owner) = self.stack_owner(sb.incarnation) else { continue };
            let delay = sb.writes.len() as u64;
            let x = self.foreign_accesses(sb.incarnation) as u64;
            let u = usurpations[owner as usize] as u64;
            audit.blocks += 1;
            audit.max_delay = audit.max_delay.max(delay);
            if delay > 2 * x + u {
                audit.violations.push(StackViolation {
                    incarnation: sb.incarnation,
                    task: owner,
                    delay,
                    foreign: x,
                    usurpations: u,
                });
            }
        }
        audit
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsSummary {
    pub total: u64,
    pub per_proc: Vec<u64>,
    /// Largest number of moving writes one block incarnation saw.
    pub max_block_delay: u64,
    /// Largest delay charged to one block incarnation across its windows.
    pub max_charged: u64,
    pub shared_blocks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackViolation {
    pub incarnation: u32,
    pub task: u32,
    pub delay: u64,
    pub foreign: u64,
    pub usurpations: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackAudit {
    pub blocks: u64,
    pub max_delay: u64,
    pub violations: Vec<StackViolation>,
}

/// Worst block sharing seen across all invocations of one named procedure.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeSharing {
    pub invocations: u64,
    /// Largest number of written heap blocks the two children of one fork both touch.
    pub max_shared: u64,
}

/// Block-sharing audit of every recorded procedure invocation, keyed by procedure name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharingAudit {
    pub scopes: BTreeMap<String, ScopeSharing>,
}

impl SharingAudit {
    pub fn max_shared(&self, name: &str) -> u64 {
        self.scopes.get(name).map_or(0, |s| s.max_shared)
    }
}

/// For every fork inside a recorded procedure invocation, counts the heap
/// blocks that both children of the fork touch and that the fork's subtree
/// writes. Blocks are identified per allocation, so a block reused after a
/// free is a different block. Permuting writes are left out, both their own
/// invocations and where they nest in others; their scratch is audited by
/// charged delay instead.
pub fn sharing_audit(rec: &Recording) -> SharingAudit {
    let shift = rec.config.block.trailing_zeros();
    let dag = &rec.dag;
    let mut permuting: Vec<(NodeId, NodeId)> =
        rec.scopes.iter().filter(|s| s.name == PERMUTING_WRITES).map(|s| (s.first, s.end)).collect();
    permuting.sort_unstable();
    let in_permuting = |v: NodeId| {
        let at = permuting.partition_point(|r| r.0 <= v);
        at > 0 && v < permuting[at - 1].1
    };
    let block_key = |i: u64| -> u64 {
        let e = rec.event(i);
        ((e.owner() as u64) << 32) | (e.offset() >> shift)
    };

    let mut audit = SharingAudit::default();
    // Per block: leaves that write it, in dfs order.
    let mut writers: FastMap<u64, Vec<NodeId>> = FastMap::default();
    let mut last_leaf: FastMap<u64, NodeId> = FastMap::default();
    let mut pairs: Vec<(NodeId, u64)> = Vec::new();
    let mut open: Vec<NodeId> = Vec::new();
    for scope in rec.scopes.iter().filter(|s| s.name != PERMUTING_WRITES) {
        writers.clear();
        last_leaf.clear();
        pairs.clear();
        for v in scope.first..scope.end {
            if dag.kind(v) != NodeKind::Leaf || in_permuting(v) {
                continue;
            }
            for i in dag.events(v) {
                if rec.event(i).kind() == crate::memory::AccessKind::Write {
                    let w = writers.entry(block_key(i)).or_default();
                    if w.last() != Some(&v) {
                        w.push(v);
                    }
                }
            }
        }
        for v in scope.first..scope.end {
            match dag.kind(v) {
                NodeKind::Fork => open.push(v),
                NodeKind::Join => {
                    open.pop();
                }
                NodeKind::Leaf if in_permuting(v) => {}
                NodeKind::Leaf => {
                    for i in dag.events(v) {
                        let k = block_key(i);
                        let Some(w) = writers.get(&k) else { continue };
                        let Some(prev) = last_leaf.insert(k, v) else { continue };
                        if prev == v {
                            continue;
                        }
                        // Deepest open fork containing `prev`; the two leaves
                        // run concurrently only on opposite sides of it.
                        let at = open.partition_point(|&f| f < prev);
                        if at == 0 {
                            continue;
                        }
                        let f = open[at - 1];
                        let right = dag.right_of(f);
                        if prev < right && v >= right {
                            let first = w.partition_point(|&x| x < f);
                            if first < w.len() && w[first] < dag.join_of(f) {
                                pairs.push((f, k));
                            }
                        }
                    }
                }
            }
        }
        debug_assert!(open.is_empty(), "scope is not a closed series of subtrees");
        pairs.sort_unstable();
        pairs.dedup();
        let mut worst = 0u64;
        let mut run = 0u64;
        for (idx, p) in pairs.iter().enumerate() {
            run = if idx > 0 && pairs[idx - 1].0 == p.0 { run + 1 } else { 1 };
            worst = worst.max(run);
        }
        let entry = audit.scopes.entry(scope.name.to_string()).or_default();
        entry.invocations += 1;
        entry.max_shared = entry.max_shared.max(worst);
    }
    audit
}

pub const PERMUTING_WRITES: &str = "permuting_writes";
