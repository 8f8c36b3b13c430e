//! Series-parallel computation dag stored in sequential (dfs) order.
//!
//! A fork at index `f` is followed by its left subtree, then its right subtree
//! starting at `right_of(f)`, then its join at `join_of(f)`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Fork,
    Join,
    Leaf,
}

const NONE: u32 = u32::MAX;

fn narrow(v: u64, what: &str) -> u32 {
    u32::try_from(v).expect(what)
}

/// Per-fork data, kept apart from the per-node arrays since most nodes are not forks.
#[derive(Debug, Clone, Copy)]
struct ForkInfo {
    join: u32,
    right: u32,
    /// Heap arena top when the fork executed.
    heap_top: u32,
    /// Number of stack segments below the fork's own frame.
    depth: u32,
}

#[derive(Debug, Clone, Default)]
pub struct Dag {
    kind: Vec<NodeKind>,
    work: Vec<u32>,
    /// Fork: index into `forks`. Join: its fork.
    link: Vec<u32>,
    /// First trace event of each node; one trailing sentinel once sealed.
    ev_start: Vec<u32>,
    forks: Vec<ForkInfo>,
    open: Vec<u32>,
}

impl Dag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn fork_count(&self) -> usize {
        self.forks.len()
    }

    fn push(&mut self, kind: NodeKind, work: u32, ev: u64) -> NodeId {
        let id = u32::try_from(self.kind.len()).expect("dag node id overflow");
        assert!(id != NONE, "dag node id overflow");
        self.kind.push(kind);
        self.work.push(work);
        self.link.push(NONE);
        self.ev_start.push(narrow(ev, "trace too long to record"));
        id
    }

    fn info(&self, f: NodeId) -> &ForkInfo {
        debug_assert_eq!(self.kind(f), NodeKind::Fork);
        &self.forks[self.link[f as usize] as usize]
    }

    fn info_mut(&mut self, f: NodeId) -> &mut ForkInfo {
        let i = self.link[f as usize] as usize;
        &mut self.forks[i]
    }

    /// Appends a leaf of the given weight.
    pub fn leaf(&mut self, work: u32) -> NodeId {
        self.leaf_at(work, 0)
    }

    pub fn leaf_at(&mut self, work: u32, ev: u64) -> NodeId {
        self.push(NodeKind::Leaf, work, ev)
    }

    pub fn set_work(&mut self, node: NodeId, work: u32) {
        self.work[node as usize] = work;
    }

    /// Opens a fork; the left child is built next.
    pub fn fork(&mut self) -> NodeId {
        self.fork_at(0, 0, 0)
    }

    pub fn fork_at(&mut self, ev: u64, heap_top: u64, depth: u32) -> NodeId {
        let f = self.push(NodeKind::Fork, 1, ev);
        self.link[f as usize] = narrow(self.forks.len() as u64, "too many forks");
        self.forks.push(ForkInfo {
            join: NONE,
            right: NONE,
            heap_top: narrow(heap_top, "heap too large to record"),
            depth,
        });
        self.open.push(f);
        f
    }

    /// Ends the left child of the innermost open fork.
    pub fn start_right(&mut self, ev: u64) {
        let f = *self.open.last().expect("right child with no open fork");
        assert_eq!(self.info(f).right, NONE, "right child started twice");
        if self.len() == f as usize + 1 {
            self.push(NodeKind::Leaf, 0, ev);
        }
        let r = self.len() as u32;
        self.info_mut(f).right = r;
    }

    /// Closes the innermost open fork with its join.
    pub fn join(&mut self) -> NodeId {
        self.join_at(0)
    }

    pub fn join_at(&mut self, ev: u64) -> NodeId {
        let f = self.open.pop().expect("unmatched join");
        let r = self.info(f).right;
        assert!(r != NONE, "join before the right child started");
        if self.len() == r as usize {
            self.push(NodeKind::Leaf, 0, ev);
        }
        let j = self.push(NodeKind::Join, 1, ev);
        self.info_mut(f).join = j;
        self.link[j as usize] = f;
        j
    }

    /// Convenience builder for a balanced fork with two child builders.
    pub fn fork_join(&mut self, left: impl FnOnce(&mut Self), right: impl FnOnce(&mut Self)) -> NodeId {
        self.fork();
        left(self);
        self.start_right(0);
        right(self);
        self.join()
    }

    /// Appends the end-of-trace sentinel; no nodes may follow.
    pub fn seal(&mut self, events: u64) {
        assert!(self.open.is_empty(), "dag sealed with open forks");
        self.ev_start.push(narrow(events, "trace too long to record"));
        self.kind.shrink_to_fit();
        self.work.shrink_to_fit();
        self.link.shrink_to_fit();
        self.ev_start.shrink_to_fit();
        self.forks.shrink_to_fit();
    }

    pub fn is_well_formed(&self) -> bool {
        if !self.open.is_empty() {
            return false;
        }
        let mut stack: Vec<u32> = Vec::new();
        for i in 0..self.len() {
            match self.kind[i] {
                NodeKind::Fork => {
                    let ForkInfo { right: r, join: j, .. } = *self.info(i as u32);
                    if r == NONE || j == NONE || !(i as u32 + 1 < r && r < j) {
                        return false;
                    }
                    stack.push(i as u32);
                }
                NodeKind::Join => match stack.pop() {
                    Some(f) if self.link[i] == f && self.info(f).join == i as u32 => {}
                    _ => return false,
                },
                NodeKind::Leaf => {}
            }
        }
        stack.is_empty()
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kind[n as usize]
    }

    pub fn weight(&self, n: NodeId) -> u64 {
        self.work[n as usize] as u64
    }

    pub fn right_of(&self, f: NodeId) -> NodeId {
        self.info(f).right
    }

    pub fn join_of(&self, f: NodeId) -> NodeId {
        self.info(f).join
    }

    pub fn fork_of(&self, j: NodeId) -> NodeId {
        debug_assert_eq!(self.kind(j), NodeKind::Join);
        self.link[j as usize]
    }

    pub fn heap_top(&self, f: NodeId) -> u64 {
        self.info(f).heap_top as u64
    }

    pub fn stack_depth(&self, f: NodeId) -> u32 {
        self.info(f).depth
    }

    /// Recorded trace events of leaf `n`; fork and join stack accesses are
    /// implied by the structure and not stored.
    pub fn events(&self, n: NodeId) -> std::ops::Range<u64> {
        self.ev_start[n as usize] as u64..self.ev_start[n as usize + 1] as u64
    }

    /// Total work T1.
    pub fn work(&self) -> u64 {
        self.work.iter().map(|&w| w as u64).sum()
    }

    /// Maximum-weight root-to-sink path.
    pub fn span(&self) -> u64 {
        // (right start, weight after fork, left result)
        let mut stack: Vec<(u32, u64, u64)> = Vec::new();
        let mut cur = 0u64;
        for i in 0..self.len() as u32 {
            while let Some(top) = stack.last_mut() {
                if top.0 == i {
                    top.2 = cur;
                    cur = top.1;
                    top.0 = NONE;
                } else {
                    break;
                }
            }
            match self.kind(i) {
                NodeKind::Fork => {
                    cur += 1;
                    stack.push((self.right_of(i), cur, 0));
                }
                NodeKind::Join => {
                    let (_, _, left) = stack.pop().expect("unmatched join");
                    cur = cur.max(left) + 1;
                }
                NodeKind::Leaf => cur += self.weight(i),
            }
        }
        cur
    }

    /// Fork-nesting height (number of forks on the deepest root-to-leaf chain).
    pub fn height(&self) -> usize {
        let (mut depth, mut best) = (0usize, 0usize);
        for i in 0..self.len() as u32 {
            match self.kind(i) {
                NodeKind::Fork => {
                    depth += 1;
                    best = best.max(depth);
                }
                NodeKind::Join => depth -= 1,
                NodeKind::Leaf => {}
            }
        }
        best
    }

    /// Nodes of the subtree that starts at `start`: a fork's right child or the whole dag.
    pub fn task_range(&self, root_fork: Option<NodeId>) -> std::ops::Range<u32> {
        match root_fork {
            None => 0..self.len() as u32,
            Some(f) => self.right_of(f)..self.join_of(f),
        }
    }
}

/// For the task rooted at each fork's right child: the most frames any path
/// through the task stacks up (in forks) and the task's work.
pub fn task_depth_and_work(dag: &Dag, forks: &[NodeId]) -> Vec<(u32, u64)> {
    let mut order: Vec<usize> = (0..forks.len()).collect();
    order.sort_by_key(|&i| forks[i]);
    let mut out = vec![(0u32, 0u64); forks.len()];
    // (result slot, end node, nesting at the root, deepest nesting, work)
    let mut active: Vec<(usize, u32, u32, u32, u64)> = Vec::new();
    let mut next = 0;
    let mut depth = 0u32;
    for v in 0..dag.len() as NodeId {
        while active.last().is_some_and(|a| a.1 == v) {
            let (slot, _, base, deepest, work) = active.pop().unwrap();
            out[slot] = (deepest - base, work);
        }
        while next < order.len() && dag.right_of(forks[order[next]]) == v {
            let f = forks[order[next]];
            active.push((order[next], dag.join_of(f), depth, depth, 0));
            next += 1;
        }
        match dag.kind(v) {
            NodeKind::Fork => depth += 1,
            NodeKind::Join => depth -= 1,
            NodeKind::Leaf => {}
        }
        for a in &mut active {
            a.3 = a.3.max(depth);
            a.4 += dag.weight(v);
        }
    }
    while let Some((slot, _, base, deepest, work)) = active.pop() {
        out[slot] = (deepest - base, work);
    }
    out
}

/// Steal of the right child of `fork`, in sequential order of forks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StealRecord {
    pub index: usize,
    pub fork: NodeId,
    pub thief: usize,
    pub victim: usize,
    pub time: u64,
}

/// A dfs-contiguous run of nodes `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    pub id: usize,
    pub start: NodeId,
    pub end: NodeId,
    pub proc: Option<usize>,
}

/// Splits the dag into kernels: each steal at fork `f` cuts its kernel into
/// the part before `f`'s right child, the stolen subtree, and the part from
/// `f`'s join on.
pub fn partition_kernels(dag: &Dag, stolen_forks: &[NodeId]) -> Vec<Kernel> {
    let mut forks = stolen_forks.to_vec();
    forks.sort_unstable();
    let mut ends: BTreeMap<u32, u32> = BTreeMap::new();
    if !dag.is_empty() {
        ends.insert(0, dag.len() as u32);
    }
    for f in forks {
        let (&a, &b) = ends.range(..=f).next_back().expect("steal outside every kernel");
        let (r, j) = (dag.right_of(f), dag.join_of(f));
        assert!(a <= f && f < b && j < b, "steal at fork {f} leaves its kernel [{a},{b})");
        ends.insert(a, r);
        ends.insert(r, j);
        ends.insert(j, b);
    }
    ends.into_iter().enumerate().map(|(id, (start, end))| Kernel { id, start, end, proc: None }).collect()
}

/// The path through a task's nodes that turns left at a fork only when the
/// right child was stolen. `root_fork = None` means the root task.
pub fn steal_path(dag: &Dag, root_fork: Option<NodeId>, stolen: &dyn Fn(NodeId) -> bool) -> Vec<NodeId> {
    let range = dag.task_range(root_fork);
    let mut path = Vec::new();
    let mut left_ends: Vec<(u32, u32)> = Vec::new();
    let mut i = range.start;
    while i < range.end {
        if let Some(&(r, j)) = left_ends.last() {
            if i == r {
                left_ends.pop();
                i = j;
                continue;
            }
        }
        path.push(i);
        match dag.kind(i) {
            NodeKind::Fork if stolen(i) => {
                left_ends.push((dag.right_of(i), dag.join_of(i)));
                i += 1;
            }
            NodeKind::Fork => i = dag.right_of(i),
            _ => i += 1,
        }
    }
    path
}

/// Checks the steal-path predicate: every direct steal's fork is on the path,
/// and every on-path fork whose right child is off the path was stolen.
pub fn check_steal_path(dag: &Dag, path: &[NodeId], direct_steals: &[NodeId], stolen: &dyn Fn(NodeId) -> bool) -> bool {
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        if dag.kind(a) == NodeKind::Fork {
            let went_right = b == dag.right_of(a);
            if !went_right && !stolen(a) {
                return false;
            }
        }
    }
    let mut on_path: Vec<NodeId> = path.to_vec();
    on_path.sort_unstable();
    direct_steals.iter().all(|f| on_path.binary_search(f).is_ok())
}

/// Groups stolen forks by the innermost stolen task containing them.
/// Key `None` is the root task.
pub fn direct_steals(dag: &Dag, stolen_forks: &[NodeId]) -> BTreeMap<Option<NodeId>, Vec<NodeId>> {
    let mut forks = stolen_forks.to_vec();
    forks.sort_unstable();
    let mut out: BTreeMap<Option<NodeId>, Vec<NodeId>> = BTreeMap::new();
    out.insert(None, Vec::new());
    // (right child, join, fork) of every stolen fork whose join is still ahead.
    let mut open: Vec<(u32, u32, NodeId)> = Vec::new();
    for f in forks {
        while open.last().is_some_and(|&(_, join, _)| f >= join) {
            open.pop();
        }
        // A fork in the left part of a stolen fork belongs to an outer task.
        let owner = open.iter().rev().find(|&&(right, _, _)| right <= f).map(|&(_, _, g)| g);
        out.entry(owner).or_default().push(f);
        out.entry(Some(f)).or_default();
        open.push((dag.right_of(f), dag.join_of(f), f));
    }
    out
}
