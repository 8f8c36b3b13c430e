//! LRU cache simulation and trace replay.

use crate::exec::Recording;
use crate::memory::CacheConfig;

const EMPTY: u32 = u32::MAX;

fn ideal(block: u64, mask: usize) -> usize {
    (block.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 29) as usize & mask
}

/// Fully associative LRU cache over block ids.
#[derive(Debug, Clone)]
pub struct Lru {
    lines: usize,
    table: Vec<u32>,
    mask: usize,
    blocks: Vec<u64>,
    prev: Vec<u32>,
    next: Vec<u32>,
    free: Vec<u32>,
    head: u32,
    tail: u32,
    pub hits: u64,
    pub misses: u64,
}

impl Lru {
    pub fn new(lines: usize) -> Self {
        assert!(lines > 0);
        let size = (lines * 2).next_power_of_two();
        Self {
            lines,
            table: vec![EMPTY; size],
            mask: size - 1,
            blocks: Vec::with_capacity(lines),
            prev: Vec::with_capacity(lines),
            next: Vec::with_capacity(lines),
            free: Vec::new(),
            head: EMPTY,
            tail: EMPTY,
            hits: 0,
            misses: 0,
        }
    }

    pub fn for_config(config: &CacheConfig) -> Self {
        Self::new(config.lines())
    }

    pub fn capacity(&self) -> usize {
        self.lines
    }

    pub fn len(&self) -> usize {
        self.blocks.len() - self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn find(&self, block: u64) -> Option<usize> {
        let mut i = ideal(block, self.mask);
        loop {
            let s = self.table[i];
            if s == EMPTY {
                return None;
            }
            if self.blocks[s as usize] == block {
                return Some(i);
            }
            i = (i + 1) & self.mask;
        }
    }

    fn table_insert(&mut self, block: u64, slot: u32) {
        let mut i = ideal(block, self.mask);
        while self.table[i] != EMPTY {
            i = (i + 1) & self.mask;
        }
        self.table[i] = slot;
    }

    fn table_remove(&mut self, pos: usize) {
        let mut i = pos;
        let mut j = pos;
        loop {
            j = (j + 1) & self.mask;
            let s = self.table[j];
            if s == EMPTY {
                break;
            }
            let k = ideal(self.blocks[s as usize], self.mask);
            let stays = if i <= j { i < k && k <= j } else { i < k || k <= j };
            if !stays {
                self.table[i] = s;
                i = j;
            }
        }
        self.table[i] = EMPTY;
    }

    fn unlink(&mut self, s: u32) {
        let (p, n) = (self.prev[s as usize], self.next[s as usize]);
        if p != EMPTY {
            self.next[p as usize] = n;
        } else {
            self.head = n;
        }
        if n != EMPTY {
            self.prev[n as usize] = p;
        } else {
            self.tail = p;
        }
    }

    fn push_front(&mut self, s: u32) {
        self.prev[s as usize] = EMPTY;
        self.next[s as usize] = self.head;
        if self.head != EMPTY {
            self.prev[self.head as usize] = s;
        }
        self.head = s;
        if self.tail == EMPTY {
            self.tail = s;
        }
    }

    /// Touches `block`; returns true on a hit.
    #[inline]
    pub fn access(&mut self, block: u64) -> bool {
        if self.head != EMPTY && self.blocks[self.head as usize] == block {
            self.hits += 1;
            return true;
        }
        self.access_slow(block)
    }

    fn access_slow(&mut self, block: u64) -> bool {
        if let Some(pos) = self.find(block) {
            let s = self.table[pos];
            if self.head != s {
                self.unlink(s);
                self.push_front(s);
            }
            self.hits += 1;
            return true;
        }
        self.misses += 1;
        let slot = if let Some(s) = self.free.pop() {
            s
        } else if self.blocks.len() < self.lines {
            self.blocks.push(0);
            self.prev.push(EMPTY);
            self.next.push(EMPTY);
            (self.blocks.len() - 1) as u32
        } else {
            let victim = self.tail;
            let pos = self.find(self.blocks[victim as usize]).expect("lru table out of sync");
            self.table_remove(pos);
            self.unlink(victim);
            victim
        };
        self.blocks[slot as usize] = block;
        self.table_insert(block, slot);
        self.push_front(slot);
        false
    }

    pub fn contains(&self, block: u64) -> bool {
        self.find(block).is_some()
    }

    /// Drops `block` if resident; returns whether it was.
    pub fn invalidate(&mut self, block: u64) -> bool {
        match self.find(block) {
            Some(pos) => {
                let s = self.table[pos];
                self.table_remove(pos);
                self.unlink(s);
                self.free.push(s);
                true
            }
            None => false,
        }
    }

    /// Resident blocks from most to least recently used.
    pub fn resident(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.len());
        let mut s = self.head;
        while s != EMPTY {
            out.push(self.blocks[s as usize]);
            s = self.next[s as usize];
        }
        out
    }
}

/// Misses of a single cache replaying the recorded run in sequential order.
pub fn replay_sequential(rec: &Recording, config: &CacheConfig) -> u64 {
    let mut c = Lru::for_config(config);
    let shift = config.block.trailing_zeros();
    rec.for_each_access(|_, _, addr| {
        c.access(addr >> shift);
    });
    c.misses
}
