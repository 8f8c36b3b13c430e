//! Step 1 building blocks: prefix sums, straddle-bounded search, transposing
//! redistribution, its preparation, permuting writes and small multi merge.

mod permute;
mod prefix;
mod search;
mod small_merge;
mod tr_prep;
mod transpose;

pub use permute::permuting_writes;
pub use prefix::{prefix_sums, reduce_sum};
pub use search::{probe_bound, straddle_search};
pub use small_merge::small_multi_merge;
pub use tr_prep::{tr_prep, PivotTable};
pub use transpose::transposing_redistribution;

use crate::exec::Exec;
use crate::memory::{BufferedArray, SimArray};

/// A window `[off, off + len)` of an array, optionally phase-tracked as a
/// buffered array's core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub arr: SimArray,
    pub off: usize,
    pub len: usize,
    pub buf: Option<usize>,
}

impl Region {
    pub fn whole(arr: SimArray) -> Self {
        Self { arr, off: 0, len: arr.len, buf: None }
    }

    pub fn new(arr: SimArray, off: usize, len: usize) -> Self {
        assert!(off + len <= arr.len, "region past end of array");
        Self { arr, off, len, buf: None }
    }

    /// The core of a buffered array.
    pub fn buffered(m: &Exec, b: &BufferedArray) -> Self {
        let (arr, origin) = m.core_origin(b);
        Self { arr, off: origin, len: b.len, buf: Some(b.slot) }
    }

    pub fn sub(&self, off: usize, len: usize) -> Self {
        assert!(off + len <= self.len, "subregion past end of region");
        Self { off: self.off + off, len, ..*self }
    }

    #[inline(always)]
    pub fn read(&self, m: &mut Exec, i: usize) -> u64 {
        debug_assert!(i < self.len);
        if let Some(slot) = self.buf {
            m.track_read(slot, self.off + i);
        }
        m.read(self.arr, self.off + i)
    }

    #[inline(always)]
    pub fn write(&self, m: &mut Exec, i: usize, v: u64) {
        debug_assert!(i < self.len);
        if let Some(slot) = self.buf {
            m.track_write(slot, self.off + i);
        }
        m.write(self.arr, self.off + i, v)
    }

    /// Window of the same array at absolute index `start`.
    pub fn abs_window(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.arr.len, "window past end of array");
        Self { off: start, len, ..*self }
    }

    /// Index into the underlying array of region word `i`.
    pub fn arr_index(&self, i: usize) -> usize {
        self.off + i
    }

    /// Reads the underlying array at absolute index `abs`, with phase tracking.
    #[inline(always)]
    pub fn read_abs(&self, m: &mut Exec, abs: usize) -> u64 {
        if let Some(slot) = self.buf {
            m.track_read(slot, abs);
        }
        m.read(self.arr, abs)
    }

    pub fn strided(&self, base: usize, stride: usize) -> Strided {
        Strided::new(self.arr, self.off + base, stride)
    }

    pub fn peek(&self, m: &Exec, i: usize) -> u64 {
        m.peek(self.arr, self.off + i)
    }
}

/// Every `stride`-th word of an array starting at `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strided {
    pub arr: SimArray,
    pub base: usize,
    pub stride: usize,
}

impl Strided {
    pub fn new(arr: SimArray, base: usize, stride: usize) -> Self {
        Self { arr, base, stride }
    }

    #[inline(always)]
    pub fn read(&self, m: &mut Exec, i: usize) -> u64 {
        m.read(self.arr, self.base + i * self.stride)
    }

    #[inline(always)]
    pub fn write(&self, m: &mut Exec, i: usize, v: u64) {
        m.write(self.arr, self.base + i * self.stride, v)
    }
}

/// Directory of subvectors: entry `e` is `(length, start)` at words `2e`, `2e + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Directory {
    pub words: Region,
}

impl Directory {
    pub fn new(words: Region) -> Self {
        assert!(words.len.is_multiple_of(2));
        Self { words }
    }

    pub fn entries(&self) -> usize {
        self.words.len / 2
    }

    pub fn sub(&self, first: usize, count: usize) -> Self {
        Self { words: self.words.sub(2 * first, 2 * count) }
    }

    #[inline(always)]
    pub fn len_of(&self, m: &mut Exec, e: usize) -> u64 {
        self.words.read(m, 2 * e)
    }

    #[inline(always)]
    pub fn start_of(&self, m: &mut Exec, e: usize) -> u64 {
        self.words.read(m, 2 * e + 1)
    }

    #[inline(always)]
    pub fn set(&self, m: &mut Exec, e: usize, len: u64, start: u64) {
        self.words.write(m, 2 * e, len);
        self.words.write(m, 2 * e + 1, start);
    }

    pub fn lens(&self) -> Strided {
        Strided::new(self.words.arr, self.words.off, 2)
    }

    pub fn starts(&self) -> Strided {
        Strided::new(self.words.arr, self.words.off + 1, 2)
    }

    /// Untraced copy of all entries.
    pub fn peek_all(&self, m: &Exec) -> Vec<(u64, u64)> {
        (0..self.entries()).map(|e| (self.words.peek(m, 2 * e), self.words.peek(m, 2 * e + 1))).collect()
    }
}
