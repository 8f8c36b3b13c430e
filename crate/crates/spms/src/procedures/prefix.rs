use super::{Region, Strided};
use crate::exec::Exec;

/// Subtree totals live in `tmp`: a chunk starting at `lo` at `2lo + 1`, an
/// internal node splitting at `mid` at `2mid`.
struct Tree {
    src: Strided,
    tmp: Region,
    grain: usize,
}

impl Tree {
    fn slot(&self, lo: usize, hi: usize) -> usize {
        if hi - lo <= self.grain {
            2 * lo + 1
        } else {
            2 * (lo + (hi - lo) / 2)
        }
    }

    fn up(&self, m: &mut Exec, lo: usize, hi: usize) -> u64 {
        let slot = self.slot(lo, hi);
        if hi - lo <= self.grain {
            m.leaf(|m| {
                let mut s = 0u64;
                for i in lo..hi {
                    s += self.src.read(m, i);
                }
                self.tmp.write(m, slot, s);
                s
            })
        } else {
            let mid = lo + (hi - lo) / 2;
            m.fork_join(|m| self.up(m, lo, mid), |m| self.up(m, mid, hi));
            let (ls, rs) = (self.slot(lo, mid), self.slot(mid, hi));
            m.leaf(|m| {
                let s = self.tmp.read(m, ls) + self.tmp.read(m, rs);
                self.tmp.write(m, slot, s);
                s
            })
        }
    }

    fn down(&self, m: &mut Exec, lo: usize, hi: usize, offset: u64, dst: Strided) {
        if hi - lo <= self.grain {
            m.leaf(|m| {
                let mut run = offset;
                for i in lo..hi {
                    let v = self.src.read(m, i);
                    dst.write(m, i, run);
                    run += v;
                }
            });
        } else {
            let mid = lo + (hi - lo) / 2;
            let ls = self.slot(lo, mid);
            let left = m.leaf(|m| self.tmp.read(m, ls));
            m.fork_join(|m| self.down(m, lo, mid, offset, dst), |m| self.down(m, mid, hi, offset + left, dst));
        }
    }
}

/// Exclusive prefix sums of `n` values: up-sweep then down-sweep. Returns the total.
pub fn prefix_sums(m: &mut Exec, src: Strided, n: usize, dst: Strided) -> u64 {
    if n == 0 {
        return 0;
    }
    let tmp = m.alloc(2 * n);
    let tree = Tree { src, tmp: Region::whole(tmp), grain: m.grain() };
    let total = tree.up(m, 0, n);
    tree.down(m, 0, n, 0, dst);
    m.free(tmp);
    total
}

/// Fork-join sum of `n` values; the total is also written to `out` if given.
/// `tmp` needs `2n` words.
pub fn reduce_sum(m: &mut Exec, src: Strided, n: usize, tmp: Region, out: Option<(Region, usize)>) -> u64 {
    if n == 0 {
        if let Some((r, i)) = out {
            m.leaf(|m| r.write(m, i, 0));
        }
        return 0;
    }
    assert!(tmp.len >= 2 * n);
    let tree = Tree { src, tmp, grain: m.grain() };
    let total = tree.up(m, 0, n);
    if let Some((r, i)) = out {
        m.leaf(|m| r.write(m, i, total));
    }
    total
}
