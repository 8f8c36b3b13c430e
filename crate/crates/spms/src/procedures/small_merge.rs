use super::{permuting_writes, reduce_sum, straddle_search, Directory, Region};
use crate::exec::Exec;

/// Sorts `h` small multi-way merge problems by binary searching every element
/// into every list of its problem.
///
/// `dir` has `h * r` entries and problem `w` owns entries `w*r..(w+1)*r`. The
/// pieces must lie densely in `y` in directory order. The element at sorted
/// position `p` of a problem starting at `y[first]` goes to
/// `out[(first + p) * (2r + 1)]`, followed for each list `i` by the pair
/// `(c + base, c + base + 1)`: `c` counts the list-`i` items below it and
/// `base` is `rank_base[w*r + i]` (zero if absent).
pub fn small_multi_merge(m: &mut Exec, y: Region, dir: Directory, r: usize, rank_base: Option<Region>, out: Region) {
    assert!(r > 0 && dir.entries().is_multiple_of(r), "directory is not a whole number of problems");
    let stride = 2 * r + 1;
    assert!(out.len >= y.len * stride, "ranked output does not fit");
    assert_dense(&dir.peek_all(m), y);
    let h = dir.entries() / r;
    let grain = m.grain();
    let total = y.len;
    m.scoped("small_multi_merge", |m| {
        let all_counts = Region::whole(m.alloc(total * r));
        let all_ranks = Region::whole(m.alloc(total));
        let all_tmp = Region::whole(m.alloc(2 * r * total));
        let all_pos = Region::whole(m.alloc(total));
        let all_inv = Region::whole(m.alloc(total));
        m.par_tasks(h, &|m, w| {
            let (first, x) = m.leaf(|m| {
                let first = dir.start_of(m, w * r) as usize - y.off;
                let end = if w + 1 < h { dir.start_of(m, (w + 1) * r) as usize - y.off } else { y.len };
                (first, end - first)
            });
            if x == 0 {
                return;
            }
            let counts = all_counts.sub(first * r, x * r);
            let ranks = all_ranks.sub(first, x);
            let tmp = all_tmp.sub(2 * r * first, 2 * r * x);
            let pos = all_pos.sub(first, x);
            let inv = all_inv.sub(first, x);

            m.par_tasks(r, &|m, i| {
                let (len, start) = m.leaf(|m| (dir.len_of(m, w * r + i) as usize, dir.start_of(m, w * r + i) as usize));
                let base = start - y.off - first;
                m.par_for(len * r, 1, &|m, e| {
                    let (t, j) = (e / r, e % r);
                    let c = if j == i {
                        t
                    } else {
                        let v = y.read_abs(m, start + t);
                        let len_j = dir.len_of(m, w * r + j) as usize;
                        let start_j = dir.start_of(m, w * r + j) as usize;
                        straddle_search(m, y.abs_window(start_j, len_j), 0, len_j, v)
                    };
                    counts.write(m, (base + t) * r + j, c as u64);
                });
            });

            m.par_tasks(x, &|m, p| {
                reduce_sum(m, counts.strided(p * r, 1), r, tmp.sub(2 * r * p, 2 * r), Some((ranks, p)));
            });

            permuting_writes(m, ranks, y.strided(first, 1), x, out.strided(first * stride, stride));

            // The straddles are copied in output order, through the inverse
            // permutation, so neighbouring subtasks write neighbouring words.
            m.par_for(x, grain, &|m, p| pos.write(m, p, p as u64));
            permuting_writes(m, ranks, pos.strided(0, 1), x, inv.strided(0, 1));
            m.par_for(x * r, grain, &|m, e| {
                let (q, j) = (e / r, e % r);
                let p = inv.read(m, q) as usize;
                let base = rank_base.map_or(0, |b| b.read(m, w * r + j));
                let c = counts.read(m, p * r + j) + base;
                let at = (first + q) * stride + 1 + 2 * j;
                out.write(m, at, c);
                out.write(m, at + 1, c + 1);
            });
        });
        m.free(all_inv.arr);
        m.free(all_pos.arr);
        m.free(all_tmp.arr);
        m.free(all_ranks.arr);
        m.free(all_counts.arr);
    });
}

fn assert_dense(entries: &[(u64, u64)], y: Region) {
    let mut at = y.off as u64;
    for &(len, start) in entries {
        assert_eq!(start, at, "problem pieces are not dense in directory order");
        at += len;
    }
    assert_eq!(at, (y.off + y.len) as u64, "directory does not cover the input");
}
