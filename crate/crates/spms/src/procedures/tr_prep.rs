use super::{straddle_search, Directory, Region};
use crate::exec::Exec;

/// Sorted pivots with straddle counts. Pivot `p` is word `first + p * stride`
/// of `ranked`; the number of list-`i` items below it, in units of `window`
/// list positions, follows at offset `1 + 2i`.
#[derive(Debug, Clone, Copy)]
pub struct PivotTable {
    pub ranked: Region,
    pub first: usize,
    pub stride: usize,
    pub count: usize,
    pub window: usize,
    /// Search width: the answer lies in `[c * window, c * window + d]`.
    pub d: usize,
}

/// Cuts each list of `lists` at the pivots. Writes the rank table (row `b`,
/// list `i` at `b * r + i`, rows `0..=count + 1`) to `s_table` and the pieces
/// in output order to `out_dir`.
pub fn tr_prep(m: &mut Exec, y: Region, lists: Directory, pivots: &PivotTable, s_table: Region, out_dir: Directory) {
    let r = lists.entries();
    let k = pivots.count + 1;
    assert!(s_table.len >= (k + 1) * r, "rank table too small");
    assert_eq!(out_dir.entries(), k * r, "output directory has the wrong size");
    if r == 0 {
        return;
    }
    let p = *pivots;
    m.scoped("tr_prep", |m| {
        m.par_for(r, m.grain(), &|m, i| {
            let len = lists.len_of(m, i);
            s_table.write(m, i, 0);
            s_table.write(m, k * r + i, len);
        });
        m.par_for(pivots.count * r, 1, &|m, e| {
            let (row, i) = (e / r, e % r);
            let at = p.first + row * p.stride;
            let pivot = p.ranked.read(m, at);
            let c = p.ranked.read(m, at + 1 + 2 * i) as usize;
            let len = lists.len_of(m, i) as usize;
            let start = lists.start_of(m, i) as usize;
            let lo = c * p.window;
            assert!(lo <= len, "straddle outside its list");
            let hi = (lo + p.d).min(len);
            let list = y.abs_window(start, len);
            let rank = straddle_search(m, list, lo, hi, pivot);
            assert!(rank < hi || hi == len || !m.less(list.peek(m, hi), pivot), "straddle wider than d");
            assert!(lo == 0 || m.less(list.peek(m, lo - 1), pivot), "straddle wider than d");
            s_table.write(m, (row + 1) * r + i, rank as u64);
        });
        m.par_for(k * r, m.grain(), &|m, e| {
            let lo = s_table.read(m, e);
            let hi = s_table.read(m, e + r);
            let start = lists.start_of(m, e % r);
            out_dir.set(m, e, hi - lo, start + lo);
        });
    });
}
