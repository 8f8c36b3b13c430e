use super::Region;
use crate::exec::Exec;

/// Index of the smallest element of `list[lo..hi]` that is not less than
/// `pivot`, or `hi` if there is none. Must run inside a leaf.
pub fn straddle_search(m: &mut Exec, list: Region, lo: usize, hi: usize, pivot: u64) -> usize {
    assert!(lo <= hi && hi <= list.len, "search window out of range");
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        let v = list.read(m, mid);
        if m.less(v, pivot) {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    a
}

/// Most probes a search over a window of `width` elements makes.
pub fn probe_bound(width: usize) -> usize {
    (usize::BITS - width.leading_zeros()) as usize + 1
}
