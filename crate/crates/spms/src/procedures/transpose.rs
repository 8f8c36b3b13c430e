use super::{prefix_sums, Directory, Region};
use crate::exec::Exec;

/// Concatenates the subvectors named by `dir` (entries in output order) into
/// `out`. `rows` is the number of source lists; entry `b * rows + i` is the
/// `b`-th piece of list `i`. If `out_dir` is given it receives `(length,
/// absolute start)` of every piece in `out`.
pub fn transposing_redistribution(
    m: &mut Exec,
    y: Region,
    dir: Directory,
    rows: usize,
    out: Region,
    out_dir: Option<Directory>,
) {
    let entries = dir.entries();
    if entries == 0 {
        return;
    }
    assert!(rows > 0 && entries.is_multiple_of(rows), "directory is not a whole number of columns");
    if let Some(od) = out_dir {
        assert_eq!(od.entries(), entries);
    }
    assert_disjoint(&dir.peek_all(m));
    m.scoped("transposing_redistribution", |m| {
        let offsets = m.alloc(entries);
        let offs = Region::whole(offsets);
        let total = prefix_sums(m, dir.lens(), entries, offs.strided(0, 1));
        assert!(total as usize <= out.len, "transposed output does not fit");
        let cols = entries / rows;
        let output_order = m.options().output_order;
        let grain = m.grain();
        m.par_tasks(entries, &|m, t| {
            // Fault injection: visit pieces list by list instead.
            let e = if output_order { t } else { (t % cols) * rows + t / cols };
            let (len, start, off) = m.leaf(|m| {
                let len = dir.len_of(m, e) as usize;
                let start = dir.start_of(m, e) as usize;
                let off = offs.read(m, e) as usize;
                if let Some(od) = out_dir {
                    od.set(m, e, len as u64, (out.arr_index(off)) as u64);
                }
                (len, start, off)
            });
            assert!(start + len <= y.arr.len, "directory entry outside the source array");
            m.par_for(len, grain, &|m, j| {
                let v = y.read_abs(m, start + j);
                out.write(m, off + j, v);
            });
        });
        m.free(offsets);
    });
}

fn assert_disjoint(entries: &[(u64, u64)]) {
    let mut spans: Vec<(u64, u64)> = entries.iter().filter(|e| e.0 > 0).map(|&(l, s)| (s, s + l)).collect();
    spans.sort_unstable();
    for w in spans.windows(2) {
        assert!(w[0].1 <= w[1].0, "overlapping directory ranges");
    }
}
