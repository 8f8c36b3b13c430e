use super::{Region, Strided};
use crate::exec::Exec;

/// `dst[perm[i]] = src[i]` for `i < x`.
///
/// Below one block of items the writes first land `x` words apart in a zeroed
/// scratch array and are then compacted, so concurrent writers never share a
/// block of `dst` for long. At `x >= B` the writes go straight to `dst`.
pub fn permuting_writes(m: &mut Exec, perm: Region, src: Strided, x: usize, dst: Strided) {
    assert!(perm.len >= x, "permutation shorter than x");
    assert_permutation(m, perm, x);
    if x == 0 {
        return;
    }
    let grain = m.grain();
    m.scoped(crate::fs::PERMUTING_WRITES, |m| {
        if (x as u64) < m.config().block {
            let scratch = m.alloc(x * x);
            m.note_scratch(scratch, x);
            let sc = Region::whole(scratch);
            m.par_for(x * x, grain, &|m, i| sc.write(m, i, 0));
            m.par_for(x, grain, &|m, i| {
                let v = src.read(m, i);
                let p = perm.read(m, i) as usize;
                sc.write(m, p * x, v);
            });
            m.par_for(x, grain, &|m, j| {
                let v = sc.read(m, j * x);
                dst.write(m, j, v);
            });
            m.free(scratch);
        } else {
            m.par_for(x, grain, &|m, i| {
                let v = src.read(m, i);
                let p = perm.read(m, i) as usize;
                dst.write(m, p, v);
            });
        }
    });
}

fn assert_permutation(m: &Exec, perm: Region, x: usize) {
    let mut seen = vec![false; x];
    for i in 0..x {
        let p = perm.peek(m, i) as usize;
        assert!(p < x && !seen[p], "not a permutation");
        seen[p] = true;
    }
}
