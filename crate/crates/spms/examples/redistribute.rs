//! Transposing redistribution: pieces stored list by list are regrouped
//! column by column.

use spms::exec::{Exec, ExecOptions};
use spms::procedures::{transposing_redistribution, Directory, Region};

fn fill(m: &mut Exec, words: &[u64]) -> spms::memory::SimArray {
    let a = m.alloc(words.len());
    for (i, &w) in words.iter().enumerate() {
        m.poke(a, i, w);
    }
    a
}

fn main() {
    // Two lists, each cut into three pieces: list 0 = [10 11 | 12 | 13],
    // list 1 = [20 | 21 22 | ].
    let y = [10u64, 11, 12, 13, 20, 21, 22];
    // Directory entries (length, start into y), column by column.
    let dir = [2u64, 0, 1, 4, 1, 2, 2, 5, 1, 3, 0, 7];
    let mut m = Exec::new(ExecOptions::default());
    let ya = fill(&mut m, &y);
    let da = fill(&mut m, &dir);
    let out = m.alloc(y.len());
    transposing_redistribution(
        &mut m,
        Region::whole(ya),
        Directory::new(Region::whole(da)),
        2,
        Region::whole(out),
        None,
    );
    let got: Vec<u64> = (0..y.len()).map(|i| m.peek(out, i)).collect();
    println!("{y:?} -> {got:?}");
}
