//! Exclusive prefix sums over a strided simulated array.

use spms::exec::{Exec, ExecOptions};
use spms::procedures::{prefix_sums, Region};

fn main() {
    let values = [3u64, 1, 4, 1, 5, 9, 2, 6];
    let mut m = Exec::new(ExecOptions::default());
    // Values sit at every other word, with padding between.
    let src = m.alloc(2 * values.len());
    for (i, &v) in values.iter().enumerate() {
        m.poke(src, 2 * i, v);
    }
    let dst = m.alloc(values.len());
    let total = prefix_sums(&mut m, Region::whole(src).strided(0, 2), values.len(), Region::whole(dst).strided(0, 1));
    let sums: Vec<u64> = (0..values.len()).map(|i| m.peek(dst, i)).collect();
    println!("{values:?} -> {sums:?}, total {total}");
    println!("work {} span {}", m.work(), m.span());
}
