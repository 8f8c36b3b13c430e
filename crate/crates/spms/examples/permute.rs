//! Permuting writes: item i lands at position perm[i].

use spms::exec::{Exec, ExecOptions};
use spms::procedures::{permuting_writes, Region};

fn main() {
    let x = 12;
    let perm: Vec<u64> = (0..x as u64).map(|i| (i * 5) % x as u64).collect();
    let mut m = Exec::new(ExecOptions::default());
    let pa = m.alloc(x);
    let src = m.alloc(x);
    for (i, &to) in perm.iter().enumerate() {
        m.poke(pa, i, to);
        m.poke(src, i, 100 + i as u64);
    }
    let dst = m.alloc(x);
    permuting_writes(&mut m, Region::whole(pa), Region::whole(src).strided(0, 1), x, Region::whole(dst).strided(0, 1));
    let got: Vec<u64> = (0..x).map(|i| m.peek(dst, i)).collect();
    println!("perm {perm:?}");
    println!("dst  {got:?}");
}
