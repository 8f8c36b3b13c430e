//! Small multi-way merge: every element of two short lists with its straddle
//! position in each list.

use spms::exec::{Exec, ExecOptions};
use spms::procedures::{small_multi_merge, Directory, Region};

fn main() {
    // Element ids index the key table; list 0 = ids 0,1 and list 1 = ids 2,3.
    let keys = vec![1u64, 4, 2, 3];
    let mut m = Exec::new(ExecOptions::default());
    m.set_keys(keys.clone());
    let y = m.alloc(4);
    for i in 0..4 {
        m.poke(y, i, i as u64);
    }
    let dir = m.alloc(4);
    for (i, w) in [2u64, 0, 2, 2].into_iter().enumerate() {
        m.poke(dir, i, w);
    }
    let r = 2;
    let row = 2 * r + 1;
    let out = m.alloc(4 * row);
    small_multi_merge(&mut m, Region::whole(y), Directory::new(Region::whole(dir)), r, None, Region::whole(out));
    println!("key  rank in list 0  rank in list 1");
    for p in 0..4 {
        let w = |k| m.peek(out, p * row + k);
        println!("{:>3}  {:>14}  {:>14}", keys[w(0) as usize], w(1), w(3));
    }
}
