//! Sorts random keys and prints the work, span and memory the run used.

use spms::bench::{self, Generator};
use spms::exec::{Exec, ExecOptions};
use spms::spms::{sort, SpmsParams};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50_000);
    let keys = bench::generate(Generator::Uniform, n, 7);
    let mut m = Exec::new(ExecOptions::default());
    let sorted = sort(&mut m, &keys, SpmsParams::default());
    assert!(bench::oracle_mismatch(&keys, &sorted).is_none());
    println!("n = {n}");
    println!("first keys {:?}", &sorted.keys[..sorted.keys.len().min(5)]);
    println!("work {} span {} forks {}", m.work(), m.span(), m.forks());
    println!("peak heap {} words", m.peak_heap_words());
    let s = &sorted.stats;
    println!(
        "recursion depth {}, {} subproblems checked, {} outside the size window",
        s.max_depth, s.subproblems_checked, s.window_violations
    );
}
