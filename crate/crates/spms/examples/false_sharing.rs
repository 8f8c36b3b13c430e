//! False-sharing delay: the single-block rule, then the totals a scheduled
//! sort accumulates.

use spms::bench::{self, BenchConfig, Generator, Source};
use spms::fs::block_delay;

fn main() {
    // Moving writes (time, processor) seen by one block; the delay is how
    // many fall inside the window.
    let writes = [(1, 0), (2, 1), (3, 1), (4, 0), (9, 2)];
    println!("delay in [0, 5]: {}", block_delay(&writes, 0, 5));
    println!("delay in [0, 10]: {}", block_delay(&writes, 0, 10));

    let keys = bench::generate(Generator::Uniform, 8000, 5);
    let source = Source { name: "uniform".into(), seed: 5 };
    for procs in [1, 2, 4] {
        let cfg = BenchConfig { procs, ..BenchConfig::default() };
        let r = bench::run_once(&cfg, &keys, &source, true, None).unwrap().report;
        println!(
            "p={procs}: steals {}, F {}, max block delay {}, shared blocks {}",
            r.steals, r.fs_delay, r.max_block_delay, r.shared_blocks
        );
    }
}
