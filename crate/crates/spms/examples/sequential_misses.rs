//! Sequential cache misses of the sort for a few cache sizes, next to the
//! n log n / (B log M) shape.

use spms::bench::{self, Generator};
use spms::exec::{Exec, ExecOptions};
use spms::memory::CacheConfig;
use spms::spms::{sort, SpmsParams};

fn main() {
    let n = 1 << 15;
    let keys = bench::generate(Generator::Uniform, n, 3);
    println!("{:>8} {:>5} {:>9} {:>8}", "M", "B", "Q_seq", "ratio");
    for (capacity, block) in [(1u64 << 12, 64u64), (1 << 14, 64), (1 << 16, 64), (1 << 14, 32)] {
        let cache = CacheConfig::new(capacity, block).expect("valid cache");
        let mut m = Exec::new(ExecOptions { cache, stream_cache: true, ..Default::default() });
        sort(&mut m, &keys, SpmsParams::default());
        let q = m.seq_misses().unwrap();
        let nlogn = n as f64 * (n as f64).log2();
        let ratio = q as f64 * block as f64 * (capacity as f64).log2() / nlogn;
        println!("{capacity:>8} {block:>5} {q:>9} {ratio:>8.2}");
    }
}
