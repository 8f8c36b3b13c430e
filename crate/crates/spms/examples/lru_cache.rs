//! The LRU block cache on its own, then replaying a recorded trace.

use spms::cache::{replay_sequential, Lru};
use spms::exec::{Exec, ExecOptions};
use spms::memory::CacheConfig;
use spms::spms::{sort, SpmsParams};

fn main() {
    let mut lru = Lru::new(2);
    let hits: Vec<bool> = [1u64, 2, 1, 3, 2, 1].into_iter().map(|b| lru.access(b)).collect();
    println!("two lines, blocks 1 2 1 3 2 1: hits {hits:?}, resident {:?}", lru.resident());

    let keys: Vec<u64> = (0..5000u64).map(|i| i.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 40).collect();
    let mut m = Exec::new(ExecOptions { record: true, ..Default::default() });
    sort(&mut m, &keys, SpmsParams::default());
    let rec = m.into_recording().expect("recorded");
    for capacity in [1u64 << 12, 1 << 14, 1 << 16] {
        let config = CacheConfig::new(capacity, 64).unwrap();
        println!("M = {capacity:>6}: {} misses over {} accesses", replay_sequential(&rec, &config), rec.event_count());
    }
}
