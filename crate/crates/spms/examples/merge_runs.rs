//! Merges sorted runs directly, without sorting them first.

use spms::exec::{Exec, ExecOptions};
use spms::spms::{spms_merge, MergeInstance, SpmsParams};

fn main() {
    let runs: Vec<Vec<u64>> = (0..16u64).map(|r| (0..2000u64).map(|i| i * 16 + (r * 7) % 16).collect()).collect();
    let inst = MergeInstance::from_runs(&runs, runs.len());
    let mut m = Exec::new(ExecOptions::default());
    let merged = spms_merge(&mut m, &inst, SpmsParams::default()).expect("valid instance");
    assert!(merged.keys.windows(2).all(|w| w[0] <= w[1]));
    println!("merged {} runs into {} keys", runs.len(), merged.keys.len());
    println!("work {} span {}", m.work(), m.span());

    // A run count too small for the input size is rejected up front.
    let bad = MergeInstance::from_runs(&runs[..1], 1);
    println!("one run of 2000: {:?}", bad.validate(&SpmsParams::default()));
}
