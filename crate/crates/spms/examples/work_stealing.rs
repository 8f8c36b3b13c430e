//! Records one sort, then replays its dag under randomized work stealing
//! for several processor counts.

use spms::bench::{self, Generator};
use spms::exec::{Exec, ExecOptions};
use spms::sched::{self, CostModel, SchedOptions};
use spms::spms::{sort, SpmsParams};

fn main() {
    let keys = bench::generate(Generator::Uniform, 20_000, 11);
    let mut m = Exec::new(ExecOptions { record: true, ..Default::default() });
    sort(&mut m, &keys, SpmsParams::default());
    let rec = m.into_recording().expect("recorded");
    println!("work {} span {}", rec.dag.work(), rec.dag.span());
    println!("{:>2} {:>7} {:>6} {:>8} {:>10} {:>9}", "p", "steals", "usurp", "kernels", "makespan", "q_par");
    for procs in [1, 2, 4, 8] {
        let s = sched::run(&rec, SchedOptions { procs, seed: 0, cost: CostModel::default() }, None);
        println!(
            "{procs:>2} {:>7} {:>6} {:>8} {:>10} {:>9}",
            s.steals.len(),
            s.usurpations,
            s.kernels.len(),
            s.makespan,
            s.q_par()
        );
    }
}
