//! A hand-built fork-join dag: work, span and the kernels a set of steals
//! would cut it into.

use spms::dag::{partition_kernels, Dag};

fn main() {
    let mut d = Dag::new();
    d.fork_join(
        |d| {
            d.fork_join(
                |d| {
                    d.leaf(5);
                },
                |d| {
                    d.leaf(3);
                },
            );
        },
        |d| {
            d.leaf(10);
        },
    );
    println!("{} nodes, work {}, span {}", d.len(), d.work(), d.span());
    let forks: Vec<u32> = (0..d.len() as u32).filter(|&n| d.kind(n) == spms::dag::NodeKind::Fork).collect();
    for stolen in [vec![], vec![forks[0]], forks.clone()] {
        let kernels = partition_kernels(&d, &stolen);
        let spans: Vec<(u32, u32)> = kernels.iter().map(|k| (k.start, k.end)).collect();
        println!("{} steals -> {} kernels {spans:?}", stolen.len(), kernels.len());
    }
}
