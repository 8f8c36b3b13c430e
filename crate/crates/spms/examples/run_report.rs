//! One benchmark run as a JSON report, plus the optional trace dump.
//! Set SPMS_TRACE_DIR to a directory to get the trace files.

use spms::bench::{self, BenchConfig, Generator, Source, TRACE_DIR_VAR};
use spms::report::RunReport;

fn main() {
    let keys = bench::generate(Generator::FewDistinct, 4096, 2);
    let cfg = BenchConfig { procs: 2, ..BenchConfig::default() };
    let trace_dir = std::env::var_os(TRACE_DIR_VAR).map(std::path::PathBuf::from);
    let out =
        bench::run_once(&cfg, &keys, &Source { name: "few-distinct".into(), seed: 2 }, true, trace_dir.as_deref())
            .expect("trace dir writable");
    let json = out.report.to_json().unwrap();
    println!("{json}");
    assert_eq!(RunReport::from_json(&json).unwrap(), out.report);
    if let Some(dir) = trace_dir {
        eprintln!("traces written to {}", dir.display());
    }
}
