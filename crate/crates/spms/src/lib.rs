//! Instrumented SPMS (sample, partition and merge) sort running as an explicit
//! fork-join computation over simulated block memory.

pub mod bench;
pub mod cache;
pub mod dag;
pub mod exec;
pub mod fs;
mod hashing;
pub mod memory;
pub mod procedures;
pub mod report;
pub mod sched;
pub mod spms;
