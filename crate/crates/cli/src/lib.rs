//! Benchmark suite and tooling built on the actreplay runtime: a set of
//! message-passing workloads, record/replay/verify drivers with wall-clock
//! and trace-volume reporting, and a trace inspector.

pub mod bench;
pub mod config;
pub mod harness;
pub mod inspect;
pub mod sink;

pub use config::BenchConfig;
pub use harness::{
    run_recorded, run_replay, run_untraced, verify_determinism, HarnessError, Mode, RunReport,
};
pub use sink::Sink;
