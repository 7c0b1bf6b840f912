use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use actreplay_cli::config::BenchConfig;
use actreplay_cli::harness::{
    measure_overhead, run_recorded, run_replay, verify_determinism, HarnessError, Mode,
    OverheadReport, OverheadSample, RunReport, VerifyError,
};
use actreplay_cli::inspect;
use actreplay_core::external::{RealEnv, TripwireEnv};
use actreplay_core::ReplayError;

#[derive(Parser)]
#[command(
    name = "actreplay",
    version,
    about = "Record, replay, verify and inspect actor executions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark with tracing enabled and write trace + data files.
    Record {
        /// ping-pong | counting | thread-ring | fork-join | philosophers |
        /// promise-race | workload
        bench: String,
        /// Worker threads.
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value = "run.trace")]
        trace_out: PathBuf,
        #[arg(long, default_value = "run.data")]
        data_out: PathBuf,
        /// Tracer buffer capacity in bytes.
        #[arg(long)]
        buffer_size: Option<usize>,
        /// Event script for the workload benchmark (lines of
        /// `delay_ms event_type payload`).
        #[arg(long)]
        workload: Option<PathBuf>,
    },
    /// Re-execute a recording. With --verify, replay it repeatedly (cycling
    /// worker-pool sizes) and check digests, per-actor event sequences and
    /// external-data fidelity.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Worker threads (ignored by --verify, which cycles 1/2/4/8).
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long)]
        verify: bool,
    },
    /// Measure traced-vs-untraced overhead on one benchmark, single-threaded.
    Bench {
        bench: String,
        /// Measured iterations per arm.
        #[arg(long)]
        iterations: usize,
        /// Discarded warmup iterations per arm.
        #[arg(long)]
        warmup: usize,
        /// Write per-iteration samples as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print an entry census and ordering check for a trace file.
    Inspect {
        #[arg(long)]
        trace: PathBuf,
    },
}

/// Exit codes: 0 success, 2 divergence, 3 corruption or format error,
/// 4 stall, 1 anything else.
type Failure = (u8, String);

fn replay_exit(e: &ReplayError) -> u8 {
    match e {
        ReplayError::Divergence(_) => 2,
        ReplayError::Corruption(_) => 3,
        ReplayError::Stall(_) => 4,
    }
}

fn harness_exit(e: &HarnessError) -> u8 {
    e.replay_error().map_or(1, replay_exit)
}

fn verify_exit(e: &VerifyError) -> u8 {
    match e {
        VerifyError::Replay { source, .. } => harness_exit(source),
        VerifyError::Load(_) | VerifyError::DataReferences { .. } => 3,
        VerifyError::DigestMismatch { .. }
        | VerifyError::SequenceMismatch { .. }
        | VerifyError::SequenceLength { .. }
        | VerifyError::TreeMismatch { .. }
        | VerifyError::DataMismatch { .. } => 2,
        VerifyError::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Record {
            bench,
            threads,
            trace_out,
            data_out,
            buffer_size,
            workload,
        } => {
            let mut config = named_benchmark(&bench)?;
            if let Some(path) = workload {
                let text =
                    fs::read_to_string(&path).map_err(|e| (1, format!("{}: {e}", path.display())))?;
                match &mut config {
                    BenchConfig::Workload { script } => *script = text,
                    _ => {
                        return Err((
                            1,
                            "--workload only applies to the workload benchmark".into(),
                        ))
                    }
                }
            }
            let report = run_recorded(
                &config,
                threads,
                buffer_size,
                &trace_out,
                &data_out,
                Arc::new(RealEnv::new()),
            )
            .map_err(|e| (harness_exit(&e), e.to_string()))?;
            println!(
                "recorded {} -> {}, {}",
                config.name(),
                trace_out.display(),
                data_out.display()
            );
            print_report(&report);
            Ok(())
        }
        Command::Replay {
            trace,
            data,
            threads,
            verify,
        } => {
            if verify {
                let outcome = verify_determinism(&trace, &data, 10)
                    .map_err(|e| (verify_exit(&e), e.to_string()))?;
                println!(
                    "determinism verified: {}/{} replays identical in {:.3} ms",
                    outcome.replays,
                    outcome.replays,
                    outcome.wall.as_secs_f64() * 1e3
                );
                for (k, v) in &outcome.results {
                    println!("  {k} = {v}");
                }
                println!("  digest {}", outcome.digest);
            } else {
                let report = run_replay(&trace, &data, threads, Arc::new(TripwireEnv))
                    .map_err(|e| (harness_exit(&e), e.to_string()))?;
                println!("replayed {}", trace.display());
                print_report(&report);
            }
            Ok(())
        }
        Command::Bench {
            bench,
            iterations,
            warmup,
            csv,
        } => {
            let config = named_benchmark(&bench)?;
            let report = measure_overhead(&config, iterations, warmup, Arc::new(RealEnv::new()))
                .map_err(|e| (harness_exit(&e), e.to_string()))?;
            print_overhead(&report);
            if let Some(path) = csv {
                write_csv(&path, report.benchmark, &report.samples)
                    .map_err(|e| (1, format!("{}: {e}", path.display())))?;
                println!("  samples -> {}", path.display());
            }
            Ok(())
        }
        Command::Inspect { trace } => {
            let bytes = fs::read(&trace).map_err(|e| (1, format!("{}: {e}", trace.display())))?;
            let census = inspect::census(&bytes).map_err(|e| (3, e.to_string()))?;
            print_census(&trace, &census);
            match census.order_error {
                None => Ok(()),
                Some(detail) => Err((3, detail)),
            }
        }
    }
}

fn named_benchmark(name: &str) -> Result<BenchConfig, Failure> {
    BenchConfig::from_name(name).ok_or_else(|| {
        let names: Vec<_> = BenchConfig::all().iter().map(|c| c.name()).collect();
        (
            1,
            format!("unknown benchmark {name:?}; expected one of {}", names.join(", ")),
        )
    })
}

fn print_report(report: &RunReport) {
    println!(
        "{}: wall {:.3} ms, {} turns, {} messages, {} actors",
        report.mode,
        report.wall.as_secs_f64() * 1e3,
        report.turns,
        report.messages,
        report.actors
    );
    if report.mode != Mode::Untraced {
        println!(
            "  trace {} bytes ({:.2} MB/s), data {} bytes",
            report.trace_bytes,
            report.trace_rate() / 1e6,
            report.data_bytes
        );
    }
    if report.trailing > 0 {
        println!("  trailing deliveries: {}", report.trailing);
    }
    for (key, value) in &report.results {
        println!("  {key} = {value}");
    }
    println!("  digest {}", report.digest);
}

fn print_overhead(report: &OverheadReport) {
    println!(
        "benchmark {}: {} iterations after {} warmup, single worker thread",
        report.benchmark, report.iterations, report.warmup
    );
    println!(
        "  untraced median {:.3} ms",
        report.untraced_median.as_secs_f64() * 1e3
    );
    println!(
        "  traced   median {:.3} ms ({:.2} MB/s trace)",
        report.traced_median.as_secs_f64() * 1e3,
        report.trace_rate / 1e6
    );
    println!(
        "  overhead {:+.1}% (interactive budget 25%, server-class goal 0-3%)",
        report.overhead * 100.0
    );
}

fn write_csv(path: &Path, benchmark: &str, samples: &[OverheadSample]) -> std::io::Result<()> {
    let mut out = String::from("benchmark,mode,iteration,wall_ms,trace_bytes,data_bytes\n");
    for s in samples {
        writeln!(
            out,
            "{},{},{},{:.3},{},{}",
            benchmark,
            s.mode,
            s.iteration,
            s.wall.as_secs_f64() * 1e3,
            s.trace_bytes,
            s.data_bytes
        )
        .expect("string writes never fail");
    }
    fs::write(path, out)
}

fn print_census(path: &Path, census: &inspect::TraceCensus) {
    println!(
        "{}: {} bytes, {} entries",
        path.display(),
        census.file_bytes,
        census.entries
    );
    for (name, t) in &census.by_type {
        println!("  {name:<16} {:>10} entries {:>12} bytes", t.count, t.bytes);
    }
    println!("  external messages: {}", census.external_messages);
    let subtraces: u64 = census.per_actor.values().map(|a| a.subtraces).sum();
    println!(
        "  actors: {}, subtraces: {}",
        census.per_actor.len(),
        subtraces
    );
    let mut busiest: Vec<_> = census.per_actor.iter().collect();
    busiest.sort_by_key(|(_, a)| std::cmp::Reverse(a.messages));
    for (actor, a) in busiest.into_iter().take(5) {
        println!(
            "  {actor}: {} messages in {} bytes across {} subtraces",
            a.messages, a.message_bytes, a.subtraces
        );
    }
    match &census.order_error {
        None => println!("  subtrace ordering: consistent"),
        Some(e) => println!("  subtrace ordering: BROKEN ({e})"),
    }
}
