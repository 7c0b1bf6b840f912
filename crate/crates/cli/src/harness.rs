//! Drivers that run a benchmark in each mode and report what happened: wall
//! time, turn and message counts, trace volume and rate, and the result
//! digest. Also home of replay verification and overhead measurement.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use actreplay_core::external::{Environment, TripwireEnv};
use actreplay_core::{
    load_trace, ActorId, ActorSystem, DataId, ExpectedEvent, LoadedTrace, RecorderConfig,
    RecorderError, ReplayError, RunError, RuntimeConfig, Value,
};

use crate::bench::Launcher;
use crate::config::BenchConfig;
use crate::sink::Sink;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Untraced,
    Traced,
    Replay,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Untraced => "untraced",
            Mode::Traced => "traced",
            Mode::Replay => "replay",
        })
    }
}

/// What one run did. `trace_bytes`/`data_bytes` are bytes written in traced
/// mode and bytes read in replay mode; zero when untraced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub mode: Mode,
    pub wall: Duration,
    pub turns: u64,
    pub messages: u64,
    pub actors: u32,
    /// Replay only: deliveries still parked when the expected queues ran dry.
    pub trailing: u64,
    pub trace_bytes: u64,
    pub data_bytes: u64,
    pub digest: String,
    pub results: BTreeMap<String, String>,
}

impl RunReport {
    /// Trace bytes per second of wall time.
    pub fn trace_rate(&self) -> f64 {
        let secs = self.wall.as_secs_f64();
        if secs == 0.0 {
            0.0
        } else {
            self.trace_bytes as f64 / secs
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn replay_error(&self) -> Option<&ReplayError> {
        match self {
            HarnessError::Run(RunError::Replay(e)) => Some(e),
            _ => None,
        }
    }
}

fn finish(
    sys: ActorSystem,
    begin: Instant,
    mode: Mode,
    sink: &Sink,
) -> Result<RunReport, HarnessError> {
    let outcome = sys.run_until_quiet();
    let wall = begin.elapsed();
    let shut = sys.shutdown();
    let summary = outcome?;
    let writer = shut?.writer;
    Ok(RunReport {
        mode,
        wall,
        turns: summary.turns,
        messages: summary.messages,
        actors: summary.actors,
        trailing: summary.trailing,
        trace_bytes: writer.map_or(0, |w| w.trace_bytes),
        data_bytes: writer.map_or(0, |w| w.data_bytes),
        digest: sink.digest(),
        results: sink.snapshot(),
    })
}

pub fn run_untraced(
    config: &BenchConfig,
    threads: usize,
    env: Arc<dyn Environment>,
) -> Result<RunReport, HarnessError> {
    let sink = Sink::new();
    let sys = ActorSystem::new(RuntimeConfig::new(threads));
    let begin = Instant::now();
    sys.start(
        Box::new(Launcher::live(config.clone(), sink.clone(), env)),
        "run",
        Value::unit(),
    );
    finish(sys, begin, Mode::Untraced, &sink)
}

pub fn run_recorded(
    config: &BenchConfig,
    threads: usize,
    buffer_size: Option<usize>,
    trace_out: &Path,
    data_out: &Path,
    env: Arc<dyn Environment>,
) -> Result<RunReport, HarnessError> {
    let mut recorder = RecorderConfig::new(trace_out, data_out);
    if let Some(bytes) = buffer_size {
        recorder = recorder.buffer_capacity(bytes);
    }
    let sink = Sink::new();
    let sys = ActorSystem::recording(RuntimeConfig::new(threads), recorder)?;
    let begin = Instant::now();
    sys.start(
        Box::new(Launcher::live(config.clone(), sink.clone(), env)),
        "run",
        Value::unit(),
    );
    finish(sys, begin, Mode::Traced, &sink)
}

/// Re-execute a recording. The environment defaults to a tripwire in
/// `main`, so any live clock/RNG/filesystem query during replay aborts
/// instead of silently diverging.
pub fn run_replay(
    trace_path: &Path,
    data_path: &Path,
    threads: usize,
    env: Arc<dyn Environment>,
) -> Result<RunReport, HarnessError> {
    let trace_raw = fs::read(trace_path)?;
    let data_raw = fs::read(data_path)?;
    let loaded =
        load_trace(&trace_raw, &data_raw).map_err(|e| RunError::from(ReplayError::from(e)))?;
    let sink = Sink::new();
    let sys = ActorSystem::replaying(RuntimeConfig::new(threads), loaded);
    let begin = Instant::now();
    sys.start(
        Box::new(Launcher::for_replay(sink.clone(), env)),
        "run",
        Value::unit(),
    );
    let mut report = finish(sys, begin, Mode::Replay, &sink)?;
    report.trace_bytes = trace_raw.len() as u64;
    report.data_bytes = data_raw.len() as u64;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Determinism verification

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("replay {replay} failed: {source}")]
    Replay {
        replay: usize,
        #[source]
        source: HarnessError,
    },
    #[error("input files unreadable: {0}")]
    Io(#[from] std::io::Error),
    #[error("input trace rejected: {0}")]
    Load(#[from] actreplay_core::CorruptionError),
    #[error("data entry ({origin}, {data}) referenced {count} times by the trace; must be exactly once")]
    DataReferences {
        origin: ActorId,
        data: DataId,
        count: usize,
    },
    #[error("replay {replay} produced digest {got}, earlier replays produced {want}")]
    DigestMismatch {
        replay: usize,
        got: String,
        want: String,
    },
    #[error("replay {replay}: {actor} re-recorded event {index} as \"{got}\" where the trace has \"{want}\"")]
    SequenceMismatch {
        replay: usize,
        actor: ActorId,
        index: usize,
        got: String,
        want: String,
    },
    #[error("replay {replay}: {actor} re-recorded {got} events, the trace has {want}")]
    SequenceLength {
        replay: usize,
        actor: ActorId,
        got: usize,
        want: usize,
    },
    #[error("replay {replay}: spawn family tree differs from the trace")]
    TreeMismatch { replay: usize },
    #[error("replay {replay}: re-recorded external data differs from the input data file")]
    DataMismatch { replay: usize },
}

#[derive(Debug)]
pub struct VerifyOutcome {
    pub replays: usize,
    pub digest: String,
    pub results: BTreeMap<String, String>,
    pub wall: Duration,
}

/// Every recorded external payload must be consumed by exactly one expected
/// event; double references mean a corrupt trace that could otherwise replay
/// "deterministically" with the wrong data.
fn check_data_references(input: &LoadedTrace) -> Result<(), VerifyError> {
    let mut counts: BTreeMap<(ActorId, DataId), usize> = BTreeMap::new();
    // Both system-call results and external payloads are stored under the
    // consuming actor's id (the external marker's sender/resolver only names
    // the data source to consult).
    for (actor, queue) in &input.queues {
        for event in queue {
            match event {
                ExpectedEvent::Syscall { data_id } => {
                    *counts.entry((*actor, *data_id)).or_default() += 1;
                }
                ExpectedEvent::Message {
                    external: Some(m), ..
                }
                | ExpectedEvent::PromiseMsg {
                    external: Some(m), ..
                } => {
                    *counts.entry((*actor, m.data_id)).or_default() += 1;
                }
                _ => {}
            }
        }
    }
    for (&(origin, data), &count) in &counts {
        if count != 1 {
            return Err(VerifyError::DataReferences {
                origin,
                data,
                count,
            });
        }
    }
    if let Some(&(origin, data)) = input.data.keys().find(|k| !counts.contains_key(k)) {
        return Err(VerifyError::DataReferences {
            origin,
            data,
            count: 0,
        });
    }
    // References to entries absent from the data file were already rejected
    // at load time, so counts ⊆ data holds here and the two checks together
    // give the exact bijection.
    Ok(())
}

fn compare_rerecording(
    input: &LoadedTrace,
    re: &LoadedTrace,
    replay: usize,
) -> Result<(), VerifyError> {
    if re.children != input.children || re.actor_count != input.actor_count {
        return Err(VerifyError::TreeMismatch { replay });
    }
    for (actor, want) in &input.queues {
        let got = re.queues.get(actor);
        let got_len = got.map_or(0, |q| q.len());
        if got_len != want.len() {
            return Err(VerifyError::SequenceLength {
                replay,
                actor: *actor,
                got: got_len,
                want: want.len(),
            });
        }
        for (index, (g, w)) in got.into_iter().flatten().zip(want.iter()).enumerate() {
            if g != w {
                return Err(VerifyError::SequenceMismatch {
                    replay,
                    actor: *actor,
                    index,
                    got: g.describe(),
                    want: w.describe(),
                });
            }
        }
    }
    if re.queues.len() != input.queues.len() {
        return Err(VerifyError::TreeMismatch { replay });
    }
    if re.data != input.data {
        return Err(VerifyError::DataMismatch { replay });
    }
    Ok(())
}

/// Replay the recording `repetitions` times — cycling worker-pool sizes, with
/// the tripwire environment installed and re-recording enabled — and check
/// that every replay yields the same result digest, re-records the same
/// per-actor event sequences and family tree as the input, and reproduces
/// the data file. The input must also reference each data entry exactly once.
pub fn verify_determinism(
    trace_path: &Path,
    data_path: &Path,
    repetitions: usize,
) -> Result<VerifyOutcome, VerifyError> {
    const POOL_SIZES: [usize; 4] = [1, 2, 4, 8];

    let trace_raw = fs::read(trace_path)?;
    let data_raw = fs::read(data_path)?;
    let input = load_trace(&trace_raw, &data_raw)?;
    check_data_references(&input)?;

    let begin = Instant::now();
    let scratch = tempfile::tempdir()?;
    let mut first: Option<(String, BTreeMap<String, String>)> = None;
    for i in 0..repetitions {
        let replay = i + 1;
        let threads = POOL_SIZES[i % POOL_SIZES.len()];
        let loaded = load_trace(&trace_raw, &data_raw)?;
        let re_trace = scratch.path().join(format!("re-{replay}.trace"));
        let re_data = scratch.path().join(format!("re-{replay}.data"));
        let sink = Sink::new();
        let sys = ActorSystem::replaying_rerecord(
            RuntimeConfig::new(threads),
            loaded,
            RecorderConfig::new(&re_trace, &re_data),
        )
        .map_err(|e| VerifyError::Replay {
            replay,
            source: e.into(),
        })?;
        sys.start(
            Box::new(Launcher::for_replay(sink.clone(), Arc::new(TripwireEnv))),
            "run",
            Value::unit(),
        );
        let outcome = sys.run_until_quiet();
        let shut = sys.shutdown();
        outcome.map_err(|e| VerifyError::Replay {
            replay,
            source: e.into(),
        })?;
        shut.map_err(|e| VerifyError::Replay {
            replay,
            source: e.into(),
        })?;

        let digest = sink.digest();
        match &first {
            None => first = Some((digest, sink.snapshot())),
            Some((want, _)) if *want != digest => {
                return Err(VerifyError::DigestMismatch {
                    replay,
                    got: digest,
                    want: want.clone(),
                })
            }
            Some(_) => {}
        }

        let re = load_trace(&fs::read(&re_trace)?, &fs::read(&re_data)?)?;
        compare_rerecording(&input, &re, replay)?;
    }

    let (digest, results) = first.unwrap_or_default();
    Ok(VerifyOutcome {
        replays: repetitions,
        digest,
        results,
        wall: begin.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// Overhead measurement

#[derive(Clone, Copy, Debug)]
pub struct OverheadSample {
    pub mode: Mode,
    pub iteration: usize,
    pub wall: Duration,
    pub trace_bytes: u64,
    pub data_bytes: u64,
}

#[derive(Debug)]
pub struct OverheadReport {
    pub benchmark: &'static str,
    pub iterations: usize,
    pub warmup: usize,
    pub untraced_median: Duration,
    pub traced_median: Duration,
    /// `traced ÷ untraced − 1` over post-warmup medians.
    pub overhead: f64,
    /// Bytes of trace per second of traced wall time, from medians.
    pub trace_rate: f64,
    /// Every iteration of both arms, warmup included, in execution order.
    pub samples: Vec<OverheadSample>,
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort_unstable();
    let n = xs.len();
    if n == 0 {
        Duration::ZERO
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2
    }
}

/// Run `warmup + iterations` rounds of the benchmark untraced and traced on
/// a single worker thread and compare post-warmup medians. Multi-thread
/// timings attribute tracing cost to whichever worker stalls, so the honest
/// comparison is serial; the two arms alternate iteration by iteration so
/// clock-speed drift and cache state cannot favor whichever arm ran last.
pub fn measure_overhead(
    config: &BenchConfig,
    iterations: usize,
    warmup: usize,
    env: Arc<dyn Environment>,
) -> Result<OverheadReport, HarnessError> {
    let scratch = tempfile::tempdir()?;
    let trace_out = scratch.path().join("bench.trace");
    let data_out = scratch.path().join("bench.data");
    let total = warmup + iterations;
    let mut samples = Vec::with_capacity(total * 2);

    let mut untraced = Vec::with_capacity(iterations);
    let mut traced = Vec::with_capacity(iterations);
    let mut traced_bytes = Vec::with_capacity(iterations);
    for i in 0..total {
        let report = run_untraced(config, 1, Arc::clone(&env))?;
        samples.push(OverheadSample {
            mode: Mode::Untraced,
            iteration: i + 1,
            wall: report.wall,
            trace_bytes: 0,
            data_bytes: 0,
        });
        if i >= warmup {
            untraced.push(report.wall);
        }

        let report = run_recorded(config, 1, None, &trace_out, &data_out, Arc::clone(&env))?;
        samples.push(OverheadSample {
            mode: Mode::Traced,
            iteration: i + 1,
            wall: report.wall,
            trace_bytes: report.trace_bytes,
            data_bytes: report.data_bytes,
        });
        if i >= warmup {
            traced.push(report.wall);
            traced_bytes.push(report.trace_bytes);
        }
    }

    let untraced_median = median(untraced);
    let traced_median = median(traced);
    traced_bytes.sort_unstable();
    let median_bytes = traced_bytes.get(traced_bytes.len() / 2).copied().unwrap_or(0);
    let overhead = if untraced_median.is_zero() {
        0.0
    } else {
        traced_median.as_secs_f64() / untraced_median.as_secs_f64() - 1.0
    };
    let trace_rate = if traced_median.is_zero() {
        0.0
    } else {
        median_bytes as f64 / traced_median.as_secs_f64()
    };
    Ok(OverheadReport {
        benchmark: config.name(),
        iterations,
        warmup,
        untraced_median,
        traced_median,
        overhead,
        trace_rate,
        samples,
    })
}
