//! End-to-end record → load → replay coverage: order reproduction across
//! thread counts, re-recording equivalence, system-call substitution,
//! scripted workloads, and the failure modes (divergence, stall, trailing
//! deliveries, damaged files).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use actreplay_core::external::{
    parse_script, DeliveryKind, EventKind, OpaqueRequest, ScriptedSource, PATH_EXISTS, RANDOM_U64,
    STRING_VALUE, WALL_CLOCK_MILLIS,
};
use actreplay_core::{
    load_trace, ActorId, ActorSystem, Behavior, LoadedTrace, RecorderConfig, ReplayError,
    RunError, RuntimeConfig, Turn, TurnError, Value,
};

/// Each actor writes only its own keys, so map equality is meaningful even
/// though actors run in parallel.
type Sink = Arc<Mutex<BTreeMap<String, String>>>;

fn put(sink: &Sink, key: impl Into<String>, value: impl Into<String>) {
    sink.lock().unwrap().insert(key.into(), value.into());
}

fn paths(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    (dir.join("run.trace"), dir.join("run.data"))
}

fn load(dir: &Path) -> LoadedTrace {
    let (trace, data) = paths(dir);
    load_trace(&fs::read(trace).unwrap(), &fs::read(data).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// A racy fan-in program: N senders all hammer one counter, so the counter's
// arrival order is scheduler-dependent — exactly what the trace must pin down.

struct Counter {
    sink: Sink,
    tags: String,
}

impl Behavior for Counter {
    fn handle(
        &mut self,
        _ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        assert_eq!(selector, "hit");
        self.tags.push_str(payload.as_str().unwrap());
        put(&self.sink, "order", self.tags.clone());
        Ok(Value::unit())
    }
}

struct Racer {
    tag: &'static str,
    hits: usize,
}

impl Behavior for Racer {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        assert_eq!(selector, "go");
        let counter = payload.as_actor().copied().unwrap();
        for _ in 0..self.hits {
            ctx.send(&counter, "hit", Value::str(self.tag));
        }
        Ok(Value::unit())
    }
}

struct RaceMain {
    sink: Sink,
    hits: usize,
}

const TAGS: [&str; 3] = ["a", "b", "c"];

impl Behavior for RaceMain {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        assert_eq!(selector, "start");
        let counter = ctx.spawn(Box::new(Counter {
            sink: Arc::clone(&self.sink),
            tags: String::new(),
        }))?;
        for tag in TAGS {
            let racer = ctx.spawn(Box::new(Racer {
                tag,
                hits: self.hits,
            }))?;
            ctx.send(&racer, "go", counter.into());
        }
        Ok(Value::unit())
    }
}

fn race_program(sink: &Sink, hits: usize) -> Box<dyn Behavior> {
    Box::new(RaceMain {
        sink: Arc::clone(sink),
        hits,
    })
}

fn record_race(dir: &Path, threads: usize, hits: usize) -> Sink {
    let (trace, data) = paths(dir);
    let sink: Sink = Arc::default();
    let sys = ActorSystem::recording(
        RuntimeConfig::new(threads),
        RecorderConfig::new(trace, data),
    )
    .unwrap();
    sys.start(race_program(&sink, hits), "start", Value::unit());
    sys.run_until_quiet().unwrap();
    let report = sys.shutdown().unwrap();
    assert!(report.writer.unwrap().trace_bytes > 0);
    sink
}

#[test]
fn recorded_race_order_is_reproduced_on_replay() {
    let dir = tempfile::tempdir().unwrap();
    let recorded = record_race(dir.path(), 4, 20);
    let order = recorded.lock().unwrap().get("order").cloned().unwrap();
    assert_eq!(order.len(), 3 * 20);

    // The replayed interleaving must match whatever the recording captured,
    // regardless of how many workers replay uses.
    for threads in [1, 2, 8] {
        let sink: Sink = Arc::default();
        let sys = ActorSystem::replaying(RuntimeConfig::new(threads), load(dir.path()));
        sys.start(race_program(&sink, 20), "start", Value::unit());
        let summary = sys.run_until_quiet().unwrap();
        sys.shutdown().unwrap();
        assert_eq!(summary.trailing, 0);
        assert_eq!(
            *sink.lock().unwrap(),
            *recorded.lock().unwrap(),
            "replay with {threads} threads diverged"
        );
    }
}

#[test]
fn the_loaded_trace_reflects_the_recorded_topology() {
    let dir = tempfile::tempdir().unwrap();
    record_race(dir.path(), 2, 5);
    let loaded = load(dir.path());

    assert_eq!(loaded.actor_count, 5); // main, counter, three racers
    assert_eq!(
        loaded.children.get(&ActorId(0)).unwrap(),
        &vec![ActorId(1), ActorId(2), ActorId(3), ActorId(4)]
    );
    // Counter consumed 3 racers x 5 hits; each racer one "go"; main one "start".
    assert_eq!(loaded.queues.get(&ActorId(1)).unwrap().len(), 15);
    assert_eq!(loaded.queues.get(&ActorId(2)).unwrap().len(), 1);
    // Main's queue: the kick-off message plus four spawns.
    assert_eq!(loaded.queues.get(&ActorId(0)).unwrap().len(), 5);
    assert!(loaded.data.is_empty(), "no external data in this program");
}

#[test]
fn replaying_while_rerecording_reproduces_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let recorded = record_race(dir.path(), 4, 12);

    let redir = tempfile::tempdir().unwrap();
    let (rt, rd) = paths(redir.path());
    let sink: Sink = Arc::default();
    let sys = ActorSystem::replaying_rerecord(
        RuntimeConfig::new(3),
        load(dir.path()),
        RecorderConfig::new(rt, rd),
    )
    .unwrap();
    sys.start(race_program(&sink, 12), "start", Value::unit());
    sys.run_until_quiet().unwrap();
    sys.shutdown().unwrap();
    assert_eq!(*sink.lock().unwrap(), *recorded.lock().unwrap());

    // The fresh recording must describe the same execution: same family
    // tree, same per-actor expected events, same data payloads. (Byte-level
    // file equality is not guaranteed — writer arrival order differs.)
    let original = load(dir.path());
    let rerecorded = load(redir.path());
    assert_eq!(rerecorded.actor_count, original.actor_count);
    assert_eq!(rerecorded.children, original.children);
    assert_eq!(rerecorded.queues, original.queues);
    assert_eq!(rerecorded.data, original.data);
}

#[test]
fn extra_sends_beyond_the_recording_park_as_trailing() {
    let dir = tempfile::tempdir().unwrap();
    record_race(dir.path(), 2, 4);

    // Same program, but every racer now sends one more hit than was
    // recorded. The surplus arrivals have no expected slot; they park and
    // are reported, not silently delivered.
    let sink: Sink = Arc::default();
    let sys = ActorSystem::replaying(RuntimeConfig::new(2), load(dir.path()));
    sys.start(race_program(&sink, 5), "start", Value::unit());
    let summary = sys.run_until_quiet().unwrap();
    sys.shutdown().unwrap();
    assert_eq!(summary.trailing, 3);
    let order = sink.lock().unwrap().get("order").cloned().unwrap();
    assert_eq!(order.len(), 12, "only recorded deliveries run");
}

#[test]
fn missing_sends_stall_the_replay_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    record_race(dir.path(), 2, 4);

    let sink: Sink = Arc::default();
    let sys = ActorSystem::replaying(RuntimeConfig::new(2), load(dir.path()));
    sys.start(race_program(&sink, 3), "start", Value::unit());
    let err = sys.run_until_quiet().unwrap_err();
    match err {
        RunError::Replay(ReplayError::Stall(report)) => {
            assert_eq!(report.stuck.len(), 1);
            let stuck = &report.stuck[0];
            assert_eq!(stuck.actor, ActorId(1));
            // Replay blocks at the first of the three missing sends; anything
            // recorded after it stays queued, and arrivals that matched none
            // of the consumed prefix sit parked. 12 expected, 9 arrived:
            assert!(stuck.remaining >= 3, "{stuck:?}");
            assert_eq!(stuck.pending.len(), stuck.remaining - 3, "{stuck:?}");
        }
        other => panic!("expected a stall, got {other:?}"),
    }
    sys.shutdown().unwrap();
}

// ---------------------------------------------------------------------------
// Divergent behaviors: the replayed program does something the trace never
// recorded.

struct SpawningCounter {
    sink: Sink,
}

impl Behavior for SpawningCounter {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        _selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        // The recorded counter never spawned anything.
        let _ = ctx.spawn(Box::new(Counter {
            sink: Arc::clone(&self.sink),
            tags: String::new(),
        }))?;
        Ok(Value::unit())
    }
}

struct SwappedMain {
    sink: Sink,
    hits: usize,
    counter: fn(&Sink) -> Box<dyn Behavior>,
}

impl Behavior for SwappedMain {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        assert_eq!(selector, "start");
        let counter = ctx.spawn((self.counter)(&self.sink))?;
        for tag in TAGS {
            let racer = ctx.spawn(Box::new(Racer {
                tag,
                hits: self.hits,
            }))?;
            ctx.send(&racer, "go", counter.into());
        }
        Ok(Value::unit())
    }
}

fn expect_divergence(err: RunError) {
    match err {
        RunError::Replay(ReplayError::Divergence(_)) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn an_unrecorded_spawn_is_divergence() {
    let dir = tempfile::tempdir().unwrap();
    record_race(dir.path(), 2, 2);

    let sink: Sink = Arc::default();
    let sys = ActorSystem::replaying(RuntimeConfig::new(2), load(dir.path()));
    sys.start(
        Box::new(SwappedMain {
            sink: Arc::clone(&sink),
            hits: 2,
            counter: |sink| {
                Box::new(SpawningCounter {
                    sink: Arc::clone(sink),
                })
            },
        }),
        "start",
        Value::unit(),
    );
    expect_divergence(sys.run_until_quiet().unwrap_err());
    sys.shutdown().unwrap();
}

struct SyscallingCounter;

impl Behavior for SyscallingCounter {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        _selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        let _ = ctx.syscall(&PATH_EXISTS, || true)?;
        Ok(Value::unit())
    }
}

#[test]
fn an_unrecorded_system_call_is_divergence() {
    let dir = tempfile::tempdir().unwrap();
    record_race(dir.path(), 2, 2);

    let sink: Sink = Arc::default();
    let sys = ActorSystem::replaying(RuntimeConfig::new(2), load(dir.path()));
    sys.start(
        Box::new(SwappedMain {
            sink,
            hits: 2,
            counter: |_| Box::new(SyscallingCounter),
        }),
        "start",
        Value::unit(),
    );
    expect_divergence(sys.run_until_quiet().unwrap_err());
    sys.shutdown().unwrap();
}

// ---------------------------------------------------------------------------
// System calls: live runs consult the environment once; replay feeds the
// recorded bytes back and must never re-perform.

struct Oracle {
    sink: Sink,
    performed: Arc<AtomicUsize>,
}

impl Behavior for Oracle {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        assert_eq!(selector, "start");
        let performed = Arc::clone(&self.performed);
        let nanos = ctx.syscall(&RANDOM_U64, || {
            performed.fetch_add(1, Ordering::Relaxed);
            u64::from(
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .unwrap()
                    .subsec_nanos(),
            )
        })?;
        let performed = Arc::clone(&self.performed);
        let millis = ctx.syscall(&WALL_CLOCK_MILLIS, || {
            performed.fetch_add(1, Ordering::Relaxed);
            123_456_789
        })?;
        let performed = Arc::clone(&self.performed);
        let root = ctx.syscall(&PATH_EXISTS, || {
            performed.fetch_add(1, Ordering::Relaxed);
            std::path::Path::new("/").exists()
        })?;
        put(&self.sink, "oracle", format!("{nanos} {millis} {root}"));
        Ok(Value::unit())
    }
}

#[test]
fn system_calls_replay_from_recorded_bytes_without_touching_the_world() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, data) = paths(dir.path());

    let recorded: Sink = Arc::default();
    let live_performs = Arc::new(AtomicUsize::new(0));
    let sys = ActorSystem::recording(
        RuntimeConfig::new(2),
        RecorderConfig::new(trace, data),
    )
    .unwrap();
    sys.start(
        Box::new(Oracle {
            sink: Arc::clone(&recorded),
            performed: Arc::clone(&live_performs),
        }),
        "start",
        Value::unit(),
    );
    sys.run_until_quiet().unwrap();
    sys.shutdown().unwrap();
    assert_eq!(live_performs.load(Ordering::Relaxed), 3);

    let loaded = load(dir.path());
    assert_eq!(loaded.data.len(), 3);
    // Data ids for one actor's system calls count up from zero.
    for id in 0..3 {
        assert!(loaded.data.contains_key(&(ActorId(0), actreplay_core::DataId(id))));
    }

    let sink: Sink = Arc::default();
    let replay_performs = Arc::new(AtomicUsize::new(0));
    let sys = ActorSystem::replaying(RuntimeConfig::new(2), loaded);
    sys.start(
        Box::new(Oracle {
            sink: Arc::clone(&sink),
            performed: Arc::clone(&replay_performs),
        }),
        "start",
        Value::unit(),
    );
    sys.run_until_quiet().unwrap();
    sys.shutdown().unwrap();

    assert_eq!(
        replay_performs.load(Ordering::Relaxed),
        0,
        "replay must not consult the environment"
    );
    assert_eq!(*sink.lock().unwrap(), *recorded.lock().unwrap());
}

// ---------------------------------------------------------------------------
// Scripted workload: external messages, an external promise resolution, and
// an opaque request mined through a system call. Replay needs the kind table
// but not the script.

fn workload_kinds() -> HashMap<u8, EventKind> {
    HashMap::from([
        (1, EventKind::new("job", DeliveryKind::Message)),
        (2, EventKind::new("deadline", DeliveryKind::Resolve)),
        (3, EventKind::new("rpc", DeliveryKind::Request)),
    ])
}

struct Listener {
    sink: Sink,
    jobs: Vec<String>,
    script: Option<&'static str>,
}

impl Behavior for Listener {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "start" => {
                let source = ScriptedSource::new(workload_kinds());
                let gateway = ctx.register_data_source(Arc::clone(&source) as _)?;
                source.bind_target(1, ctx.self_handle());
                source.bind_target(3, ctx.self_handle());
                let slot = ctx.create_promise();
                source.bind_slot(2, slot.clone());
                ctx.when_resolved(&slot, "deadline");
                if let Some(text) = self.script {
                    let events = parse_script(text).map_err(TurnError::handler)?;
                    ctx.start_workload(&gateway, source.driver(events));
                }
                Ok(Value::unit())
            }
            "job" => {
                self.jobs.push(payload.as_str().unwrap().to_string());
                put(&self.sink, "jobs", self.jobs.join(","));
                Ok(Value::unit())
            }
            "rpc" => {
                let request = ctx.current_opaque::<OpaqueRequest>();
                let detail = ctx.syscall(&STRING_VALUE, || {
                    request.expect("live rpc carries its request").body.to_uppercase()
                })?;
                put(&self.sink, "rpc", detail);
                Ok(Value::unit())
            }
            "deadline" => {
                put(&self.sink, "deadline", payload.as_str().unwrap());
                Ok(Value::unit())
            }
            other => Err(TurnError::handler(format!("unexpected selector {other}"))),
        }
    }
}

const WORKLOAD_SCRIPT: &str = "\
# timed external events: delay_ms event_type payload
0 1 alpha
1 3 beta body
1 1 gamma
2 2 closing
";

#[test]
fn a_scripted_workload_replays_without_the_script() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, data) = paths(dir.path());

    let recorded: Sink = Arc::default();
    let sys = ActorSystem::recording(
        RuntimeConfig::new(2),
        RecorderConfig::new(trace, data),
    )
    .unwrap();
    sys.start(
        Box::new(Listener {
            sink: Arc::clone(&recorded),
            jobs: Vec::new(),
            script: Some(WORKLOAD_SCRIPT),
        }),
        "start",
        Value::unit(),
    );
    sys.run_until_quiet().unwrap();
    sys.shutdown().unwrap();
    {
        let got = recorded.lock().unwrap();
        assert_eq!(got.get("jobs").unwrap(), "alpha,gamma");
        assert_eq!(got.get("rpc").unwrap(), "BETA BODY");
        assert_eq!(got.get("deadline").unwrap(), "closing");
    }

    // Replay builds the same program but has no script to hand out: every
    // external event is synthesized from the recording.
    for threads in [1, 4] {
        let sink: Sink = Arc::default();
        let sys = ActorSystem::replaying(RuntimeConfig::new(threads), load(dir.path()));
        sys.start(
            Box::new(Listener {
                sink: Arc::clone(&sink),
                jobs: Vec::new(),
                script: None,
            }),
            "start",
            Value::unit(),
        );
        let summary = sys.run_until_quiet().unwrap();
        sys.shutdown().unwrap();
        assert_eq!(summary.trailing, 0);
        assert_eq!(*sink.lock().unwrap(), *recorded.lock().unwrap());
    }
}

#[test]
fn workload_replay_while_rerecording_reproduces_trace_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, data) = paths(dir.path());
    let recorded: Sink = Arc::default();
    let sys = ActorSystem::recording(
        RuntimeConfig::new(2),
        RecorderConfig::new(trace, data),
    )
    .unwrap();
    sys.start(
        Box::new(Listener {
            sink: Arc::clone(&recorded),
            jobs: Vec::new(),
            script: Some(WORKLOAD_SCRIPT),
        }),
        "start",
        Value::unit(),
    );
    sys.run_until_quiet().unwrap();
    sys.shutdown().unwrap();

    let redir = tempfile::tempdir().unwrap();
    let (rt, rd) = paths(redir.path());
    let sink: Sink = Arc::default();
    let sys = ActorSystem::replaying_rerecord(
        RuntimeConfig::new(2),
        load(dir.path()),
        RecorderConfig::new(rt, rd),
    )
    .unwrap();
    sys.start(
        Box::new(Listener {
            sink: Arc::clone(&sink),
            jobs: Vec::new(),
            script: None,
        }),
        "start",
        Value::unit(),
    );
    sys.run_until_quiet().unwrap();
    sys.shutdown().unwrap();

    let original = load(dir.path());
    let rerecorded = load(redir.path());
    assert_eq!(rerecorded.children, original.children);
    assert_eq!(rerecorded.queues, original.queues);
    assert_eq!(rerecorded.data, original.data);
}

// ---------------------------------------------------------------------------
// Damaged recordings must fail loudly at load time.

#[test]
fn truncated_files_fail_to_load() {
    let dir = tempfile::tempdir().unwrap();
    record_race(dir.path(), 2, 3);
    let (trace_path, data_path) = paths(dir.path());
    let trace = fs::read(&trace_path).unwrap();
    let data = fs::read(&data_path).unwrap();

    assert!(load_trace(&trace[..trace.len() - 1], &data).is_err());
    assert!(load_trace(&trace[..5], &data).is_err());
    assert!(load_trace(&[], &data).is_err());

    let dir2 = tempfile::tempdir().unwrap();
    let (t2, d2) = paths(dir2.path());
    {
        // A run with data-file content, for the data-side checks.
        let sink: Sink = Arc::default();
        let sys = ActorSystem::recording(
            RuntimeConfig::new(2),
            RecorderConfig::new(&t2, &d2),
        )
        .unwrap();
        sys.start(
            Box::new(Oracle {
               sink,
               performed: Arc::new(AtomicUsize::new(0)),
            }),
            "start",
            Value::unit(),
        );
        sys.run_until_quiet().unwrap();
        sys.shutdown().unwrap();
    }
    let trace2 = fs::read(&t2).unwrap();
    let data2 = fs::read(&d2).unwrap();
    assert!(load_trace(&trace2, &data2[..data2.len() - 1]).is_err());
    assert!(load_trace(&trace2, &data2[..3]).is_err());
    assert!(load_trace(&trace2, &[]).is_err());
    // Intact inputs still load, so the failures above are the cuts' doing.
    assert!(load_trace(&trace2, &data2).is_ok());
}
