//! The event-loop scheduler: a pool of workers claims actors, drains their
//! mailboxes one serial turn at a time, and (when tracing) records exactly
//! the per-actor delivery order plus spawn/system-call placements.
//!
//! Replay runs the same workers against per-actor expected-event queues:
//! arrivals park until they match the head of the target's queue, external
//! events are re-synthesized from the data store through the registered data
//! source, and any departure from the recorded order is reported as
//! divergence, corruption or a stall rather than papered over.

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::error::{
    CorruptionError, DivergenceError, RecorderError, ReplayError, RunError, StallReport,
    StuckActor, TurnError,
};
use crate::external::{DataSource, SimContext, SimOutcome};
use crate::ids::{ActorId, DataId, MAIN_ACTOR};
use crate::record::{DataPayload, Recorder, RecorderConfig, ThreadTracer, WriterStats};
use crate::replay::{ExpectedEvent, LoadedTrace};
use crate::trace::{DataStore, ExternalMarker, TraceEntry};
use crate::value::Value;

use super::actor::{ActorCell, ActorHandle, Behavior, ReplayMb};
use super::envelope::{Envelope, EnvelopeKind, ExternalStamp};
use super::promise::{follow, PromiseShared, PromiseState, QueuedCallback, QueuedSend};
use super::turn::Turn;

/// Scheduler sizing.
#[derive(Clone, Copy, Debug)]
pub struct RuntimeConfig {
    pub threads: usize,
}

impl RuntimeConfig {
    pub fn new(threads: usize) -> RuntimeConfig {
        RuntimeConfig { threads }
    }
}

impl Default for RuntimeConfig {
    fn default() -> RuntimeConfig {
        RuntimeConfig { threads: 2 }
    }
}

/// What a completed run did, for reporting and sanity checks.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunSummary {
    pub turns: u64,
    pub messages: u64,
    /// Actors alive at the end of the run (including main).
    pub actors: u32,
    /// Replay only: messages still parked when the expected queues ran dry.
    /// The recorded run shut down before delivering these.
    pub trailing: u64,
}

/// Final accounting after workers and the trace writer have been joined.
#[derive(Clone, Copy, Debug, Default)]
pub struct ShutdownReport {
    /// Present when the run was recorded (or re-recorded during replay).
    pub writer: Option<WriterStats>,
}

struct Sched {
    queue: VecDeque<ActorId>,
    /// Workers currently processing a claimed actor.
    active: usize,
    /// Envelopes delivered but not yet consumed by a turn. Transiently
    /// negative when a consumer outruns the deliverer's bookkeeping.
    work: i64,
    /// Outstanding external activity tokens (workload drivers).
    external: usize,
    shutdown: bool,
}

pub(crate) enum Tracing {
    Off,
    On(Recorder),
}

pub(crate) struct ReplayCtx {
    pub data: DataStore,
    /// Expected-event queues for actors that have not been spawned yet.
    pub unclaimed: Mutex<HashMap<ActorId, VecDeque<ExpectedEvent>>>,
}

pub(crate) struct SystemShared {
    actors: RwLock<Vec<Option<Arc<ActorCell>>>>,
    sched: Mutex<Sched>,
    work_cv: Condvar,
    quiet_cv: Condvar,
    pub(crate) tracing: Tracing,
    pub(crate) replay: Option<ReplayCtx>,
    pub(crate) sources: Mutex<HashMap<ActorId, Arc<dyn DataSource>>>,
    fatal: Mutex<Option<ReplayError>>,
    drivers: Mutex<Vec<JoinHandle<()>>>,
    stats_turns: AtomicU64,
    stats_messages: AtomicU64,
    trailing: AtomicU64,
}

impl SystemShared {
    pub(crate) fn is_replay(&self) -> bool {
        self.replay.is_some()
    }

    pub(crate) fn cell(&self, id: ActorId) -> Option<Arc<ActorCell>> {
        self.actors
            .read()
            .unwrap()
            .get(id.0 as usize)
            .and_then(|slot| slot.clone())
    }

    /// Live run: next contiguous id, cell appended under the write lock.
    pub(crate) fn allocate_cell(&self, behavior: Box<dyn Behavior>) -> ActorId {
        let mut actors = self.actors.write().unwrap();
        let id = ActorId(actors.len() as u32);
        actors.push(Some(Arc::new(ActorCell::new(id, behavior, None, false))));
        id
    }

    /// Replay: bind `behavior` to the recorded id, hand it its expected-event
    /// queue, and schedule it once so a leading external event self-starts.
    pub(crate) fn bind_cell(&self, id: ActorId, behavior: Box<dyn Behavior>) {
        let replay = self.replay.as_ref().expect("bind_cell outside replay");
        let expected = replay
            .unclaimed
            .lock()
            .unwrap()
            .remove(&id)
            .unwrap_or_default();
        let cell = Arc::new(ActorCell::new(
            id,
            behavior,
            Some(ReplayMb {
                expected,
                last_simulated: None,
            }),
            true,
        ));
        {
            let mut actors = self.actors.write().unwrap();
            let slot = actors
                .get_mut(id.0 as usize)
                .expect("recorded actor id beyond recorded actor count");
            assert!(slot.is_none(), "actor id bound twice during replay");
            *slot = Some(cell);
        }
        let mut s = self.sched.lock().unwrap();
        s.queue.push_back(id);
        self.work_cv.notify_one();
    }

    pub(crate) fn set_fatal(&self, error: ReplayError) {
        let mut slot = self.fatal.lock().unwrap();
        if slot.is_none() {
            log::error!("replay aborting: {error}");
            *slot = Some(error);
        }
        drop(slot);
        self.quiet_cv.notify_all();
    }

    fn fatal_clone(&self) -> Option<ReplayError> {
        self.fatal.lock().unwrap().clone()
    }

    pub(crate) fn begin_external(&self) {
        self.sched.lock().unwrap().external += 1;
    }

    pub(crate) fn end_external(&self) {
        let mut s = self.sched.lock().unwrap();
        s.external -= 1;
        drop(s);
        self.quiet_cv.notify_all();
    }

    pub(crate) fn push_driver(&self, handle: JoinHandle<()>) {
        self.drivers.lock().unwrap().push(handle);
    }

    /// Queue one delivery. Live runs append to the mailbox; replay parks the
    /// envelope until the expected-event queue admits it. Either way the
    /// target gets scheduled.
    pub(crate) fn deliver(self: &Arc<Self>, target: ActorId, env: Envelope) {
        let cell = self
            .cell(target)
            .expect("delivery to an actor that does not exist");
        let mut mb = cell.mailbox.lock().unwrap();
        if mb.replay.is_some() {
            mb.pending.push_back(env);
        } else {
            mb.queue.push_back(env);
        }
        let need_sched = !mb.scheduled;
        if need_sched {
            mb.scheduled = true;
        }
        drop(mb);
        self.stats_messages.fetch_add(1, Ordering::Relaxed);
        let mut s = self.sched.lock().unwrap();
        s.work += 1;
        if need_sched {
            s.queue.push_back(target);
            self.work_cv.notify_one();
        }
    }

    pub(crate) fn make_stamp(&self, external: &Option<(u8, Arc<[u8]>)>) -> Option<ExternalStamp> {
        external.as_ref().map(|(event_type, bytes)| {
            if self.is_replay() {
                ExternalStamp::Replayed {
                    event_type: *event_type,
                    bytes: Arc::clone(bytes),
                }
            } else {
                ExternalStamp::Fresh {
                    event_type: *event_type,
                    payload: DataPayload::Bytes(bytes.to_vec()),
                }
            }
        })
    }

    /// Resolve `promise` with `value`. Resolving with another promise
    /// forwards the waiters to it; resolving with a plain value dispatches
    /// queued sends and callbacks. `external` marks the dispatched messages
    /// as externally caused and supplies the payload for the data file.
    pub(crate) fn resolve_promise(
        self: &Arc<Self>,
        promise: &Arc<PromiseShared>,
        value: Value,
        resolver: ActorId,
        external: Option<(u8, Arc<[u8]>)>,
    ) -> Result<(), TurnError> {
        if let Value::Promise(inner_handle) = &value {
            let inner = follow(&inner_handle.shared);
            let taken = loop {
                let target = follow(promise);
                if Arc::ptr_eq(&inner, &target) {
                    return Err(TurnError::handler("promise resolved with itself"));
                }
                let mut st = target.state.lock().unwrap();
                match &mut *st {
                    PromiseState::Resolved { .. } => return Err(TurnError::DoubleResolve),
                    PromiseState::Forwarded(_) => continue, // raced; follow again
                    PromiseState::Unresolved { queued, callbacks } => {
                        let taken = (std::mem::take(queued), std::mem::take(callbacks));
                        *st = PromiseState::Forwarded(Arc::clone(&inner));
                        break taken;
                    }
                }
            };
            self.deposit_waiters(inner, taken.0, taken.1);
            return Ok(());
        }

        let (queued, callbacks) = loop {
            let target = follow(promise);
            let mut st = target.state.lock().unwrap();
            match &mut *st {
                PromiseState::Resolved { .. } => return Err(TurnError::DoubleResolve),
                PromiseState::Forwarded(_) => continue,
                PromiseState::Unresolved { queued, callbacks } => {
                    let taken = (std::mem::take(queued), std::mem::take(callbacks));
                    *st = PromiseState::Resolved {
                        value: value.clone(),
                        resolver,
                    };
                    break taken;
                }
            }
        };
        for qs in queued {
            self.dispatch_queued_send(&value, resolver, qs, &external);
        }
        for cb in callbacks {
            self.dispatch_callback(&value, resolver, cb, &external);
        }
        Ok(())
    }

    /// Move waiters onto `inner`, or dispatch them right away if it has
    /// already resolved.
    fn deposit_waiters(
        self: &Arc<Self>,
        inner: Arc<PromiseShared>,
        mut queued: Vec<QueuedSend>,
        mut callbacks: Vec<QueuedCallback>,
    ) {
        let mut current = inner;
        loop {
            let resolved = {
                let mut st = current.state.lock().unwrap();
                match &mut *st {
                    PromiseState::Unresolved {
                        queued: q,
                        callbacks: c,
                    } => {
                        q.append(&mut queued);
                        c.append(&mut callbacks);
                        return;
                    }
                    PromiseState::Forwarded(next) => {
                        let next = Arc::clone(next);
                        drop(st);
                        current = next;
                        continue;
                    }
                    PromiseState::Resolved { value, resolver } => (value.clone(), *resolver),
                }
            };
            for qs in queued.drain(..) {
                self.dispatch_queued_send(&resolved.0, resolved.1, qs, &None);
            }
            for cb in callbacks.drain(..) {
                self.dispatch_callback(&resolved.0, resolved.1, cb, &None);
            }
            return;
        }
    }

    /// Forward one queued send toward the resolution value: to the actor it
    /// names, into the next promise of a chain, or (for plain values) nowhere
    /// — a send to a non-actor has no mailbox to land in and is dropped.
    pub(crate) fn dispatch_queued_send(
        self: &Arc<Self>,
        value: &Value,
        resolver: ActorId,
        qs: QueuedSend,
        external: &Option<(u8, Arc<[u8]>)>,
    ) {
        match value {
            Value::Actor(h) => {
                let env = Envelope {
                    kind: EnvelopeKind::PromiseMsg { resolver },
                    sender: qs.sender,
                    selector: qs.selector,
                    payload: qs.payload,
                    result: qs.result,
                    external: self.make_stamp(external),
                    opaque: None,
                };
                self.deliver(h.id(), env);
            }
            Value::Promise(p) => {
                let mut current = follow(&p.shared);
                loop {
                    let resolved = {
                        let mut st = current.state.lock().unwrap();
                        match &mut *st {
                            PromiseState::Unresolved { queued, .. } => {
                                queued.push(qs);
                                return;
                            }
                            PromiseState::Forwarded(next) => {
                                let next = Arc::clone(next);
                                drop(st);
                                current = next;
                                continue;
                            }
                            PromiseState::Resolved { value, resolver } => {
                                (value.clone(), *resolver)
                            }
                        }
                    };
                    self.dispatch_queued_send(&resolved.0, resolved.1, qs, &None);
                    return;
                }
            }
            _ => {
                log::debug!(
                    "dropping send '{}': promise resolved with a non-actor value",
                    qs.selector
                );
            }
        }
    }

    fn dispatch_callback(
        self: &Arc<Self>,
        value: &Value,
        resolver: ActorId,
        cb: QueuedCallback,
        external: &Option<(u8, Arc<[u8]>)>,
    ) {
        let env = Envelope {
            kind: EnvelopeKind::PromiseMsg { resolver },
            sender: cb.registrant,
            selector: cb.selector,
            payload: value.clone(),
            result: None,
            external: self.make_stamp(external),
            opaque: None,
        };
        self.deliver(cb.registrant, env);
    }

    /// Run one delivery as a turn: record the delivery entry, invoke the
    /// behavior, resolve the result promise with the returned value.
    fn execute_turn(
        self: &Arc<Self>,
        cell: &Arc<ActorCell>,
        env: Envelope,
        matched_data: Option<DataId>,
        tracer: &mut Option<ThreadTracer>,
        ctr: &mut u16,
    ) {
        let Envelope {
            kind,
            sender,
            selector,
            payload,
            result,
            external,
            opaque,
        } = env;

        let marker = match external {
            None => None,
            Some(ExternalStamp::Fresh { event_type, payload }) => {
                let id = DataId(cell.data_counter.fetch_add(1, Ordering::Relaxed));
                if let Tracing::On(rec) = &self.tracing {
                    rec.submit_data(cell.id, id, payload);
                }
                Some(ExternalMarker {
                    event_type,
                    data_id: id,
                })
            }
            Some(ExternalStamp::Replayed { event_type, bytes }) => {
                let id = matched_data.expect("replayed external delivery without a data id");
                cell.data_counter.fetch_max(id.0 + 1, Ordering::Relaxed);
                if let Tracing::On(rec) = &self.tracing {
                    rec.submit_data(cell.id, id, DataPayload::Bytes(bytes.to_vec()));
                }
                Some(ExternalMarker {
                    event_type,
                    data_id: id,
                })
            }
        };
        if let Some(tr) = tracer.as_mut() {
            let entry = match &kind {
                EnvelopeKind::Message => TraceEntry::Message {
                    sender,
                    external: marker,
                },
                EnvelopeKind::PromiseMsg { resolver } => TraceEntry::PromiseMessage {
                    sender,
                    resolver: *resolver,
                    external: marker,
                },
            };
            tr.record_entry(&entry, cell.id, ctr);
        }

        let outcome = {
            let mut turn = Turn::new(self, cell, tracer, ctr, opaque);
            let mut behavior = cell.behavior.lock().unwrap();
            catch_unwind(AssertUnwindSafe(|| {
                behavior.handle(&mut turn, &selector, payload)
            }))
        };
        self.stats_turns.fetch_add(1, Ordering::Relaxed);
        match outcome {
            Ok(Ok(v)) => {
                if let Some(rp) = result {
                    if let Err(e) = self.resolve_promise(&rp, v, cell.id, None) {
                        log::debug!("{}: result promise not resolved: {e}", cell.id);
                    }
                }
            }
            Ok(Err(TurnError::Replay(e))) => self.set_fatal(e),
            Ok(Err(e)) => log::warn!("{}: turn '{selector}' failed: {e}", cell.id, ),
            Err(panic) => log::error!(
                "{}: turn '{selector}' panicked: {}; actor continues with partial state",
                cell.id,
                panic_message(&panic)
            ),
        }
    }

    /// Live-run claim: drain the mailbox as one batch (one subtrace).
    fn process_live(self: &Arc<Self>, id: ActorId, tracer: &mut Option<ThreadTracer>) {
        let cell = self.cell(id).expect("scheduled actor must exist");
        let mut ctr = cell.subtrace_counter.load(Ordering::Relaxed);
        let mut started = false;
        loop {
            let env = {
                let mut mb = cell.mailbox.lock().unwrap();
                match mb.queue.pop_front() {
                    Some(env) => env,
                    None => {
                        // The counter must be written back before this lock
                        // publishes the unscheduled state; the next claimant
                        // may run on another thread the moment it is released.
                        cell.subtrace_counter.store(ctr, Ordering::Relaxed);
                        mb.scheduled = false;
                        break;
                    }
                }
            };
            if !started {
                if let Some(tr) = tracer.as_mut() {
                    tr.begin_subtrace(id, &mut ctr);
                }
                started = true;
            }
            self.execute_turn(&cell, env, None, tracer, &mut ctr);
            self.sched.lock().unwrap().work -= 1;
        }
    }

    /// Replay claim: repeatedly match the head expected event against parked
    /// arrivals, synthesizing external events from the data store when the
    /// head calls for one. Parks (unschedules) when only internal events
    /// remain unmatched; retires the actor when its queue runs dry.
    fn process_replay(self: &Arc<Self>, id: ActorId, tracer: &mut Option<ThreadTracer>) {
        enum Step {
            Turn(Envelope, Option<DataId>),
            Simulate {
                source: ActorId,
                event_type: u8,
                data_id: DataId,
            },
            Park,
            Retire(usize),
            Resimulated,
            Underrun(String),
        }

        let cell = self.cell(id).expect("scheduled actor must exist");
        let mut ctr = cell.subtrace_counter.load(Ordering::Relaxed);
        let mut started = false;
        loop {
            if self.fatal_clone().is_some() {
                // Same discipline as every unschedule point below: republish
                // the subtrace counter before the actor becomes claimable.
                cell.subtrace_counter.store(ctr, Ordering::Relaxed);
                cell.mailbox.lock().unwrap().scheduled = false;
                break;
            }
            let step = {
                let mut mb = cell.mailbox.lock().unwrap();
                let head = mb
                    .replay
                    .as_ref()
                    .expect("replay mailbox in replay run")
                    .expected
                    .front()
                    .cloned();
                match head {
                    None => {
                        let n = mb.pending.len() + mb.queue.len();
                        for env in mb.pending.drain(..) {
                            log::info!(
                                "{id}: past end of recorded events, parking {}",
                                env.describe()
                            );
                        }
                        mb.queue.clear();
                        cell.subtrace_counter.store(ctr, Ordering::Relaxed);
                        mb.scheduled = false;
                        Step::Retire(n)
                    }
                    Some(
                        head @ (ExpectedEvent::Spawn { .. } | ExpectedEvent::Syscall { .. }),
                    ) => {
                        cell.subtrace_counter.store(ctr, Ordering::Relaxed);
                        mb.scheduled = false;
                        Step::Underrun(head.describe())
                    }
                    Some(head) => {
                        if let Some(pos) = mb.pending.iter().position(|env| head.matches(env)) {
                            let env = mb.pending.remove(pos).expect("scanned index exists");
                            let rp = mb.replay.as_mut().unwrap();
                            rp.expected.pop_front();
                            rp.last_simulated = None;
                            Step::Turn(env, head.data_id())
                        } else if let Some((event_type, data_id, source)) = head.external_parts()
                        {
                            let rp = mb.replay.as_mut().unwrap();
                            if rp.last_simulated == Some(rp.expected.len()) {
                                cell.subtrace_counter.store(ctr, Ordering::Relaxed);
                                mb.scheduled = false;
                                Step::Resimulated
                            } else {
                                rp.last_simulated = Some(rp.expected.len());
                                Step::Simulate {
                                    source,
                                    event_type,
                                    data_id,
                                }
                            }
                        } else {
                            cell.subtrace_counter.store(ctr, Ordering::Relaxed);
                            mb.scheduled = false;
                            Step::Park
                        }
                    }
                }
            };
            match step {
                Step::Turn(env, matched_data) => {
                    if !started {
                        if let Some(tr) = tracer.as_mut() {
                            tr.begin_subtrace(id, &mut ctr);
                        }
                        started = true;
                    }
                    self.execute_turn(&cell, env, matched_data, tracer, &mut ctr);
                    self.sched.lock().unwrap().work -= 1;
                    // A turn must consume every spawn/syscall event recorded
                    // for it; a leftover one here means the behavior diverged.
                    let leftover = {
                        let mut mb = cell.mailbox.lock().unwrap();
                        let rp = mb.replay.as_mut().unwrap();
                        match rp.expected.front() {
                            Some(
                                e @ (ExpectedEvent::Spawn { .. } | ExpectedEvent::Syscall { .. }),
                            ) => {
                                let desc = e.describe();
                                cell.subtrace_counter.store(ctr, Ordering::Relaxed);
                                mb.scheduled = false;
                                Some(desc)
                            }
                            _ => None,
                        }
                    };
                    if let Some(expected) = leftover {
                        self.set_fatal(ReplayError::Divergence(DivergenceError::TurnUnderrun {
                            actor: id,
                            expected,
                        }));
                        break;
                    }
                }
                Step::Simulate {
                    source,
                    event_type,
                    data_id,
                } => {
                    let handler = self.sources.lock().unwrap().get(&source).cloned();
                    let Some(handler) = handler else {
                        self.set_fatal(ReplayError::Corruption(CorruptionError::UnknownSource {
                            actor: source,
                        }));
                        continue;
                    };
                    let bytes = self
                        .replay
                        .as_ref()
                        .unwrap()
                        .data
                        .get(&(id, data_id))
                        .cloned();
                    let Some(bytes) = bytes else {
                        self.set_fatal(ReplayError::Corruption(CorruptionError::MissingData {
                            origin: id,
                            data: data_id,
                        }));
                        continue;
                    };
                    let mut sim = SimContext::new(self, source);
                    match handler.simulate(&mut sim, id, event_type, &bytes) {
                        Err(detail) => {
                            self.set_fatal(ReplayError::Corruption(
                                CorruptionError::SimulationFailed { actor: id, detail },
                            ));
                        }
                        Ok(SimOutcome::Performed) => {}
                        Ok(SimOutcome::Deliver { selector, payload }) => {
                            self.deliver(
                                id,
                                Envelope {
                                    kind: EnvelopeKind::Message,
                                    sender: source,
                                    selector,
                                    payload,
                                    result: None,
                                    external: Some(ExternalStamp::Replayed { event_type, bytes }),
                                    opaque: None,
                                },
                            );
                        }
                    }
                }
                Step::Park => break,
                Step::Retire(n) => {
                    if n > 0 {
                        self.trailing.fetch_add(n as u64, Ordering::Relaxed);
                        self.sched.lock().unwrap().work -= n as i64;
                    }
                    break;
                }
                Step::Resimulated => {
                    self.set_fatal(ReplayError::Corruption(CorruptionError::ResimulatedEvent {
                        actor: id,
                    }));
                    break;
                }
                Step::Underrun(expected) => {
                    self.set_fatal(ReplayError::Divergence(DivergenceError::TurnUnderrun {
                        actor: id,
                        expected,
                    }));
                    break;
                }
            }
        }
    }

    fn worker_main(self: Arc<Self>, mut tracer: Option<ThreadTracer>) {
        loop {
            let id = {
                let mut s = self.sched.lock().unwrap();
                loop {
                    if s.shutdown {
                        return;
                    }
                    if let Some(id) = s.queue.pop_front() {
                        s.active += 1;
                        break id;
                    }
                    s = self.work_cv.wait(s).unwrap();
                }
            };
            if self.is_replay() {
                self.process_replay(id, &mut tracer);
            } else {
                self.process_live(id, &mut tracer);
            }
            let mut s = self.sched.lock().unwrap();
            s.active -= 1;
            if s.active == 0 && s.queue.is_empty() {
                drop(s);
                self.quiet_cv.notify_all();
            }
        }
        // `tracer` drops here and flushes its remaining buffer.
    }

    fn stall_report(&self) -> StallReport {
        let mut stuck = Vec::new();
        for slot in self.actors.read().unwrap().iter() {
            let Some(cell) = slot else { continue };
            let mb = cell.mailbox.lock().unwrap();
            let Some(rp) = &mb.replay else { continue };
            if let Some(head) = rp.expected.front() {
                stuck.push(StuckActor {
                    actor: cell.id,
                    spawned: true,
                    remaining: rp.expected.len(),
                    head: head.describe(),
                    pending: mb.pending.iter().map(|e| e.describe()).collect(),
                });
            }
        }
        if let Some(replay) = &self.replay {
            for (actor, queue) in replay.unclaimed.lock().unwrap().iter() {
                if let Some(head) = queue.front() {
                    stuck.push(StuckActor {
                        actor: *actor,
                        spawned: false,
                        remaining: queue.len(),
                        head: head.describe(),
                        pending: Vec::new(),
                    });
                }
            }
        }
        stuck.sort_by_key(|s| s.actor);
        StallReport { stuck }
    }

    fn summary(&self) -> RunSummary {
        let actors = self
            .actors
            .read()
            .unwrap()
            .iter()
            .filter(|s| s.is_some())
            .count() as u32;
        RunSummary {
            turns: self.stats_turns.load(Ordering::Relaxed),
            messages: self.stats_messages.load(Ordering::Relaxed),
            actors,
            trailing: self.trailing.load(Ordering::Relaxed),
        }
    }
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// An actor system: spawn it in one of four modes (plain, recording,
/// replaying, replaying while re-recording), [`start`](ActorSystem::start)
/// the main actor, [`run_until_quiet`](ActorSystem::run_until_quiet), then
/// [`shutdown`](ActorSystem::shutdown).
pub struct ActorSystem {
    shared: Arc<SystemShared>,
    workers: Vec<JoinHandle<()>>,
}

impl ActorSystem {
    pub fn new(config: RuntimeConfig) -> ActorSystem {
        ActorSystem::build(config, Tracing::Off, None)
    }

    pub fn recording(
        config: RuntimeConfig,
        recorder: RecorderConfig,
    ) -> Result<ActorSystem, RecorderError> {
        let rec = Recorder::new(&recorder)?;
        Ok(ActorSystem::build(config, Tracing::On(rec), None))
    }

    pub fn replaying(config: RuntimeConfig, trace: LoadedTrace) -> ActorSystem {
        ActorSystem::build(config, Tracing::Off, Some(trace))
    }

    /// Replay while writing a fresh recording; the new trace and data files
    /// must describe the same execution as the ones being replayed.
    pub fn replaying_rerecord(
        config: RuntimeConfig,
        trace: LoadedTrace,
        recorder: RecorderConfig,
    ) -> Result<ActorSystem, RecorderError> {
        let rec = Recorder::new(&recorder)?;
        Ok(ActorSystem::build(config, Tracing::On(rec), Some(trace)))
    }

    fn build(config: RuntimeConfig, tracing: Tracing, trace: Option<LoadedTrace>) -> ActorSystem {
        let (actors, replay) = match trace {
            None => (Vec::new(), None),
            Some(t) => (
                vec![None; t.actor_count as usize],
                Some(ReplayCtx {
                    data: t.data,
                    unclaimed: Mutex::new(t.queues),
                }),
            ),
        };
        let shared = Arc::new(SystemShared {
            actors: RwLock::new(actors),
            sched: Mutex::new(Sched {
                queue: VecDeque::new(),
                active: 0,
                work: 0,
                external: 0,
                shutdown: false,
            }),
            work_cv: Condvar::new(),
            quiet_cv: Condvar::new(),
            tracing,
            replay,
            sources: Mutex::new(HashMap::new()),
            fatal: Mutex::new(None),
            drivers: Mutex::new(Vec::new()),
            stats_turns: AtomicU64::new(0),
            stats_messages: AtomicU64::new(0),
            trailing: AtomicU64::new(0),
        });
        let threads = config.threads.max(1);
        let workers = (0..threads)
            .map(|i| {
                let sh = Arc::clone(&shared);
                let tracer = match &shared.tracing {
                    Tracing::On(rec) => Some(rec.thread_tracer()),
                    Tracing::Off => None,
                };
                std::thread::Builder::new()
                    .name(format!("actor-worker-{i}"))
                    .spawn(move || sh.worker_main(tracer))
                    .expect("spawn worker thread")
            })
            .collect();
        ActorSystem { shared, workers }
    }

    /// Install the main actor (id 0) and queue its kick-off message, which it
    /// receives from itself. Call once per system.
    pub fn start(&self, behavior: Box<dyn Behavior>, selector: &str, payload: Value) -> ActorHandle {
        if self.shared.is_replay() {
            self.shared.bind_cell(MAIN_ACTOR, behavior);
        } else {
            let id = self.shared.allocate_cell(behavior);
            assert_eq!(id, MAIN_ACTOR, "start() must create the first actor");
        }
        self.shared.deliver(
            MAIN_ACTOR,
            Envelope {
                kind: EnvelopeKind::Message,
                sender: MAIN_ACTOR,
                selector: Arc::from(selector),
                payload,
                result: None,
                external: None,
                opaque: None,
            },
        );
        ActorHandle { id: MAIN_ACTOR }
    }

    /// Block until no envelope, turn or external driver remains — or until
    /// the run fails. Replay additionally verifies every expected event was
    /// consumed, reporting a stall listing each stuck actor otherwise.
    pub fn run_until_quiet(&self) -> Result<RunSummary, RunError> {
        {
            let mut s = self.shared.sched.lock().unwrap();
            loop {
                if self.shared.fatal_clone().is_some() {
                    drop(s);
                    return Err(RunError::Replay(self.shared.fatal_clone().unwrap()));
                }
                if let Tracing::On(rec) = &self.shared.tracing {
                    if rec.poisoned() {
                        return Err(RunError::Recording(
                            "trace writer failed; details follow at shutdown".into(),
                        ));
                    }
                }
                let idle = s.queue.is_empty() && s.active == 0 && s.external == 0;
                if idle && s.work <= 0 {
                    break;
                }
                if idle && s.work > 0 && self.shared.is_replay() {
                    drop(s);
                    return Err(RunError::Replay(ReplayError::Stall(
                        self.shared.stall_report(),
                    )));
                }
                let (guard, _) = self
                    .shared
                    .quiet_cv
                    .wait_timeout(s, Duration::from_millis(50))
                    .unwrap();
                s = guard;
            }
        }
        if self.shared.is_replay() {
            let report = self.shared.stall_report();
            if !report.stuck.is_empty() {
                return Err(RunError::Replay(ReplayError::Stall(report)));
            }
        }
        Ok(self.shared.summary())
    }

    /// Stop the workers, join every thread, finalize the recording.
    pub fn shutdown(mut self) -> Result<ShutdownReport, RunError> {
        {
            let mut s = self.shared.sched.lock().unwrap();
            s.shutdown = true;
        }
        self.shared.work_cv.notify_all();
        for d in self.shared.drivers.lock().unwrap().drain(..) {
            let _ = d.join();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        let writer = match &self.shared.tracing {
            Tracing::Off => None,
            Tracing::On(rec) => {
                Some(rec.finish().map_err(|e| RunError::Recording(e.to_string()))?)
            }
        };
        Ok(ShutdownReport { writer })
    }
}

impl Drop for ActorSystem {
    fn drop(&mut self) {
        // Best-effort release for early-exit paths; `shutdown` is the real
        // teardown and joins everything.
        if let Ok(mut s) = self.shared.sched.lock() {
            s.shutdown = true;
        }
        self.shared.work_cv.notify_all();
    }
}
