//! The capability handed to a behavior for the duration of one turn. All
//! effects an actor can have — spawning, sending, promise operations, system
//! calls, workload wiring — go through here, which is what lets recording
//! observe them and replay substitute recorded outcomes.

use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::Ordering;
use std::sync::Arc;

use crate::error::{CorruptionError, DivergenceError, ReplayError, TurnError};
use crate::external::{DataSource, ExternalEmitter, SyscallSite};
use crate::ids::{ActorId, DataId};
use crate::record::{DataPayload, ThreadTracer};
use crate::replay::ExpectedEvent;
use crate::trace::TraceEntry;
use crate::value::Value;

use super::actor::{ActorCell, ActorHandle, Behavior};
use super::envelope::{Envelope, EnvelopeKind};
use super::promise::{follow, PromiseHandle, PromiseState, QueuedCallback, QueuedSend};
use super::system::{SystemShared, Tracing};

pub struct Turn<'a> {
    shared: &'a Arc<SystemShared>,
    cell: &'a Arc<ActorCell>,
    tracer: &'a mut Option<ThreadTracer>,
    ctr: &'a mut u16,
    opaque: Option<Arc<dyn Any + Send + Sync>>,
}

impl<'a> Turn<'a> {
    pub(crate) fn new(
        shared: &'a Arc<SystemShared>,
        cell: &'a Arc<ActorCell>,
        tracer: &'a mut Option<ThreadTracer>,
        ctr: &'a mut u16,
        opaque: Option<Arc<dyn Any + Send + Sync>>,
    ) -> Turn<'a> {
        Turn {
            shared,
            cell,
            tracer,
            ctr,
            opaque,
        }
    }

    pub fn actor_id(&self) -> ActorId {
        self.cell.id
    }

    pub fn self_handle(&self) -> ActorHandle {
        ActorHandle { id: self.cell.id }
    }

    /// True when this run re-executes a recording. Behaviors should not
    /// branch on this for logic — it exists so wall-clock work with no
    /// observable effect (artificial delays) can be skipped.
    pub fn is_replay(&self) -> bool {
        self.shared.is_replay()
    }

    /// Create an actor. During replay the child receives the id the trace
    /// recorded for this spawn, keeping every actor reference stable.
    pub fn spawn(&mut self, behavior: Box<dyn Behavior>) -> Result<ActorHandle, TurnError> {
        if self.shared.is_replay() {
            let taken = {
                let mut mb = self.cell.mailbox.lock().unwrap();
                let rp = mb.replay.as_mut().expect("replay mailbox");
                match rp.expected.front() {
                    Some(ExpectedEvent::Spawn { child }) => {
                        let child = *child;
                        rp.expected.pop_front();
                        Ok(child)
                    }
                    Some(other) => Err(DivergenceError::UnexpectedSpawn {
                        parent: self.cell.id,
                        expected: other.describe(),
                    }),
                    None => Err(DivergenceError::SpawnOverflow {
                        parent: self.cell.id,
                    }),
                }
            };
            let child = match taken {
                Ok(c) => c,
                Err(d) => {
                    let e = ReplayError::Divergence(d);
                    self.shared.set_fatal(e.clone());
                    return Err(e.into());
                }
            };
            self.shared.bind_cell(child, behavior);
            if let Some(tr) = self.tracer.as_mut() {
                tr.record_entry(&TraceEntry::ActorCreation { child }, self.cell.id, self.ctr);
            }
            Ok(ActorHandle { id: child })
        } else {
            let child = self.shared.allocate_cell(behavior);
            if let Some(tr) = self.tracer.as_mut() {
                tr.record_entry(&TraceEntry::ActorCreation { child }, self.cell.id, self.ctr);
            }
            Ok(ActorHandle { id: child })
        }
    }

    /// Asynchronous send. The returned promise resolves with the value the
    /// receiving turn returns.
    pub fn send(&mut self, target: &ActorHandle, selector: &str, payload: Value) -> PromiseHandle {
        let result = PromiseHandle::new();
        self.shared.deliver(
            target.id,
            Envelope {
                kind: EnvelopeKind::Message,
                sender: self.cell.id,
                selector: Arc::from(selector),
                payload,
                result: Some(Arc::clone(&result.shared)),
                external: None,
                opaque: None,
            },
        );
        result
    }

    pub fn create_promise(&self) -> PromiseHandle {
        PromiseHandle::new()
    }

    /// Resolve a promise with a value (resolving with a promise forwards to
    /// it). Fails with [`TurnError::DoubleResolve`] if already resolved.
    pub fn resolve(&mut self, promise: &PromiseHandle, value: Value) -> Result<(), TurnError> {
        self.shared
            .resolve_promise(&promise.shared, value, self.cell.id, None)
    }

    /// Send to whatever actor the promise resolves to. Queues until
    /// resolution; delivers immediately if already resolved to an actor.
    pub fn send_to_promise(
        &mut self,
        promise: &PromiseHandle,
        selector: &str,
        payload: Value,
    ) -> PromiseHandle {
        let result = PromiseHandle::new();
        let qs = QueuedSend {
            sender: self.cell.id,
            selector: Arc::from(selector),
            payload,
            result: Some(Arc::clone(&result.shared)),
        };
        self.enqueue_send(&promise.shared, qs);
        result
    }

    fn enqueue_send(&mut self, promise: &Arc<super::promise::PromiseShared>, qs: QueuedSend) {
        let target = follow(promise);
        let resolved = {
            let mut st = target.state.lock().unwrap();
            match &mut *st {
                PromiseState::Unresolved { queued, .. } => {
                    queued.push(qs);
                    return;
                }
                PromiseState::Forwarded(next) => {
                    let next = Arc::clone(next);
                    drop(st);
                    self.enqueue_send(&next, qs);
                    return;
                }
                PromiseState::Resolved { value, resolver } => (value.clone(), *resolver),
            }
        };
        self.shared
            .dispatch_queued_send(&resolved.0, resolved.1, qs, &None);
    }

    /// Deliver the promise's value to this actor under `selector` once it
    /// resolves (immediately if it already has).
    pub fn when_resolved(&mut self, promise: &PromiseHandle, selector: &str) {
        let target = follow(&promise.shared);
        let resolved = {
            let mut st = target.state.lock().unwrap();
            match &mut *st {
                PromiseState::Unresolved { callbacks, .. } => {
                    callbacks.push(QueuedCallback {
                        registrant: self.cell.id,
                        selector: Arc::from(selector),
                    });
                    return;
                }
                PromiseState::Forwarded(_) => unreachable!("follow returns a non-link"),
                PromiseState::Resolved { value, resolver } => (value.clone(), *resolver),
            }
        };
        self.shared.deliver(
            self.cell.id,
            Envelope {
                kind: EnvelopeKind::PromiseMsg {
                    resolver: resolved.1,
                },
                sender: self.cell.id,
                selector: Arc::from(selector),
                payload: resolved.0,
                result: None,
                external: None,
                opaque: None,
            },
        );
    }

    /// Consult the outside world. Live runs invoke `perform` and ship the
    /// encoded result to the data file; replay never calls `perform` — the
    /// recorded bytes are decoded instead, so the environment stays untouched.
    pub fn syscall<T, F>(&mut self, site: &SyscallSite<T>, perform: F) -> Result<T, TurnError>
    where
        T: Clone + Send + 'static,
        F: FnOnce() -> T,
    {
        if self.shared.is_replay() {
            let taken = {
                let mut mb = self.cell.mailbox.lock().unwrap();
                let rp = mb.replay.as_mut().expect("replay mailbox");
                match rp.expected.front() {
                    Some(ExpectedEvent::Syscall { data_id }) => {
                        let id = *data_id;
                        rp.expected.pop_front();
                        Ok(id)
                    }
                    Some(other) => Err(DivergenceError::UnexpectedSyscall {
                        actor: self.cell.id,
                        expected: other.describe(),
                    }),
                    None => Err(DivergenceError::UnexpectedSyscall {
                        actor: self.cell.id,
                        expected: "end of recorded events".into(),
                    }),
                }
            };
            let data_id = match taken {
                Ok(id) => id,
                Err(d) => {
                    let e = ReplayError::Divergence(d);
                    self.shared.set_fatal(e.clone());
                    return Err(e.into());
                }
            };
            let replay = self.shared.replay.as_ref().expect("replay context");
            let Some(bytes) = replay.data.get(&(self.cell.id, data_id)).cloned() else {
                let e = ReplayError::Corruption(CorruptionError::MissingData {
                    origin: self.cell.id,
                    data: data_id,
                });
                self.shared.set_fatal(e.clone());
                return Err(e.into());
            };
            let value = match (site.decode)(&bytes) {
                Ok(v) => v,
                Err(detail) => {
                    let e = ReplayError::Corruption(CorruptionError::DataDecode {
                        origin: self.cell.id,
                        data: data_id,
                        detail,
                    });
                    self.shared.set_fatal(e.clone());
                    return Err(e.into());
                }
            };
            if let Some(tr) = self.tracer.as_mut() {
                tr.record_entry(&TraceEntry::SystemCall { data_id }, self.cell.id, self.ctr);
            }
            if let Tracing::On(rec) = &self.shared.tracing {
                self.cell
                    .data_counter
                    .fetch_max(data_id.0 + 1, Ordering::Relaxed);
                rec.submit_data(self.cell.id, data_id, DataPayload::Bytes(bytes.to_vec()));
            }
            Ok(value)
        } else {
            let value = perform();
            if let Tracing::On(rec) = &self.shared.tracing {
                let id = DataId(self.cell.data_counter.fetch_add(1, Ordering::Relaxed));
                let shipped = value.clone();
                let encode = site.encode;
                rec.submit_data(
                    self.cell.id,
                    id,
                    DataPayload::Lazy(Box::new(move || encode(&shipped))),
                );
                if let Some(tr) = self.tracer.as_mut() {
                    tr.record_entry(
                        &TraceEntry::SystemCall { data_id: id },
                        self.cell.id,
                        self.ctr,
                    );
                }
            }
            Ok(value)
        }
    }

    /// The opaque attachment of the message being handled, if the sender
    /// attached one of type `T`. Attachments never enter the trace; during
    /// replay this is always `None` and recorded system calls supply any
    /// detail the handler extracted from it.
    pub fn current_opaque<T: Send + Sync + 'static>(&self) -> Option<Arc<T>> {
        self.opaque
            .clone()
            .and_then(|a| a.downcast::<T>().ok())
    }

    /// Register `source` as the origin of a family of external events. The
    /// returned handle's id is what external messages from this source carry
    /// as their sender; replay uses it to find the source again.
    pub fn register_data_source(
        &mut self,
        source: Arc<dyn DataSource>,
    ) -> Result<ActorHandle, TurnError> {
        let gateway = self.spawn(Box::new(SourceGateway))?;
        self.shared
            .sources
            .lock()
            .unwrap()
            .insert(gateway.id, source);
        Ok(gateway)
    }

    /// Launch a driver thread that feeds external events into the system
    /// through `source`'s emitter. Live runs only — replay synthesizes the
    /// same events from the recording, so the driver never starts there.
    pub fn start_workload<F>(&mut self, source: &ActorHandle, driver: F)
    where
        F: FnOnce(ExternalEmitter) + Send + 'static,
    {
        if self.shared.is_replay() {
            return;
        }
        self.shared.begin_external();
        let shared = Arc::clone(self.shared);
        let emitter = ExternalEmitter::new(Arc::clone(self.shared), source.id);
        let handle = std::thread::Builder::new()
            .name("workload-driver".into())
            .spawn(move || {
                if catch_unwind(AssertUnwindSafe(|| driver(emitter))).is_err() {
                    log::error!("workload driver panicked; remaining events dropped");
                }
                shared.end_external();
            })
            .expect("spawn workload driver thread");
        self.shared.push_driver(handle);
    }
}

/// Stand-in behavior for data-source registrations: it only exists to own an
/// actor id; nothing should ever send to it.
struct SourceGateway;

impl Behavior for SourceGateway {
    fn handle(
        &mut self,
        _ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        log::warn!("data-source gateway received '{selector}'; ignoring");
        Ok(Value::unit())
    }
}
