use std::collections::VecDeque;
use std::fmt;
use std::sync::atomic::{AtomicU16, AtomicU32};
use std::sync::Mutex;

use crate::error::TurnError;
use crate::ids::ActorId;
use crate::replay::ExpectedEvent;
use crate::runtime::envelope::Envelope;
use crate::runtime::turn::Turn;
use crate::value::Value;

/// An actor's message handler plus whatever state it guards. One turn runs at
/// a time per actor, so `handle` gets `&mut self` without further locking.
///
/// The returned value resolves the promise associated with the send that
/// started the turn. Returning an error abandons the turn (it is logged and
/// the result promise stays unresolved); the actor keeps processing.
pub trait Behavior: Send {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError>;
}

/// Reference to an actor. Cheap to copy into payloads; all operations on it
/// go through a [`Turn`], which supplies the system.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActorHandle {
    pub(crate) id: ActorId,
}

impl ActorHandle {
    pub fn id(&self) -> ActorId {
        self.id
    }
}

impl fmt::Debug for ActorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id)
    }
}

impl fmt::Display for ActorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id)
    }
}

/// Replay bookkeeping attached to a mailbox: the events this actor is still
/// expected to consume, in recorded order.
pub(crate) struct ReplayMb {
    pub expected: VecDeque<ExpectedEvent>,
    /// Length of `expected` when the head event was last simulated; guards
    /// against simulating the same external event twice.
    pub last_simulated: Option<usize>,
}

/// Everything a deliverer or the claiming worker needs under one lock.
/// `queue` holds live-run arrivals in delivery order; `pending` holds replay
/// arrivals parked until the expected-event queue admits them.
pub(crate) struct Mailbox {
    pub queue: VecDeque<Envelope>,
    pub pending: VecDeque<Envelope>,
    /// True while the actor sits in the run queue or a worker is processing
    /// it; guarantees a single claimer.
    pub scheduled: bool,
    pub replay: Option<ReplayMb>,
}

pub(crate) struct ActorCell {
    pub id: ActorId,
    pub mailbox: Mutex<Mailbox>,
    pub behavior: Mutex<Box<dyn Behavior>>,
    /// Next external-data id to allocate for payloads this actor consumes.
    pub data_counter: AtomicU32,
    /// Next subtrace ordering value. Only the claiming worker touches it.
    pub subtrace_counter: AtomicU16,
}

impl ActorCell {
    pub(crate) fn new(
        id: ActorId,
        behavior: Box<dyn Behavior>,
        replay: Option<ReplayMb>,
        scheduled: bool,
    ) -> ActorCell {
        ActorCell {
            id,
            mailbox: Mutex::new(Mailbox {
                queue: VecDeque::new(),
                pending: VecDeque::new(),
                scheduled,
                replay,
            }),
            behavior: Mutex::new(behavior),
            data_counter: AtomicU32::new(0),
            subtrace_counter: AtomicU16::new(0),
        }
    }
}
