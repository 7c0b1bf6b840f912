//! Promises: single-assignment result slots that accept eventual sends and
//! resolution callbacks before (or after) they hold a value.
//!
//! Resolving a promise with another promise forwards it: the waiters migrate
//! to the inner promise and the outer one becomes a link. Resolution never
//! stores a promise as a final value, so a resolved promise always holds a
//! plain value plus the id of the actor that resolved it — exactly the pair
//! the trace needs to reproduce resolution deliveries.

use std::fmt;
use std::sync::{Arc, Mutex};

use crate::ids::ActorId;
use crate::value::Value;

pub(crate) struct PromiseShared {
    pub state: Mutex<PromiseState>,
}

pub(crate) enum PromiseState {
    Unresolved {
        queued: Vec<QueuedSend>,
        callbacks: Vec<QueuedCallback>,
    },
    /// Resolved with another promise; all operations follow the link.
    Forwarded(Arc<PromiseShared>),
    Resolved {
        value: Value,
        resolver: ActorId,
    },
}

/// A send made against an unresolved promise, delivered to whatever actor the
/// promise eventually designates.
pub(crate) struct QueuedSend {
    pub sender: ActorId,
    pub selector: Arc<str>,
    pub payload: Value,
    pub result: Option<Arc<PromiseShared>>,
}

/// A `when_resolved` registration: `registrant` receives the resolution value
/// under `selector` once the promise holds one.
pub(crate) struct QueuedCallback {
    pub registrant: ActorId,
    pub selector: Arc<str>,
}

/// User-facing reference to a promise. Cloning shares the same slot.
#[derive(Clone)]
pub struct PromiseHandle {
    pub(crate) shared: Arc<PromiseShared>,
}

impl PromiseHandle {
    pub(crate) fn new() -> PromiseHandle {
        PromiseHandle {
            shared: Arc::new(PromiseShared {
                state: Mutex::new(PromiseState::Unresolved {
                    queued: Vec::new(),
                    callbacks: Vec::new(),
                }),
            }),
        }
    }

    /// Identity comparison: do both handles name the same slot?
    pub fn same_promise(&self, other: &PromiseHandle) -> bool {
        Arc::ptr_eq(&self.shared, &other.shared)
    }
}

impl fmt::Debug for PromiseHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PromiseHandle")
    }
}

/// Chase `Forwarded` links to the promise that actually holds (or will hold)
/// the value. Link chains are short by construction; the hop cap only guards
/// against a racing writer building a pathological chain.
pub(crate) fn follow(promise: &Arc<PromiseShared>) -> Arc<PromiseShared> {
    let mut current = Arc::clone(promise);
    for _ in 0..64 {
        let next = {
            let st = current.state.lock().unwrap();
            match &*st {
                PromiseState::Forwarded(next) => Some(Arc::clone(next)),
                _ => None,
            }
        };
        match next {
            Some(n) => current = n,
            None => return current,
        }
    }
    log::error!("promise forwarding chain exceeded 64 links");
    current
}
