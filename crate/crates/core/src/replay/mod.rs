//! Trace loading: turns the two recorded files into per-actor expected-event
//! queues, a spawn family tree and the external payload store, validating the
//! global invariants a well-formed recording must satisfy.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::error::CorruptionError;
use crate::ids::{ActorId, DataId, MAIN_ACTOR};
use crate::runtime::envelope::{Envelope, EnvelopeKind};
use crate::trace::{
    group_subtraces, read_data_file, read_trace, reconstruct_subtrace_order, DataStore,
    ExternalMarker, TraceEntry,
};

/// One event an actor must consume during replay, in recorded order. Message
/// and promise-message events admit deliveries; spawn and system-call events
/// are consumed by the actor's own actions mid-turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExpectedEvent {
    Spawn {
        child: ActorId,
    },
    Message {
        sender: ActorId,
        external: Option<ExternalMarker>,
    },
    PromiseMsg {
        sender: ActorId,
        resolver: ActorId,
        external: Option<ExternalMarker>,
    },
    Syscall {
        data_id: DataId,
    },
}

impl ExpectedEvent {
    fn from_entry(entry: &TraceEntry) -> Option<ExpectedEvent> {
        match entry {
            TraceEntry::SubtraceStart { .. } => None,
            TraceEntry::ActorCreation { child } => Some(ExpectedEvent::Spawn { child: *child }),
            TraceEntry::Message { sender, external } => Some(ExpectedEvent::Message {
                sender: *sender,
                external: *external,
            }),
            TraceEntry::PromiseMessage {
                sender,
                resolver,
                external,
            } => Some(ExpectedEvent::PromiseMsg {
                sender: *sender,
                resolver: *resolver,
                external: *external,
            }),
            TraceEntry::SystemCall { data_id } => Some(ExpectedEvent::Syscall {
                data_id: *data_id,
            }),
        }
    }

    /// True when `env` is the delivery this event describes. Data ids are
    /// deliberately not compared — they name the payload, they do not
    /// identify the event; the payload itself is looked up by the recorded
    /// id, so a wrong id surfaces as a missing or mismatched payload instead.
    pub(crate) fn matches(&self, env: &Envelope) -> bool {
        match (self, &env.kind) {
            (
                ExpectedEvent::Message { sender, external },
                EnvelopeKind::Message,
            ) => *sender == env.sender && external_compatible(external, env),
            (
                ExpectedEvent::PromiseMsg {
                    sender,
                    resolver,
                    external,
                },
                EnvelopeKind::PromiseMsg { resolver: got },
            ) => *sender == env.sender && *resolver == *got && external_compatible(external, env),
            _ => false,
        }
    }

    /// For external delivery events: (event type, data id, the actor id the
    /// data source is registered under). For promise messages that actor is
    /// the resolver; for plain messages it is the sender.
    pub(crate) fn external_parts(&self) -> Option<(u8, DataId, ActorId)> {
        match self {
            ExpectedEvent::Message {
                sender,
                external: Some(m),
            } => Some((m.event_type, m.data_id, *sender)),
            ExpectedEvent::PromiseMsg {
                resolver,
                external: Some(m),
                ..
            } => Some((m.event_type, m.data_id, *resolver)),
            _ => None,
        }
    }

    /// The data id a matched delivery should re-record, if any.
    pub(crate) fn data_id(&self) -> Option<DataId> {
        match self {
            ExpectedEvent::Message { external, .. }
            | ExpectedEvent::PromiseMsg { external, .. } => external.map(|m| m.data_id),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ExpectedEvent::Spawn { child } => format!("spawn of {child}"),
            ExpectedEvent::Message { sender, external: None } => {
                format!("message from {sender}")
            }
            ExpectedEvent::Message {
                sender,
                external: Some(m),
            } => format!(
                "external message type {} from {sender} ({})",
                m.event_type, m.data_id
            ),
            ExpectedEvent::PromiseMsg {
                sender,
                resolver,
                external: None,
            } => format!("promise message from {sender} resolved by {resolver}"),
            ExpectedEvent::PromiseMsg {
                sender,
                resolver,
                external: Some(m),
            } => format!(
                "external promise message type {} from {sender} resolved by {resolver} ({})",
                m.event_type, m.data_id
            ),
            ExpectedEvent::Syscall { data_id } => format!("system call ({data_id})"),
        }
    }
}

fn external_compatible(expected: &Option<ExternalMarker>, env: &Envelope) -> bool {
    match (expected, &env.external) {
        (None, None) => true,
        (Some(m), Some(stamp)) => m.event_type == stamp.event_type(),
        _ => false,
    }
}

/// A validated recording, ready to drive a replaying actor system.
#[derive(Debug)]
pub struct LoadedTrace {
    /// Expected-event queue per actor, in per-actor execution order.
    pub queues: HashMap<ActorId, VecDeque<ExpectedEvent>>,
    /// Spawn tree: parent to children, in the parent's spawn order.
    pub children: BTreeMap<ActorId, Vec<ActorId>>,
    /// Total number of actors the recorded run created (including main).
    pub actor_count: u32,
    /// External payloads keyed by (consuming actor, data id).
    pub data: DataStore,
}

/// Parse, order and cross-validate the trace and data files.
pub fn load_trace(trace_bytes: &[u8], data_bytes: &[u8]) -> Result<LoadedTrace, CorruptionError> {
    let entries = read_trace(trace_bytes)?;
    let subtraces = group_subtraces(&entries)?;
    let ordered = reconstruct_subtrace_order(subtraces)?;

    let mut queues: HashMap<ActorId, VecDeque<ExpectedEvent>> = HashMap::new();
    let mut children: BTreeMap<ActorId, Vec<ActorId>> = BTreeMap::new();
    let mut created: HashSet<ActorId> = HashSet::new();
    let mut max_id = MAIN_ACTOR.0;

    for (actor, subs) in &ordered {
        let first = subs.first().expect("reconstruction yields no empty actors");
        if first.ordering != 0 {
            return Err(CorruptionError::SubtraceFirstNotZero {
                actor: *actor,
                first: first.ordering,
            });
        }
        let queue = queues.entry(*actor).or_default();
        for sub in subs {
            for event in &sub.events {
                if let TraceEntry::ActorCreation { child } = event {
                    if *child == MAIN_ACTOR {
                        return Err(CorruptionError::MainAsChild);
                    }
                    if !created.insert(*child) {
                        return Err(CorruptionError::DuplicateChild { child: *child });
                    }
                    children.entry(*actor).or_default().push(*child);
                    max_id = max_id.max(child.0);
                }
                if let Some(e) = ExpectedEvent::from_entry(event) {
                    queue.push_back(e);
                }
            }
        }
    }

    let count = created.len() as u32 + 1; // children plus main
    if max_id + 1 != count {
        return Err(CorruptionError::NonContiguousIds { count, max: max_id });
    }
    for actor in queues.keys() {
        if *actor != MAIN_ACTOR && !created.contains(actor) {
            return Err(CorruptionError::MissingCreation { actor: *actor });
        }
    }

    let data = read_data_file(data_bytes)?;
    Ok(LoadedTrace {
        queues,
        children,
        actor_count: count,
        data,
    })
}
