use std::any::Any;
use std::sync::Arc;

use crate::ids::ActorId;
use crate::record::DataPayload;
use crate::runtime::promise::PromiseShared;
use crate::value::Value;

/// How a delivery entered the system: a plain asynchronous send, or the
/// consequence of a promise resolution (which additionally names the actor
/// that resolved the promise).
pub(crate) enum EnvelopeKind {
    Message,
    PromiseMsg { resolver: ActorId },
}

/// Marks a delivery whose content came from outside the actor system.
///
/// `Fresh` carries the payload on its way to the data file during recording;
/// `Replayed` carries the recorded bytes back out of the store so a
/// re-recording can write an identical data entry.
pub(crate) enum ExternalStamp {
    Fresh { event_type: u8, payload: DataPayload },
    Replayed { event_type: u8, bytes: Arc<[u8]> },
}

impl ExternalStamp {
    pub(crate) fn event_type(&self) -> u8 {
        match self {
            ExternalStamp::Fresh { event_type, .. } => *event_type,
            ExternalStamp::Replayed { event_type, .. } => *event_type,
        }
    }
}

/// One queued delivery. `result` is the promise that the receiving turn's
/// return value resolves; `opaque` is an optional attachment a data source
/// can hang rich request state on without it ever entering the trace.
pub(crate) struct Envelope {
    pub kind: EnvelopeKind,
    pub sender: ActorId,
    pub selector: Arc<str>,
    pub payload: Value,
    pub result: Option<Arc<PromiseShared>>,
    pub external: Option<ExternalStamp>,
    pub opaque: Option<Arc<dyn Any + Send + Sync>>,
}

impl Envelope {
    pub(crate) fn describe(&self) -> String {
        let ext = if self.external.is_some() {
            " (external)"
        } else {
            ""
        };
        match &self.kind {
            EnvelopeKind::Message => {
                format!("message '{}' from {}{ext}", self.selector, self.sender)
            }
            EnvelopeKind::PromiseMsg { resolver } => format!(
                "promise message '{}' from {} resolved by {resolver}{ext}",
                self.selector, self.sender
            ),
        }
    }
}
