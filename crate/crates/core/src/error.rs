//! Error taxonomy. Format problems (unreadable bytes), corruption (readable
//! bytes that are internally inconsistent), divergence (the re-executed
//! program did something the trace never recorded) and stalls (replay cannot
//! make progress) are distinct failure classes; tooling maps them to distinct
//! exit codes.

use std::fmt;

use thiserror::Error;

use crate::ids::{ActorId, DataId};

/// A byte stream that cannot be decoded at all.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad file magic: expected {expected:?}, found {found:02x?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },
    #[error("truncated entry at offset {offset}: missing {field}")]
    Truncated { offset: usize, field: &'static str },
    #[error("unknown entry type code {code} at offset {offset}")]
    UnknownEntryType { offset: usize, code: u8 },
    #[error("reserved header bits set (byte {byte:#04x}) at offset {offset}")]
    ReservedBits { offset: usize, byte: u8 },
    #[error("external flag not allowed on {kind} entry at offset {offset}")]
    UnexpectedExternalFlag { offset: usize, kind: &'static str },
    #[error("non-minimal id width at offset {offset}: encoded {encoded} bytes, ids need {required}")]
    NonMinimalWidth { offset: usize, encoded: usize, required: usize },
    #[error("system-call entry at offset {offset} must use width code 0")]
    WidthNotAllowed { offset: usize },
    #[error("entry stream does not begin with a subtrace start (offset {offset})")]
    LeadingEntryNotSubtraceStart { offset: usize },
    #[error("duplicate data entry for ({origin}, {data})")]
    DuplicateDataEntry { origin: ActorId, data: DataId },
}

/// Decodable data that is internally inconsistent, or references that cannot
/// be satisfied during replay.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorruptionError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{actor}: duplicate subtrace counter {counter}")]
    SubtraceDuplicate { actor: ActorId, counter: u16 },
    #[error("{actor}: subtrace ordering gap, counter {missing} missing")]
    SubtraceGap { actor: ActorId, missing: u16 },
    #[error("{actor}: subtrace ordering ambiguous (full counter cycle)")]
    SubtraceAmbiguous { actor: ActorId },
    #[error("{actor}: first subtrace counter is {first}, expected 0")]
    SubtraceFirstNotZero { actor: ActorId, first: u16 },
    #[error("{actor} has recorded events but no creation record")]
    MissingCreation { actor: ActorId },
    #[error("{child} recorded as a child of more than one spawn")]
    DuplicateChild { child: ActorId },
    #[error("the main actor (id 0) cannot appear as a spawned child")]
    MainAsChild,
    #[error("recorded actor ids are not contiguous: {count} actors but id {max} present")]
    NonContiguousIds { count: u32, max: u32 },
    #[error("creation record for {child} disagrees with the expected-event queue of {parent}")]
    ChildRecordMismatch { parent: ActorId, child: ActorId },
    #[error("missing data entry for ({origin}, {data})")]
    MissingData { origin: ActorId, data: DataId },
    #[error("payload for ({origin}, {data}) failed to decode: {detail}")]
    DataDecode { origin: ActorId, data: DataId, detail: String },
    #[error("{actor} expects an external event but no data source is registered for it")]
    UnknownSource { actor: ActorId },
    #[error("external event for {actor} was already simulated; trace references it twice")]
    ResimulatedEvent { actor: ActorId },
    #[error("external event simulation failed for {actor}: {detail}")]
    SimulationFailed { actor: ActorId, detail: String },
}

/// The re-executed program departed from what the trace recorded.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DivergenceError {
    #[error("{parent} spawned more actors than were recorded")]
    SpawnOverflow { parent: ActorId },
    #[error("{parent} spawned an actor where the trace expects {expected}")]
    UnexpectedSpawn { parent: ActorId, expected: String },
    #[error("{actor} executed a system call where the trace expects {expected}")]
    UnexpectedSyscall { actor: ActorId, expected: String },
    #[error("a turn of {actor} ended before consuming expected {expected}")]
    TurnUnderrun { actor: ActorId, expected: String },
}

/// One actor that still expects events after the replay scheduler ran dry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StuckActor {
    pub actor: ActorId,
    /// False when the actor was never spawned during replay.
    pub spawned: bool,
    /// Events left in the expected queue.
    pub remaining: usize,
    /// Description of the head expected event.
    pub head: String,
    /// Descriptions of messages parked at the actor, in arrival order.
    pub pending: Vec<String>,
}

/// Replay reached quiescence with expected events left over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StallReport {
    pub stuck: Vec<StuckActor>,
}

impl fmt::Display for StallReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "replay stalled; {} actor(s) still expect events:", self.stuck.len())?;
        for s in &self.stuck {
            writeln!(
                f,
                "  {}{}: {} event(s) left, head = {}",
                s.actor,
                if s.spawned { "" } else { " (never spawned)" },
                s.remaining,
                s.head
            )?;
            for p in &s.pending {
                writeln!(f, "    parked: {p}")?;
            }
        }
        Ok(())
    }
}

impl std::error::Error for StallReport {}

/// Top-level replay failure.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Stall(#[from] StallReport),
}

impl From<FormatError> for ReplayError {
    fn from(e: FormatError) -> ReplayError {
        ReplayError::Corruption(e.into())
    }
}

/// Errors surfaced to a running turn. Handler errors are logged and the turn
/// is abandoned; replay errors additionally abort the whole replay.
#[derive(Debug, Error)]
pub enum TurnError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("promise already resolved")]
    DoubleResolve,
    #[error("{0}")]
    Handler(String),
}

impl TurnError {
    pub fn handler(msg: impl Into<String>) -> TurnError {
        TurnError::Handler(msg.into())
    }
}

/// Recorder I/O failure, surfaced when the recording is finalized.
#[derive(Debug, Error)]
pub enum RecorderError {
    #[error("trace I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace writer thread terminated abnormally")]
    WriterPanicked,
}

/// Why a run ended abnormally.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("recording aborted: {0}")]
    Recording(String),
}
