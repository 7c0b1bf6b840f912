//! An embeddable actor runtime with deterministic record & replay.
//!
//! Actors are single-threaded event loops with isolated state; they interact
//! only through asynchronous message sends and promises, and any number of
//! them execute in parallel on a worker pool. That model makes message
//! *content* deterministic given message *order* — so a recording does not
//! store payloads at all. The trace captures, per actor, the order in which
//! messages arrived (by sender), promise resolutions were delivered (by
//! sender and resolver), actors were spawned, and system calls ran; a
//! separate data file stores just the bytes that crossed the system boundary
//! (system-call results and external event payloads). Replay re-executes the
//! program, forcing each actor to consume deliveries in recorded order and
//! feeding recorded bytes back in place of the outside world.
//!
//! Quick tour:
//!
//! - [`runtime::ActorSystem`] — build a plain, recording, or replaying
//!   system; [`runtime::Turn`] is the API behaviors use inside a turn.
//! - [`trace`] — the on-disk format: entry codec, subtrace ordering, data
//!   file.
//! - [`record`] — buffered capture with a single writer thread.
//! - [`replay`] — trace loading and validation.
//! - [`external`] — system-call sites, environments, and data sources that
//!   reproduce external events during replay.

pub mod error;
pub mod external;
pub mod ids;
pub mod record;
pub mod replay;
pub mod runtime;
pub mod trace;
mod value;

pub use error::{
    CorruptionError, DivergenceError, FormatError, RecorderError, ReplayError, RunError,
    StallReport, StuckActor, TurnError,
};
pub use ids::{ActorId, DataId, MAIN_ACTOR};
pub use record::RecorderConfig;
pub use replay::{load_trace, ExpectedEvent, LoadedTrace};
pub use runtime::{
    ActorHandle, ActorSystem, Behavior, PromiseHandle, RunSummary, RuntimeConfig, ShutdownReport,
    Turn,
};
pub use value::Value;
