//! The actor runtime: isolated actors processing one message per turn,
//! communicating through asynchronous sends and promises, scheduled by a
//! small worker pool. The same scheduler runs live (optionally recording) and
//! under replay, where recorded per-actor delivery order is enforced instead
//! of rediscovered.

pub(crate) mod actor;
pub(crate) mod envelope;
pub(crate) mod promise;
pub(crate) mod system;
pub(crate) mod turn;

pub use actor::{ActorHandle, Behavior};
pub use promise::PromiseHandle;
pub use system::{ActorSystem, RunSummary, RuntimeConfig, ShutdownReport};
pub use turn::Turn;
