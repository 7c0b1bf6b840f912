//! The benchmark programs: small actor topologies that run to quiescence and
//! publish their observable outcomes into a [`Sink`].
//!
//! Every run uses the same root behavior. [`Launcher`] snapshots the
//! benchmark configuration through a system call before doing anything else,
//! so a recording carries its own parameters in the data file and a replay
//! rebuilds the exact topology without seeing the original command line.

mod race;
mod micro;
mod workload;

use std::sync::Arc;

use actreplay_core::external::{decode_string, encode_string, Environment, SyscallSite};
use actreplay_core::{Behavior, Turn, TurnError, Value};

use crate::config::BenchConfig;
use crate::sink::Sink;

/// Site recording the launcher's configuration snapshot.
pub static BENCH_CONFIG: SyscallSite<String> = SyscallSite {
    name: "bench-config",
    encode: encode_string,
    decode: decode_string,
};

/// Root behavior of every benchmark run. Reacts to a single `"run"` message.
pub struct Launcher {
    sink: Sink,
    env: Arc<dyn Environment>,
    /// Present on live runs; a replay takes the config from the recorded
    /// snapshot instead.
    live: Option<BenchConfig>,
}

impl Launcher {
    pub fn live(config: BenchConfig, sink: Sink, env: Arc<dyn Environment>) -> Launcher {
        Launcher {
            sink,
            env,
            live: Some(config),
        }
    }

    /// Root behavior for a replay: every parameter comes from the recording.
    pub fn for_replay(sink: Sink, env: Arc<dyn Environment>) -> Launcher {
        Launcher {
            sink,
            env,
            live: None,
        }
    }
}

impl Behavior for Launcher {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        if selector != "run" {
            return Err(TurnError::handler(format!(
                "launcher got unexpected selector {selector:?}"
            )));
        }
        let live = self.live.take();
        let snapshot = ctx.syscall(&BENCH_CONFIG, || {
            let config = live.as_ref().expect("live run carries its config");
            serde_json::to_string(config).expect("config serializes")
        })?;
        let config: BenchConfig = serde_json::from_str(&snapshot)
            .map_err(|e| TurnError::handler(format!("bad config snapshot: {e}")))?;
        match config {
            BenchConfig::PingPong { rounds } => micro::ping_pong(ctx, &self.sink, rounds)?,
            BenchConfig::Counting { messages } => micro::counting(ctx, &self.sink, messages)?,
            BenchConfig::ThreadRing { actors, hops } => {
                micro::thread_ring(ctx, &self.sink, actors, hops)?
            }
            BenchConfig::ForkJoin { actors } => micro::fork_join(ctx, &self.sink, actors)?,
            BenchConfig::Philosophers { seats, rounds } => {
                micro::philosophers(ctx, &self.sink, seats, rounds)?
            }
            BenchConfig::PromiseRace => race::launch(ctx, &self.sink)?,
            BenchConfig::Workload { script } => {
                workload::launch(ctx, &self.sink, &self.env, &script)?
            }
        }
        Ok(Value::unit())
    }
}
