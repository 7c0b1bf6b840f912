//! The external-input workload: a scripted driver injects timed events into
//! a listener through a registered data source. Jobs make the listener
//! consult the environment (clock, RNG, filesystem probe) through system
//! calls, opaque requests are mined for their body, and one event resolves a
//! deadline promise. Everything external lands in the data file, so a replay
//! needs neither the script nor a live environment.

use std::collections::HashMap;
use std::sync::Arc;

use actreplay_core::external::{
    parse_script, DeliveryKind, Environment, EventKind, OpaqueRequest, ScriptedSource,
    PATH_EXISTS, RANDOM_U64, STRING_VALUE, WALL_CLOCK_MILLIS,
};
use actreplay_core::{Behavior, Turn, TurnError, Value};

use crate::sink::Sink;

const JOB: u8 = 1;
const DEADLINE: u8 = 2;
const RPC: u8 = 3;

fn kinds() -> HashMap<u8, EventKind> {
    HashMap::from([
        (JOB, EventKind::new("job", DeliveryKind::Message)),
        (DEADLINE, EventKind::new("deadline", DeliveryKind::Resolve)),
        (RPC, EventKind::new("rpc", DeliveryKind::Request)),
    ])
}

struct Listener {
    sink: Sink,
    env: Arc<dyn Environment>,
    jobs: Vec<String>,
}

impl Behavior for Listener {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "open" => {
                let source = ScriptedSource::new(kinds());
                let gateway = ctx.register_data_source(Arc::clone(&source) as _)?;
                source.bind_target(JOB, ctx.self_handle());
                source.bind_target(RPC, ctx.self_handle());
                let deadline = ctx.create_promise();
                source.bind_slot(DEADLINE, deadline.clone());
                ctx.when_resolved(&deadline, "deadline");
                let script = payload.as_str().expect("open carries the script");
                let events = parse_script(script).map_err(TurnError::handler)?;
                ctx.start_workload(&gateway, source.driver(events));
            }
            "job" => {
                let name = payload.as_str().expect("jobs are named").to_string();
                let env = Arc::clone(&self.env);
                let stamp = ctx.syscall(&WALL_CLOCK_MILLIS, || env.now_millis())?;
                let env = Arc::clone(&self.env);
                let shard = ctx.syscall(&RANDOM_U64, || env.random_u64())? % 16;
                let env = Arc::clone(&self.env);
                let spill =
                    ctx.syscall(&PATH_EXISTS, || env.path_exists("/var/spool/actreplay"))?;
                let mark = if spill { "+" } else { "" };
                self.jobs.push(format!("{name}:s{shard}{mark}"));
                self.sink.put("workload.jobs", self.jobs.join(","));
                self.sink.put("workload.last-stamp", stamp);
            }
            "rpc" => {
                let request = ctx.current_opaque::<OpaqueRequest>();
                let detail = ctx.syscall(&STRING_VALUE, || {
                    request
                        .expect("live rpc carries its request")
                        .body
                        .to_uppercase()
                })?;
                self.sink.put("workload.rpc", detail);
            }
            "deadline" => {
                let reason = payload.as_str().expect("deadline carries a reason");
                self.sink.put("workload.deadline", reason);
            }
            other => return Err(TurnError::handler(format!("listener got {other:?}"))),
        }
        Ok(Value::unit())
    }
}

pub(crate) fn launch(
    ctx: &mut Turn<'_>,
    sink: &Sink,
    env: &Arc<dyn Environment>,
    script: &str,
) -> Result<(), TurnError> {
    let listener = ctx.spawn(Box::new(Listener {
        sink: sink.clone(),
        env: Arc::clone(env),
        jobs: Vec::new(),
    }))?;
    ctx.send(&listener, "open", Value::str(script));
    Ok(())
}
