//! The promise-race scenario: two contenders race to reach a judge, and the
//! judge resolves a promise with whichever claim arrives first. Randomized
//! delays make the recorded order genuinely nondeterministic; a replay must
//! reproduce whichever order the recording captured, including the resolver
//! identity on the winner callback.

use std::thread;
use std::time::Duration;

use actreplay_core::{ActorHandle, Behavior, PromiseHandle, Turn, TurnError, Value};
use rand::Rng;

use crate::sink::Sink;

struct RaceDriver {
    sink: Sink,
}

impl Behavior for RaceDriver {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "start" => {
                let won = ctx.create_promise();
                ctx.when_resolved(&won, "winner");
                let judge = ctx.spawn(Box::new(Judge {
                    sink: self.sink.clone(),
                    won,
                    arrived: Vec::new(),
                }))?;
                for tag in ["m1", "m2"] {
                    let contender = ctx.spawn(Box::new(Contender { tag, judge }))?;
                    ctx.send(&contender, "go", Value::unit());
                }
            }
            "winner" => {
                let tag = payload.as_str().expect("judge resolves with a tag");
                self.sink.put("race.winner", tag);
            }
            other => return Err(TurnError::handler(format!("driver got {other:?}"))),
        }
        Ok(Value::unit())
    }
}

struct Judge {
    sink: Sink,
    won: PromiseHandle,
    arrived: Vec<String>,
}

impl Behavior for Judge {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        _selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        if self.arrived.is_empty() {
            ctx.resolve(&self.won, payload.clone())?;
        }
        self.arrived
            .push(payload.as_str().expect("claims are tags").to_string());
        if self.arrived.len() == 2 {
            self.sink.put("race.order", self.arrived.join(","));
        }
        Ok(Value::unit())
    }
}

struct Contender {
    tag: &'static str,
    judge: ActorHandle,
}

impl Behavior for Contender {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        _selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        // The delay only exists to randomize the recorded arrival order;
        // during replay the order comes from the trace, so don't burn time.
        if !ctx.is_replay() {
            let pause = rand::thread_rng().gen_range(0..2_000);
            thread::sleep(Duration::from_micros(pause));
        }
        ctx.send(&self.judge, "claim", Value::str(self.tag));
        Ok(Value::unit())
    }
}

pub(crate) fn launch(ctx: &mut Turn<'_>, sink: &Sink) -> Result<(), TurnError> {
    let driver = ctx.spawn(Box::new(RaceDriver { sink: sink.clone() }))?;
    ctx.send(&driver, "start", Value::unit());
    Ok(())
}
