//! The classic actor microbenchmarks: two-party message bouncing, counter
//! flooding, a token ring, mass actor creation with a join, and dining
//! philosophers behind a fork arbitrator.

use actreplay_core::{ActorHandle, Behavior, Turn, TurnError, Value};

use crate::sink::Sink;

// ---------------------------------------------------------------------------
// ping-pong

struct Ping {
    sink: Sink,
    pong: ActorHandle,
    rounds: u32,
    seen: u32,
}

impl Ping {
    fn serve(&self, ctx: &mut Turn<'_>) {
        ctx.send(&self.pong, "ping", ctx.self_handle().into());
    }
}

impl Behavior for Ping {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "go" if self.rounds == 0 => self.sink.put("ping-pong.rounds", 0),
            "go" => self.serve(ctx),
            "pong" => {
                self.seen += 1;
                if self.seen == self.rounds {
                    self.sink.put("ping-pong.rounds", self.seen);
                } else {
                    self.serve(ctx);
                }
            }
            other => return Err(TurnError::handler(format!("ping got {other:?}"))),
        }
        Ok(Value::unit())
    }
}

struct Pong;

impl Behavior for Pong {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        _selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        let back = *payload.as_actor().expect("ping carries its sender");
        ctx.send(&back, "pong", Value::unit());
        Ok(Value::unit())
    }
}

pub(crate) fn ping_pong(ctx: &mut Turn<'_>, sink: &Sink, rounds: u32) -> Result<(), TurnError> {
    let pong = ctx.spawn(Box::new(Pong))?;
    let ping = ctx.spawn(Box::new(Ping {
        sink: sink.clone(),
        pong,
        rounds,
        seen: 0,
    }))?;
    ctx.send(&ping, "go", Value::unit());
    Ok(())
}

// ---------------------------------------------------------------------------
// counting

struct CountHolder {
    count: i64,
}

impl Behavior for CountHolder {
    fn handle(
        &mut self,
        _ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "inc" => {
                self.count += 1;
                Ok(Value::unit())
            }
            // The reply resolves the producer's promise with the total.
            "total" => Ok(Value::Int(self.count)),
            other => Err(TurnError::handler(format!("counter got {other:?}"))),
        }
    }
}

struct CountProducer {
    sink: Sink,
    counter: ActorHandle,
    messages: u32,
}

impl Behavior for CountProducer {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "go" => {
                for _ in 0..self.messages {
                    ctx.send(&self.counter, "inc", Value::unit());
                }
                let total = ctx.send(&self.counter, "total", Value::unit());
                ctx.when_resolved(&total, "report");
            }
            "report" => {
                let total = payload.as_int().expect("counter replies with its total");
                self.sink.put("counting.total", total);
            }
            other => return Err(TurnError::handler(format!("producer got {other:?}"))),
        }
        Ok(Value::unit())
    }
}

pub(crate) fn counting(ctx: &mut Turn<'_>, sink: &Sink, messages: u32) -> Result<(), TurnError> {
    let counter = ctx.spawn(Box::new(CountHolder { count: 0 }))?;
    let producer = ctx.spawn(Box::new(CountProducer {
        sink: sink.clone(),
        counter,
        messages,
    }))?;
    ctx.send(&producer, "go", Value::unit());
    Ok(())
}

// ---------------------------------------------------------------------------
// thread-ring

struct RingMember {
    sink: Sink,
    index: u32,
    next: Option<ActorHandle>,
    /// Token that arrived before this member learned its neighbor. The
    /// launcher's "next" wiring races against the predecessor's first pass.
    stash: Option<i64>,
}

impl RingMember {
    fn pass(&mut self, ctx: &mut Turn<'_>, hops: i64) {
        if hops == 0 {
            self.sink.put("thread-ring.stopped-at", self.index);
        } else {
            let next = self.next.as_ref().expect("pass only after wiring");
            ctx.send(next, "token", Value::Int(hops - 1));
        }
    }
}

impl Behavior for RingMember {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "next" => {
                self.next = payload.as_actor().copied();
                if let Some(hops) = self.stash.take() {
                    self.pass(ctx, hops);
                }
            }
            "token" => {
                let hops = payload.as_int().expect("token carries its hop budget");
                if self.next.is_none() && hops > 0 {
                    self.stash = Some(hops);
                } else {
                    self.pass(ctx, hops);
                }
            }
            other => return Err(TurnError::handler(format!("ring member got {other:?}"))),
        }
        Ok(Value::unit())
    }
}

pub(crate) fn thread_ring(
    ctx: &mut Turn<'_>,
    sink: &Sink,
    actors: u32,
    hops: u32,
) -> Result<(), TurnError> {
    let members: Vec<ActorHandle> = (0..actors)
        .map(|index| {
            ctx.spawn(Box::new(RingMember {
                sink: sink.clone(),
                index,
                next: None,
                stash: None,
            }))
        })
        .collect::<Result<_, _>>()?;
    for (i, member) in members.iter().enumerate() {
        let next = members[(i + 1) % members.len()];
        ctx.send(member, "next", next.into());
    }
    ctx.send(&members[0], "token", Value::Int(i64::from(hops)));
    Ok(())
}

// ---------------------------------------------------------------------------
// fork-join

struct JoinCollector {
    sink: Sink,
    expected: u32,
    reports: u32,
    sum: i64,
}

impl Behavior for JoinCollector {
    fn handle(
        &mut self,
        _ctx: &mut Turn<'_>,
        _selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        self.sum += payload.as_int().expect("workers report integers");
        self.reports += 1;
        if self.reports == self.expected {
            self.sink.put("fork-join.done", self.reports);
            self.sink.put("fork-join.sum", self.sum);
        }
        Ok(Value::unit())
    }
}

struct ForkWorker;

impl Behavior for ForkWorker {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        _selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        let index = payload.item(0).and_then(Value::as_int).expect("work index");
        let collector = *payload
            .item(1)
            .and_then(Value::as_actor)
            .expect("collector handle");
        ctx.send(&collector, "done", Value::Int(index * index));
        Ok(Value::unit())
    }
}

pub(crate) fn fork_join(ctx: &mut Turn<'_>, sink: &Sink, actors: u32) -> Result<(), TurnError> {
    let collector = ctx.spawn(Box::new(JoinCollector {
        sink: sink.clone(),
        expected: actors,
        reports: 0,
        sum: 0,
    }))?;
    for index in 0..actors {
        let worker = ctx.spawn(Box::new(ForkWorker))?;
        ctx.send(
            &worker,
            "work",
            Value::tuple([Value::Int(i64::from(index)), collector.into()]),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// philosophers

struct ForkArbitrator {
    in_use: Vec<bool>,
}

impl Behavior for ForkArbitrator {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        let seats = self.in_use.len();
        match selector {
            "request" => {
                let seat = payload.item(0).and_then(Value::as_int).unwrap() as usize;
                let diner = *payload.item(1).and_then(Value::as_actor).unwrap();
                let (left, right) = (seat, (seat + 1) % seats);
                if self.in_use[left] || self.in_use[right] {
                    ctx.send(&diner, "busy", Value::unit());
                } else {
                    self.in_use[left] = true;
                    self.in_use[right] = true;
                    ctx.send(&diner, "eat", Value::unit());
                }
            }
            "release" => {
                let seat = payload.as_int().unwrap() as usize;
                self.in_use[seat] = false;
                self.in_use[(seat + 1) % seats] = false;
            }
            other => return Err(TurnError::handler(format!("arbitrator got {other:?}"))),
        }
        Ok(Value::unit())
    }
}

struct Philosopher {
    seat: u32,
    arbitrator: ActorHandle,
    collector: ActorHandle,
    remaining: u32,
    eaten: i64,
    denials: i64,
}

impl Philosopher {
    fn request(&self, ctx: &mut Turn<'_>) {
        ctx.send(
            &self.arbitrator,
            "request",
            Value::tuple([Value::Int(i64::from(self.seat)), ctx.self_handle().into()]),
        );
    }
}

impl Behavior for Philosopher {
    fn handle(
        &mut self,
        ctx: &mut Turn<'_>,
        selector: &str,
        _payload: Value,
    ) -> Result<Value, TurnError> {
        match selector {
            "sit" if self.remaining == 0 => {
                let report = Value::tuple([Value::Int(0), Value::Int(0)]);
                ctx.send(&self.collector, "done", report);
            }
            "sit" => self.request(ctx),
            "busy" => {
                self.denials += 1;
                self.request(ctx);
            }
            "eat" => {
                self.eaten += 1;
                self.remaining -= 1;
                ctx.send(
                    &self.arbitrator,
                    "release",
                    Value::Int(i64::from(self.seat)),
                );
                if self.remaining == 0 {
                    ctx.send(
                        &self.collector,
                        "done",
                        Value::tuple([Value::Int(self.eaten), Value::Int(self.denials)]),
                    );
                } else {
                    self.request(ctx);
                }
            }
            other => return Err(TurnError::handler(format!("philosopher got {other:?}"))),
        }
        Ok(Value::unit())
    }
}

struct MealCollector {
    sink: Sink,
    expected: u32,
    reports: u32,
    meals: i64,
    denials: i64,
}

impl Behavior for MealCollector {
    fn handle(
        &mut self,
        _ctx: &mut Turn<'_>,
        _selector: &str,
        payload: Value,
    ) -> Result<Value, TurnError> {
        self.meals += payload.item(0).and_then(Value::as_int).unwrap();
        self.denials += payload.item(1).and_then(Value::as_int).unwrap();
        self.reports += 1;
        if self.reports == self.expected {
            self.sink.put("philosophers.meals", self.meals);
            // Denied requests retry, so this count is schedule-dependent:
            // it varies between recordings but must be exact under replay.
            self.sink.put("philosophers.denials", self.denials);
        }
        Ok(Value::unit())
    }
}

pub(crate) fn philosophers(
    ctx: &mut Turn<'_>,
    sink: &Sink,
    seats: u32,
    rounds: u32,
) -> Result<(), TurnError> {
    let arbitrator = ctx.spawn(Box::new(ForkArbitrator {
        in_use: vec![false; seats as usize],
    }))?;
    let collector = ctx.spawn(Box::new(MealCollector {
        sink: sink.clone(),
        expected: seats,
        reports: 0,
        meals: 0,
        denials: 0,
    }))?;
    for seat in 0..seats {
        let diner = ctx.spawn(Box::new(Philosopher {
            seat,
            arbitrator,
            collector,
            remaining: rounds,
            eaten: 0,
            denials: 0,
        }))?;
        ctx.send(&diner, "sit", Value::unit());
    }
    Ok(())
}
