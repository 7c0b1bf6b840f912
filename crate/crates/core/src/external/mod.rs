//! Everything that lets nondeterministic input cross the actor-system
//! boundary exactly once.
//!
//! A [`SyscallSite`] pairs an encoder and decoder for one kind of
//! environment query; [`Turn::syscall`](crate::runtime::Turn::syscall)
//! performs it live and replays it from the data file. A [`DataSource`]
//! reproduces asynchronous external events (messages, promise resolutions)
//! from their recorded payloads. [`ScriptedSource`] is a ready-made source
//! driven by a timed script, used by workload-style programs.

use std::any::Any;
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::ids::ActorId;
use crate::record::DataPayload;
use crate::runtime::envelope::{Envelope, EnvelopeKind, ExternalStamp};
use crate::runtime::promise::PromiseHandle;
use crate::runtime::system::SystemShared;
use crate::runtime::ActorHandle;
use crate::value::Value;

/// One kind of environment query: a name for diagnostics plus the codec that
/// moves its result through the data file. Programs can define their own
/// sites; the codec must round-trip (`decode(encode(v)) == v`).
pub struct SyscallSite<T> {
    pub name: &'static str,
    pub encode: fn(&T) -> Vec<u8>,
    pub decode: fn(&[u8]) -> Result<T, String>,
}

fn encode_bool(v: &bool) -> Vec<u8> {
    vec![u8::from(*v)]
}

fn decode_bool(bytes: &[u8]) -> Result<bool, String> {
    match bytes {
        [0] => Ok(false),
        [1] => Ok(true),
        _ => Err(format!("expected one boolean byte, got {bytes:02x?}")),
    }
}

fn encode_u64(v: &u64) -> Vec<u8> {
    v.to_le_bytes().to_vec()
}

fn decode_u64(bytes: &[u8]) -> Result<u64, String> {
    let arr: [u8; 8] = bytes
        .try_into()
        .map_err(|_| format!("expected 8 bytes, got {}", bytes.len()))?;
    Ok(u64::from_le_bytes(arr))
}

pub fn encode_string(v: &String) -> Vec<u8> {
    v.as_bytes().to_vec()
}

pub fn decode_string(bytes: &[u8]) -> Result<String, String> {
    String::from_utf8(bytes.to_vec()).map_err(|e| e.to_string())
}

pub static PATH_EXISTS: SyscallSite<bool> = SyscallSite {
    name: "path-exists",
    encode: encode_bool,
    decode: decode_bool,
};

pub static WALL_CLOCK_MILLIS: SyscallSite<u64> = SyscallSite {
    name: "wall-clock-millis",
    encode: encode_u64,
    decode: decode_u64,
};

pub static RANDOM_U64: SyscallSite<u64> = SyscallSite {
    name: "random-u64",
    encode: encode_u64,
    decode: decode_u64,
};

pub static STRING_VALUE: SyscallSite<String> = SyscallSite {
    name: "string-value",
    encode: encode_string,
    decode: decode_string,
};

/// The ambient facilities a program may consult through system calls. Passing
/// a [`TripwireEnv`] during replay turns any accidental live query into a
/// loud failure instead of a silent divergence.
pub trait Environment: Send + Sync {
    fn now_millis(&self) -> u64;
    fn random_u64(&self) -> u64;
    fn path_exists(&self, path: &str) -> bool;
}

pub struct RealEnv {
    rng: Mutex<SmallRng>,
}

impl RealEnv {
    pub fn new() -> RealEnv {
        RealEnv {
            rng: Mutex::new(SmallRng::from_entropy()),
        }
    }
}

impl Default for RealEnv {
    fn default() -> RealEnv {
        RealEnv::new()
    }
}

impl Environment for RealEnv {
    fn now_millis(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis() as u64
    }

    fn random_u64(&self) -> u64 {
        self.rng.lock().unwrap().gen()
    }

    fn path_exists(&self, path: &str) -> bool {
        Path::new(path).exists()
    }
}

/// Panics on any access. Hand this to programs being replayed: recorded data
/// must satisfy every query, so a trip proves the replay touched the world.
pub struct TripwireEnv;

impl Environment for TripwireEnv {
    fn now_millis(&self) -> u64 {
        panic!("environment accessed during replay: now_millis");
    }

    fn random_u64(&self) -> u64 {
        panic!("environment accessed during replay: random_u64");
    }

    fn path_exists(&self, _path: &str) -> bool {
        panic!("environment accessed during replay: path_exists");
    }
}

/// What a [`DataSource`] did to reproduce an external event.
pub enum SimOutcome {
    /// Deliver this message (from the source, to the waiting actor) carrying
    /// the recorded payload.
    Deliver { selector: Arc<str>, payload: Value },
    /// The source re-performed the event through the context (for example by
    /// resolving a promise); the resulting deliveries are already in flight.
    Performed,
}

/// Runtime services available to [`DataSource::simulate`].
pub struct SimContext<'a> {
    shared: &'a Arc<SystemShared>,
    source: ActorId,
}

impl<'a> SimContext<'a> {
    pub(crate) fn new(shared: &'a Arc<SystemShared>, source: ActorId) -> SimContext<'a> {
        SimContext { shared, source }
    }

    /// Re-perform an external promise resolution with the recorded value.
    /// The deliveries it triggers carry the external mark, exactly as the
    /// original resolution's did.
    pub fn resolve_external(
        &mut self,
        slot: &PromiseHandle,
        value: Value,
        event_type: u8,
        bytes: &[u8],
    ) -> Result<(), String> {
        self.shared
            .resolve_promise(
                &slot.shared,
                value,
                self.source,
                Some((event_type, Arc::from(bytes))),
            )
            .map_err(|e| e.to_string())
    }
}

/// Reproduces external events during replay. Registered under an actor id
/// via [`Turn::register_data_source`](crate::runtime::Turn::register_data_source);
/// when replay needs an external event originating from that id, it hands the
/// source the recorded event type and payload bytes.
pub trait DataSource: Send + Sync {
    fn simulate(
        &self,
        sim: &mut SimContext<'_>,
        target: ActorId,
        event_type: u8,
        bytes: &[u8],
    ) -> Result<SimOutcome, String>;
}

/// Injection side of a workload driver (live runs only): pushes external
/// events into the system on behalf of a registered source.
pub struct ExternalEmitter {
    shared: Arc<SystemShared>,
    source: ActorId,
}

impl ExternalEmitter {
    pub(crate) fn new(shared: Arc<SystemShared>, source: ActorId) -> ExternalEmitter {
        ExternalEmitter { shared, source }
    }

    /// Deliver an external message. `bytes` is what the data file will hold;
    /// `payload` is its in-memory decoding (the two must correspond — replay
    /// rebuilds the payload from the bytes). An optional opaque attachment
    /// rides along for the handler to mine via system calls.
    pub fn emit_message(
        &self,
        target: &ActorHandle,
        selector: &str,
        event_type: u8,
        bytes: Vec<u8>,
        payload: Value,
        opaque: Option<Arc<dyn Any + Send + Sync>>,
    ) {
        self.shared.deliver(
            target.id(),
            Envelope {
                kind: EnvelopeKind::Message,
                sender: self.source,
                selector: Arc::from(selector),
                payload,
                result: None,
                external: Some(ExternalStamp::Fresh {
                    event_type,
                    payload: DataPayload::Bytes(bytes),
                }),
                opaque,
            },
        );
    }

    /// Resolve a promise from outside with `value` (encoded as `bytes`).
    pub fn emit_resolve(&self, slot: &PromiseHandle, event_type: u8, bytes: Vec<u8>, value: Value) {
        if let Err(e) = self.shared.resolve_promise(
            &slot.shared,
            value,
            self.source,
            Some((event_type, Arc::from(bytes.as_slice()))),
        ) {
            log::error!("external resolution failed: {e}");
        }
    }
}

/// How a scripted event reaches the program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeliveryKind {
    /// Plain external message to the bound target.
    Message,
    /// Resolve the bound promise slot with the payload.
    Resolve,
    /// Like `Message`, but carries an [`OpaqueRequest`] attachment whose
    /// details the handler pulls in lazily through system calls.
    Request,
}

/// Static description of one event type a [`ScriptedSource`] can produce.
#[derive(Clone)]
pub struct EventKind {
    pub selector: Arc<str>,
    pub delivery: DeliveryKind,
}

impl EventKind {
    pub fn new(selector: &str, delivery: DeliveryKind) -> EventKind {
        EventKind {
            selector: Arc::from(selector),
            delivery,
        }
    }
}

/// Rich request state attached to `Request` events. Never serialized — the
/// trace stays payload-free and handlers extract what they need through
/// system calls, which record only the extracted bytes.
pub struct OpaqueRequest {
    pub body: String,
}

/// One line of a workload script: wait, then fire an event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptEvent {
    pub delay_ms: u64,
    pub event_type: u8,
    pub payload: String,
}

/// Parse a workload script. Each non-empty, non-`#` line reads
/// `delay_ms event_type payload`, where payload is the rest of the line.
pub fn parse_script(text: &str) -> Result<Vec<ScriptEvent>, String> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, char::is_whitespace);
        let delay = parts
            .next()
            .ok_or_else(|| format!("line {}: missing delay", idx + 1))?;
        let event_type = parts
            .next()
            .ok_or_else(|| format!("line {}: missing event type", idx + 1))?;
        let payload = parts.next().unwrap_or("").trim().to_string();
        let delay_ms: u64 = delay
            .parse()
            .map_err(|_| format!("line {}: bad delay '{delay}'", idx + 1))?;
        let event_type: u8 = event_type
            .parse()
            .map_err(|_| format!("line {}: bad event type '{event_type}'", idx + 1))?;
        events.push(ScriptEvent {
            delay_ms,
            event_type,
            payload,
        });
    }
    Ok(events)
}

/// A [`DataSource`] whose repertoire is a fixed table of event kinds. Live
/// runs pair it with a driver that walks a [`ScriptEvent`] list in real time;
/// replay needs only the kind table — payloads come from the data file, so
/// the script itself can be gone.
pub struct ScriptedSource {
    kinds: HashMap<u8, EventKind>,
    targets: Mutex<HashMap<u8, ActorHandle>>,
    slots: Mutex<HashMap<u8, PromiseHandle>>,
}

impl ScriptedSource {
    pub fn new(kinds: HashMap<u8, EventKind>) -> Arc<ScriptedSource> {
        Arc::new(ScriptedSource {
            kinds,
            targets: Mutex::new(HashMap::new()),
            slots: Mutex::new(HashMap::new()),
        })
    }

    /// Route `Message`/`Request` events of this type to `target`.
    pub fn bind_target(&self, event_type: u8, target: ActorHandle) {
        self.targets.lock().unwrap().insert(event_type, target);
    }

    /// Route `Resolve` events of this type to `slot`.
    pub fn bind_slot(&self, event_type: u8, slot: PromiseHandle) {
        self.slots.lock().unwrap().insert(event_type, slot);
    }

    /// Build the live driver: sleeps out each event's delay, then emits it
    /// according to its kind. Pass to
    /// [`Turn::start_workload`](crate::runtime::Turn::start_workload).
    pub fn driver(
        self: &Arc<Self>,
        events: Vec<ScriptEvent>,
    ) -> impl FnOnce(ExternalEmitter) + Send + 'static {
        let source = Arc::clone(self);
        move |emitter: ExternalEmitter| {
            for ev in events {
                std::thread::sleep(Duration::from_millis(ev.delay_ms));
                let Some(kind) = source.kinds.get(&ev.event_type) else {
                    log::error!("script event type {} has no kind; skipped", ev.event_type);
                    continue;
                };
                match kind.delivery {
                    DeliveryKind::Message | DeliveryKind::Request => {
                        let target = source.targets.lock().unwrap().get(&ev.event_type).copied();
                        let Some(target) = target else {
                            log::error!("event type {} has no bound target; skipped", ev.event_type);
                            continue;
                        };
                        let opaque: Option<Arc<dyn Any + Send + Sync>> =
                            if kind.delivery == DeliveryKind::Request {
                                Some(Arc::new(OpaqueRequest {
                                    body: ev.payload.clone(),
                                }))
                            } else {
                                None
                            };
                        emitter.emit_message(
                            &target,
                            &kind.selector,
                            ev.event_type,
                            ev.payload.clone().into_bytes(),
                            Value::str(&ev.payload),
                            opaque,
                        );
                    }
                    DeliveryKind::Resolve => {
                        let slot = source.slots.lock().unwrap().get(&ev.event_type).cloned();
                        let Some(slot) = slot else {
                            log::error!("event type {} has no bound slot; skipped", ev.event_type);
                            continue;
                        };
                        emitter.emit_resolve(
                            &slot,
                            ev.event_type,
                            ev.payload.clone().into_bytes(),
                            Value::str(&ev.payload),
                        );
                    }
                }
            }
        }
    }
}

impl DataSource for ScriptedSource {
    fn simulate(
        &self,
        sim: &mut SimContext<'_>,
        _target: ActorId,
        event_type: u8,
        bytes: &[u8],
    ) -> Result<SimOutcome, String> {
        let kind = self
            .kinds
            .get(&event_type)
            .ok_or_else(|| format!("no kind registered for event type {event_type}"))?;
        let payload = Value::str(
            std::str::from_utf8(bytes).map_err(|e| format!("payload not UTF-8: {e}"))?,
        );
        match kind.delivery {
            DeliveryKind::Message | DeliveryKind::Request => Ok(SimOutcome::Deliver {
                selector: Arc::clone(&kind.selector),
                payload,
            }),
            DeliveryKind::Resolve => {
                let slot = self
                    .slots
                    .lock()
                    .unwrap()
                    .get(&event_type)
                    .cloned()
                    .ok_or_else(|| format!("no slot bound for event type {event_type}"))?;
                sim.resolve_external(&slot, payload, event_type, bytes)?;
                Ok(SimOutcome::Performed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_codecs_round_trip() {
        for v in [false, true] {
            assert_eq!((PATH_EXISTS.decode)(&(PATH_EXISTS.encode)(&v)), Ok(v));
        }
        for v in [0u64, 1, u64::MAX, 0x0123_4567_89ab_cdef] {
            assert_eq!(
                (WALL_CLOCK_MILLIS.decode)(&(WALL_CLOCK_MILLIS.encode)(&v)),
                Ok(v)
            );
        }
        let s = "héllo ☂".to_string();
        assert_eq!((STRING_VALUE.decode)(&(STRING_VALUE.encode)(&s)), Ok(s));
    }

    #[test]
    fn codec_rejects_malformed_bytes() {
        assert!((PATH_EXISTS.decode)(&[2]).is_err());
        assert!((PATH_EXISTS.decode)(&[]).is_err());
        assert!((RANDOM_U64.decode)(&[1, 2, 3]).is_err());
        assert!((STRING_VALUE.decode)(&[0xff, 0xfe]).is_err());
    }

    #[test]
    fn script_parsing_handles_comments_payloads_and_errors() {
        let text = "\
# warm-up
10 1 hello world

 20 2 \n\
0 3";
        let events = parse_script(text).unwrap();
        assert_eq!(
            events,
            vec![
                ScriptEvent {
                    delay_ms: 10,
                    event_type: 1,
                    payload: "hello world".into()
                },
                ScriptEvent {
                    delay_ms: 20,
                    event_type: 2,
                    payload: String::new()
                },
                ScriptEvent {
                    delay_ms: 0,
                    event_type: 3,
                    payload: String::new()
                },
            ]
        );
        assert!(parse_script("x 1 p").is_err());
        assert!(parse_script("1 notatype p").is_err());
        assert!(parse_script("5").is_err());
    }

    #[test]
    #[should_panic(expected = "environment accessed during replay")]
    fn tripwire_trips() {
        TripwireEnv.random_u64();
    }

    #[test]
    fn real_env_answers() {
        let env = RealEnv::new();
        assert!(env.now_millis() > 1_500_000_000_000); // after 2017
        let a = env.random_u64();
        let b = env.random_u64();
        // Not a randomness test; just checks the generator advances.
        assert!(a != b || env.random_u64() != b);
        assert!(env.path_exists("/"));
        assert!(!env.path_exists("/definitely/not/a/real/path"));
    }
}
