//! Benchmark-only crate; see `benches/` for the criterion suites.

use actreplay_core::ids::ActorId;
use actreplay_core::trace::TraceEntry;

/// A deterministic mixed-entry stream for codec benchmarks: mostly small
/// 2-byte messages with periodic wide senders, creations and system calls,
/// roughly the shape real traces have.
pub fn synthetic_entries(n: usize) -> Vec<TraceEntry> {
    use actreplay_core::ids::DataId;
    use actreplay_core::trace::ExternalMarker;

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(match i % 16 {
            0 => TraceEntry::SubtraceStart {
                actor: ActorId((i % 7) as u32),
                ordering: (i / 16) as u16,
            },
            5 => TraceEntry::ActorCreation {
                child: ActorId(i as u32),
            },
            9 => TraceEntry::Message {
                sender: ActorId(70_000),
                external: Some(ExternalMarker {
                    event_type: 3,
                    data_id: DataId((i / 16) as u32),
                }),
            },
            13 => TraceEntry::SystemCall {
                data_id: DataId(i as u32),
            },
            14 => TraceEntry::PromiseMessage {
                sender: ActorId(2),
                resolver: ActorId(5),
                external: None,
            },
            _ => TraceEntry::Message {
                sender: ActorId((i % 5) as u32),
                external: None,
            },
        });
    }
    out
}
