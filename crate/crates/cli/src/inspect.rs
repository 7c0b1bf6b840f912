//! Trace-file census: entry counts and byte totals per entry type, per-actor
//! message volume, and a subtrace ordering check.

use std::collections::BTreeMap;

use actreplay_core::error::FormatError;
use actreplay_core::ids::ActorId;
use actreplay_core::trace::{
    group_subtraces, read_trace, reconstruct_subtrace_order, TraceEntry, TRACE_MAGIC,
};

#[derive(Clone, Copy, Debug, Default)]
pub struct TypeCensus {
    pub count: u64,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ActorCensus {
    pub subtraces: u64,
    pub messages: u64,
    pub message_bytes: u64,
}

#[derive(Debug)]
pub struct TraceCensus {
    pub file_bytes: u64,
    pub entries: u64,
    /// Keyed by [`TraceEntry::kind_name`].
    pub by_type: BTreeMap<&'static str, TypeCensus>,
    pub external_messages: u64,
    pub per_actor: BTreeMap<ActorId, ActorCensus>,
    /// `None` when subtrace ordering reconstructs cleanly; otherwise the
    /// corruption rendered as text.
    pub order_error: Option<String>,
}

pub fn census(bytes: &[u8]) -> Result<TraceCensus, FormatError> {
    let entries = read_trace(bytes)?;
    let stream_len = bytes.len() - TRACE_MAGIC.len();

    let mut by_type: BTreeMap<&'static str, TypeCensus> = BTreeMap::new();
    let mut external_messages = 0u64;
    for (i, (offset, entry)) in entries.iter().enumerate() {
        let end = entries.get(i + 1).map_or(stream_len, |(next, _)| *next);
        let size = (end - offset) as u64;
        let t = by_type.entry(entry.kind_name()).or_default();
        t.count += 1;
        t.bytes += size;
        match entry {
            TraceEntry::Message {
                external: Some(_), ..
            }
            | TraceEntry::PromiseMessage {
                external: Some(_), ..
            } => external_messages += 1,
            _ => {}
        }
    }

    // Attribute events to the actor whose subtrace they sit in.
    let mut per_actor: BTreeMap<ActorId, ActorCensus> = BTreeMap::new();
    let subtraces = group_subtraces(&entries)?;
    for st in &subtraces {
        let a = per_actor.entry(st.actor).or_default();
        a.subtraces += 1;
        for event in &st.events {
            if matches!(
                event,
                TraceEntry::Message { .. } | TraceEntry::PromiseMessage { .. }
            ) {
                a.messages += 1;
                a.message_bytes += encoded_size(event) as u64;
            }
        }
    }

    let order_error = reconstruct_subtrace_order(subtraces).err().map(|e| e.to_string());

    Ok(TraceCensus {
        file_bytes: bytes.len() as u64,
        entries: entries.len() as u64,
        by_type,
        external_messages,
        per_actor,
        order_error,
    })
}

fn encoded_size(entry: &TraceEntry) -> usize {
    actreplay_core::trace::encode_entry(entry).len()
}

#[cfg(test)]
mod tests {
    use actreplay_core::ids::DataId;
    use actreplay_core::trace::{encode_entry, ExternalMarker};

    use super::*;

    #[test]
    fn census_counts_types_bytes_and_externals() {
        let entries = [
            TraceEntry::SubtraceStart {
                actor: ActorId(0),
                ordering: 0,
            },
            TraceEntry::ActorCreation { child: ActorId(1) },
            TraceEntry::Message {
                sender: ActorId(1),
                external: None,
            },
            TraceEntry::Message {
                sender: ActorId(1),
                external: Some(ExternalMarker {
                    event_type: 9,
                    data_id: DataId(0),
                }),
            },
            TraceEntry::SubtraceStart {
                actor: ActorId(1),
                ordering: 0,
            },
            TraceEntry::SystemCall { data_id: DataId(3) },
        ];
        let mut bytes = TRACE_MAGIC.to_vec();
        for e in &entries {
            bytes.extend(encode_entry(e));
        }

        let c = census(&bytes).unwrap();
        assert_eq!(c.entries, 6);
        assert_eq!(c.by_type["subtrace-start"].count, 2);
        assert_eq!(c.by_type["message"].count, 2);
        // 2-byte plain message + 7-byte external message.
        assert_eq!(c.by_type["message"].bytes, 9);
        assert_eq!(c.external_messages, 1);
        assert_eq!(c.per_actor[&ActorId(0)].messages, 2);
        assert_eq!(c.per_actor[&ActorId(0)].message_bytes, 9);
        assert_eq!(c.per_actor[&ActorId(1)].subtraces, 1);
        assert!(c.order_error.is_none());
    }

    #[test]
    fn census_reports_ordering_holes() {
        let entries = [
            TraceEntry::SubtraceStart {
                actor: ActorId(0),
                ordering: 0,
            },
            TraceEntry::SubtraceStart {
                actor: ActorId(0),
                ordering: 2,
            },
        ];
        let mut bytes = TRACE_MAGIC.to_vec();
        for e in &entries {
            bytes.extend(encode_entry(e));
        }
        let c = census(&bytes).unwrap();
        assert!(c.order_error.unwrap().contains("gap"));
    }
}
