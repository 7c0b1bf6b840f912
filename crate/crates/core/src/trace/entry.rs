//! Binary trace entry codec.
//!
//! Every entry starts with a one-byte header:
//!
//! ```text
//! bit 7 6   5 4   3    2 1 0
//!     r r   w w   ext  type
//! ```
//!
//! * `type` (bits 0..2): 0 subtrace start, 1 actor creation, 2 message,
//!   3 promise message, 4 system call.
//! * `ext` (bit 3): the message delivered external data; only valid on
//!   message and promise-message entries.
//! * `w` (bits 4..5): width code; every actor-id field of the entry is stored
//!   in `w + 1` bytes, little-endian. Encoders must pick the smallest width
//!   that fits all ids of the entry, and the decoder rejects anything else.
//! * `r` (bits 6..7): reserved, must be zero.
//!
//! Multi-byte fields are little-endian. Subtrace ordering counters are always
//! 2 bytes, external data ids always 4 bytes, event-type tags 1 byte.

use crate::error::FormatError;
use crate::ids::{ActorId, DataId};

/// File magic preceding a trace entry stream.
pub const TRACE_MAGIC: &[u8; 8] = b"ACTRPLY1";
/// File magic preceding an external-data entry stream.
pub const DATA_MAGIC: &[u8; 8] = b"ACTRDAT1";

/// Upper bound on the encoded size of any entry (external promise message
/// with 4-byte ids). Buffers must be at least this large so an entry never
/// straddles two buffers.
pub const MAX_ENTRY_SIZE: usize = 14;

const TYPE_SUBTRACE_START: u8 = 0;
const TYPE_ACTOR_CREATION: u8 = 1;
const TYPE_MESSAGE: u8 = 2;
const TYPE_PROMISE_MESSAGE: u8 = 3;
const TYPE_SYSTEM_CALL: u8 = 4;

const EXTERNAL_BIT: u8 = 0b0000_1000;
const TYPE_MASK: u8 = 0b0000_0111;
const WIDTH_MASK: u8 = 0b0011_0000;
const WIDTH_SHIFT: u8 = 4;
const RESERVED_MASK: u8 = 0b1100_0000;

/// Marks a message as carrying external input: which kind of event it was and
/// which data-file payload it delivered.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct ExternalMarker {
    pub event_type: u8,
    pub data_id: DataId,
}

/// One decoded trace entry.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TraceEntry {
    /// The named actor's events follow, `ordering`-th subtrace of that actor.
    SubtraceStart { actor: ActorId, ordering: u16 },
    /// The current actor spawned `child`.
    ActorCreation { child: ActorId },
    /// The current actor processed a regular message.
    Message {
        sender: ActorId,
        external: Option<ExternalMarker>,
    },
    /// The current actor processed a message delivered by promise resolution.
    PromiseMessage {
        sender: ActorId,
        resolver: ActorId,
        external: Option<ExternalMarker>,
    },
    /// The current actor performed a system call whose result is in the data
    /// file under its own id and `data_id`.
    SystemCall { data_id: DataId },
}

impl TraceEntry {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TraceEntry::SubtraceStart { .. } => "subtrace-start",
            TraceEntry::ActorCreation { .. } => "actor-creation",
            TraceEntry::Message { .. } => "message",
            TraceEntry::PromiseMessage { .. } => "promise-message",
            TraceEntry::SystemCall { .. } => "system-call",
        }
    }
}

/// Smallest number of bytes (1..=4) that can hold every id in `ids`.
/// An empty slice needs the minimum width of 1.
pub fn required_width(ids: &[u32]) -> usize {
    let max = ids.iter().copied().max().unwrap_or(0);
    if max <= 0xFF {
        1
    } else if max <= 0xFFFF {
        2
    } else if max <= 0xFF_FFFF {
        3
    } else {
        4
    }
}

fn header(type_code: u8, external: bool, width: usize) -> u8 {
    debug_assert!((1..=4).contains(&width));
    type_code | (if external { EXTERNAL_BIT } else { 0 }) | (((width - 1) as u8) << WIDTH_SHIFT)
}

fn put_id(out: &mut Vec<u8>, id: u32, width: usize) {
    out.extend_from_slice(&id.to_le_bytes()[..width]);
}

/// Encode one entry in the canonical (minimal-width) form.
pub fn encode_entry(entry: &TraceEntry) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAX_ENTRY_SIZE);
    encode_entry_into(entry, &mut out);
    out
}

pub(crate) fn encode_entry_into(entry: &TraceEntry, out: &mut Vec<u8>) {
    match *entry {
        TraceEntry::SubtraceStart { actor, ordering } => {
            let w = required_width(&[actor.0]);
            out.push(header(TYPE_SUBTRACE_START, false, w));
            put_id(out, actor.0, w);
            out.extend_from_slice(&ordering.to_le_bytes());
        }
        TraceEntry::ActorCreation { child } => {
            let w = required_width(&[child.0]);
            out.push(header(TYPE_ACTOR_CREATION, false, w));
            put_id(out, child.0, w);
        }
        TraceEntry::Message { sender, external } => {
            let w = required_width(&[sender.0]);
            out.push(header(TYPE_MESSAGE, external.is_some(), w));
            put_id(out, sender.0, w);
            if let Some(m) = external {
                out.push(m.event_type);
                out.extend_from_slice(&m.data_id.0.to_le_bytes());
            }
        }
        TraceEntry::PromiseMessage {
            sender,
            resolver,
            external,
        } => {
            let w = required_width(&[sender.0, resolver.0]);
            out.push(header(TYPE_PROMISE_MESSAGE, external.is_some(), w));
            put_id(out, sender.0, w);
            put_id(out, resolver.0, w);
            if let Some(m) = external {
                out.push(m.event_type);
                out.extend_from_slice(&m.data_id.0.to_le_bytes());
            }
        }
        TraceEntry::SystemCall { data_id } => {
            out.push(header(TYPE_SYSTEM_CALL, false, 1));
            out.extend_from_slice(&data_id.0.to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(FormatError::Truncated {
                offset: self.pos,
                field,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, FormatError> {
        let b = self.take(2, field)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, FormatError> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn id(&mut self, width: usize, field: &'static str) -> Result<u32, FormatError> {
        let b = self.take(width, field)?;
        let mut raw = [0u8; 4];
        raw[..width].copy_from_slice(b);
        Ok(u32::from_le_bytes(raw))
    }
}

fn check_width(
    offset: usize,
    encoded: usize,
    ids: &[u32],
) -> Result<(), FormatError> {
    let required = required_width(ids);
    if encoded != required {
        return Err(FormatError::NonMinimalWidth {
            offset,
            encoded,
            required,
        });
    }
    Ok(())
}

fn decode_marker(cur: &mut Cursor<'_>) -> Result<ExternalMarker, FormatError> {
    let event_type = cur.u8("event type")?;
    let data_id = DataId(cur.u32("data id")?);
    Ok(ExternalMarker { event_type, data_id })
}

/// Decode the entry starting at `offset`, returning it and the number of
/// bytes it occupied.
pub fn decode_entry(bytes: &[u8], offset: usize) -> Result<(TraceEntry, usize), FormatError> {
    let mut cur = Cursor { bytes, pos: offset };
    let head = cur.u8("header")?;
    if head & RESERVED_MASK != 0 {
        return Err(FormatError::ReservedBits { offset, byte: head });
    }
    let type_code = head & TYPE_MASK;
    let external = head & EXTERNAL_BIT != 0;
    let width = (((head & WIDTH_MASK) >> WIDTH_SHIFT) as usize) + 1;

    let reject_external = |kind: &'static str| {
        if external {
            Err(FormatError::UnexpectedExternalFlag { offset, kind })
        } else {
            Ok(())
        }
    };

    let entry = match type_code {
        TYPE_SUBTRACE_START => {
            reject_external("subtrace-start")?;
            let actor = cur.id(width, "actor id")?;
            let ordering = cur.u16("ordering counter")?;
            check_width(offset, width, &[actor])?;
            TraceEntry::SubtraceStart {
                actor: ActorId(actor),
                ordering,
            }
        }
        TYPE_ACTOR_CREATION => {
            reject_external("actor-creation")?;
            let child = cur.id(width, "child id")?;
            check_width(offset, width, &[child])?;
            TraceEntry::ActorCreation { child: ActorId(child) }
        }
        TYPE_MESSAGE => {
            let sender = cur.id(width, "sender id")?;
            check_width(offset, width, &[sender])?;
            let marker = if external { Some(decode_marker(&mut cur)?) } else { None };
            TraceEntry::Message {
                sender: ActorId(sender),
                external: marker,
            }
        }
        TYPE_PROMISE_MESSAGE => {
            let sender = cur.id(width, "sender id")?;
            let resolver = cur.id(width, "resolver id")?;
            check_width(offset, width, &[sender, resolver])?;
            let marker = if external { Some(decode_marker(&mut cur)?) } else { None };
            TraceEntry::PromiseMessage {
                sender: ActorId(sender),
                resolver: ActorId(resolver),
                external: marker,
            }
        }
        TYPE_SYSTEM_CALL => {
            reject_external("system-call")?;
            if width != 1 {
                return Err(FormatError::WidthNotAllowed { offset });
            }
            let data_id = DataId(cur.u32("data id")?);
            TraceEntry::SystemCall { data_id }
        }
        code => return Err(FormatError::UnknownEntryType { offset, code }),
    };
    Ok((entry, cur.pos - offset))
}

/// Decode a whole entry stream (no file magic), returning each entry with
/// its byte offset.
pub fn decode_entries(bytes: &[u8]) -> Result<Vec<(usize, TraceEntry)>, FormatError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let (entry, used) = decode_entry(bytes, pos)?;
        out.push((pos, entry));
        pos += used;
    }
    Ok(out)
}

/// Validate the trace file magic and decode the entry stream that follows.
/// Returned offsets are relative to the entry stream (file offset minus 8).
pub fn read_trace(bytes: &[u8]) -> Result<Vec<(usize, TraceEntry)>, FormatError> {
    if bytes.len() < TRACE_MAGIC.len() || &bytes[..TRACE_MAGIC.len()] != TRACE_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "ACTRPLY1",
            found: bytes[..bytes.len().min(8)].to_vec(),
        });
    }
    decode_entries(&bytes[TRACE_MAGIC.len()..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_of_single_small_id_is_one_byte() {
        assert_eq!(required_width(&[34]), 1);
    }

    #[test]
    fn width_covers_the_largest_id() {
        assert_eq!(required_width(&[34, 100_000]), 3);
    }

    #[test]
    fn width_class_boundaries() {
        assert_eq!(required_width(&[]), 1);
        assert_eq!(required_width(&[0]), 1);
        assert_eq!(required_width(&[0xFF]), 1);
        assert_eq!(required_width(&[0x100]), 2);
        assert_eq!(required_width(&[0xFFFF]), 2);
        assert_eq!(required_width(&[0x1_0000]), 3);
        assert_eq!(required_width(&[0xFF_FFFF]), 3);
        assert_eq!(required_width(&[0x100_0000]), 4);
        assert_eq!(required_width(&[u32::MAX]), 4);
    }

    #[test]
    fn message_with_one_byte_sender_is_two_bytes() {
        let e = TraceEntry::Message {
            sender: ActorId(34),
            external: None,
        };
        assert_eq!(encode_entry(&e), vec![0x02, 34]);
    }

    #[test]
    fn promise_message_spanning_width_classes_is_seven_bytes() {
        let e = TraceEntry::PromiseMessage {
            sender: ActorId(34),
            resolver: ActorId(100_000),
            external: None,
        };
        // type 3, width code 2 (3-byte ids); both ids stored in 3 bytes.
        assert_eq!(
            encode_entry(&e),
            vec![0x23, 0x22, 0x00, 0x00, 0xA0, 0x86, 0x01]
        );
    }

    #[test]
    fn subtrace_start_layout() {
        let e = TraceEntry::SubtraceStart {
            actor: ActorId(0),
            ordering: 0,
        };
        assert_eq!(encode_entry(&e), vec![0x00, 0x00, 0x00, 0x00]);

        let e = TraceEntry::SubtraceStart {
            actor: ActorId(300),
            ordering: 0x0201,
        };
        // width code 1 (2-byte id); ordering is always 2 bytes.
        assert_eq!(encode_entry(&e), vec![0x10, 0x2C, 0x01, 0x01, 0x02]);
    }

    #[test]
    fn actor_creation_layout() {
        let e = TraceEntry::ActorCreation { child: ActorId(1) };
        assert_eq!(encode_entry(&e), vec![0x01, 0x01]);
    }

    #[test]
    fn system_call_layout() {
        let e = TraceEntry::SystemCall { data_id: DataId(5) };
        assert_eq!(encode_entry(&e), vec![0x04, 0x05, 0x00, 0x00, 0x00]);
    }

    #[test]
    fn external_message_layout() {
        let e = TraceEntry::Message {
            sender: ActorId(5),
            external: Some(ExternalMarker {
                event_type: 1,
                data_id: DataId(0),
            }),
        };
        assert_eq!(
            encode_entry(&e),
            vec![0x0A, 0x05, 0x01, 0x00, 0x00, 0x00, 0x00]
        );
    }

    #[test]
    fn entry_size_bounds() {
        let internal_msg = |sender| TraceEntry::Message {
            sender: ActorId(sender),
            external: None,
        };
        assert_eq!(encode_entry(&internal_msg(0)).len(), 2);
        assert_eq!(encode_entry(&internal_msg(u32::MAX)).len(), 5);

        let internal_pm = |a, b| TraceEntry::PromiseMessage {
            sender: ActorId(a),
            resolver: ActorId(b),
            external: None,
        };
        assert_eq!(encode_entry(&internal_pm(0, 0)).len(), 3);
        assert_eq!(encode_entry(&internal_pm(u32::MAX, 1)).len(), 9);

        let widest = TraceEntry::PromiseMessage {
            sender: ActorId(u32::MAX),
            resolver: ActorId(1),
            external: Some(ExternalMarker {
                event_type: 0xFF,
                data_id: DataId(u32::MAX),
            }),
        };
        assert_eq!(encode_entry(&widest).len(), MAX_ENTRY_SIZE);
    }

    #[test]
    fn decode_rejects_unknown_type_codes() {
        for code in 5u8..=7 {
            match decode_entry(&[code, 0, 0, 0, 0], 0) {
                Err(FormatError::UnknownEntryType { offset: 0, code: c }) => assert_eq!(c, code),
                other => panic!("expected unknown-type error, got {other:?}"),
            }
        }
    }

    #[test]
    fn decode_rejects_reserved_bits() {
        for head in [0b0100_0010u8, 0b1000_0010, 0b1100_0010] {
            assert!(matches!(
                decode_entry(&[head, 34], 0),
                Err(FormatError::ReservedBits { offset: 0, .. })
            ));
        }
    }

    #[test]
    fn decode_rejects_external_flag_on_non_message_entries() {
        // subtrace start, actor creation, system call with the external bit.
        for head in [0x08u8, 0x09, 0x0C] {
            assert!(matches!(
                decode_entry(&[head, 0, 0, 0, 0, 0], 0),
                Err(FormatError::UnexpectedExternalFlag { .. })
            ));
        }
    }

    #[test]
    fn decode_rejects_truncated_entries() {
        // Message header promising a sender that is not there.
        match decode_entry(&[0x02], 0) {
            Err(FormatError::Truncated { field, .. }) => assert_eq!(field, "sender id"),
            other => panic!("expected truncation, got {other:?}"),
        }
        // Promise message missing its resolver.
        match decode_entry(&[0x03, 7], 0) {
            Err(FormatError::Truncated { field, .. }) => assert_eq!(field, "resolver id"),
            other => panic!("expected truncation, got {other:?}"),
        }
        // Subtrace start missing ordering bytes.
        match decode_entry(&[0x00, 7, 0], 0) {
            Err(FormatError::Truncated { field, .. }) => assert_eq!(field, "ordering counter"),
            other => panic!("expected truncation, got {other:?}"),
        }
        // External message missing its data id.
        match decode_entry(&[0x0A, 7, 1, 0], 0) {
            Err(FormatError::Truncated { field, .. }) => assert_eq!(field, "data id"),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_non_minimal_width() {
        // sender 34 stored in 2 bytes.
        match decode_entry(&[0x12, 34, 0], 0) {
            Err(FormatError::NonMinimalWidth {
                encoded: 2,
                required: 1,
                ..
            }) => {}
            other => panic!("expected non-minimal-width error, got {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_width_code_on_system_calls() {
        assert!(matches!(
            decode_entry(&[0x14, 5, 0, 0, 0], 0),
            Err(FormatError::WidthNotAllowed { offset: 0 })
        ));
    }

    #[test]
    fn read_trace_checks_magic() {
        assert!(matches!(
            read_trace(b"NOTMAGIC"),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(read_trace(b"ACTRPLY1").unwrap().is_empty());
    }

    #[test]
    fn stream_offsets_point_at_each_entry() {
        let mut stream = Vec::new();
        let entries = [
            TraceEntry::SubtraceStart {
                actor: ActorId(0),
                ordering: 0,
            },
            TraceEntry::Message {
                sender: ActorId(0),
                external: None,
            },
            TraceEntry::ActorCreation { child: ActorId(1) },
        ];
        for e in &entries {
            encode_entry_into(e, &mut stream);
        }
        let decoded = decode_entries(&stream).unwrap();
        assert_eq!(decoded.len(), 3);
        assert_eq!(decoded[0], (0, entries[0]));
        assert_eq!(decoded[1], (4, entries[1]));
        assert_eq!(decoded[2], (6, entries[2]));
    }
}
