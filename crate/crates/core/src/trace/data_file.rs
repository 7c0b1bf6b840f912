//! External-data file codec.
//!
//! The data file stores the payloads of recorded external input. Entries are
//! laid out back to back after the 8-byte magic, each as a fixed 12-byte
//! header followed by the raw payload:
//!
//! ```text
//! offset 0..4   origin actor id (u32 LE)
//! offset 4..8   data id         (u32 LE)
//! offset 8..12  payload length  (u32 LE)
//! offset 12..   payload bytes
//! ```
//!
//! `(origin, data id)` is globally unique; data ids count up from 0 per
//! origin actor.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::FormatError;
use crate::ids::{ActorId, DataId};
use crate::trace::entry::DATA_MAGIC;

pub const DATA_ENTRY_HEADER: usize = 12;

/// Encode one entry (header + payload), without the file magic.
pub fn encode_data_entry(origin: ActorId, data_id: DataId, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(DATA_ENTRY_HEADER + payload.len());
    out.extend_from_slice(&encode_data_header(origin, data_id, payload.len() as u32));
    out.extend_from_slice(payload);
    out
}

pub fn encode_data_header(origin: ActorId, data_id: DataId, length: u32) -> [u8; DATA_ENTRY_HEADER] {
    let mut head = [0u8; DATA_ENTRY_HEADER];
    head[0..4].copy_from_slice(&origin.0.to_le_bytes());
    head[4..8].copy_from_slice(&data_id.0.to_le_bytes());
    head[8..12].copy_from_slice(&length.to_le_bytes());
    head
}

/// In-memory view of a data file: payloads keyed by (origin, data id).
pub type DataStore = HashMap<(ActorId, DataId), Arc<[u8]>>;

/// Validate the data file magic and decode every entry.
pub fn read_data_file(bytes: &[u8]) -> Result<DataStore, FormatError> {
    if bytes.len() < DATA_MAGIC.len() || &bytes[..DATA_MAGIC.len()] != DATA_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "ACTRDAT1",
            found: bytes[..bytes.len().min(8)].to_vec(),
        });
    }
    let mut store = DataStore::new();
    let mut pos = DATA_MAGIC.len();
    while pos < bytes.len() {
        if pos + DATA_ENTRY_HEADER > bytes.len() {
            return Err(FormatError::Truncated {
                offset: pos,
                field: "data entry header",
            });
        }
        let origin = ActorId(u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()));
        let data_id = DataId(u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()));
        let length = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().unwrap()) as usize;
        pos += DATA_ENTRY_HEADER;
        if pos + length > bytes.len() {
            return Err(FormatError::Truncated {
                offset: pos,
                field: "data entry payload",
            });
        }
        let payload: Arc<[u8]> = Arc::from(&bytes[pos..pos + length]);
        pos += length;
        if store.insert((origin, data_id), payload).is_some() {
            return Err(FormatError::DuplicateDataEntry { origin, data: data_id });
        }
    }
    Ok(store)
}
