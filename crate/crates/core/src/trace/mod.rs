//! Trace model: the binary formats shared by the recorder and the replayer.
//!
//! Two append-only files describe a recorded run. The *trace file* holds the
//! per-turn event stream (message ordering, actor creations, system calls) as
//! compact variable-width entries; the *data file* holds the payload bytes of
//! everything external. Message contents are never stored — replaying the
//! program regenerates them — so trace entries stay a handful of bytes each.

mod data_file;
mod entry;
mod subtrace;

pub use data_file::{
    encode_data_entry, encode_data_header, read_data_file, DataStore, DATA_ENTRY_HEADER,
};
pub use entry::{
    decode_entries, decode_entry, encode_entry, read_trace, required_width, ExternalMarker,
    TraceEntry, DATA_MAGIC, MAX_ENTRY_SIZE, TRACE_MAGIC,
};
pub(crate) use entry::encode_entry_into;
pub use subtrace::{group_subtraces, order_counters, reconstruct_subtrace_order, Subtrace};
