//! Flight recorder: lock-free-ish trace capture with all file I/O on one
//! background thread.
//!
//! Each runtime worker owns a [`ThreadTracer`] with a private buffer; turn
//! events append to it with no synchronization. Full buffers retire to the
//! writer thread over a channel and come back through a bounded pool, so the
//! steady state allocates nothing. External payloads also travel to the
//! writer, which serializes and appends them to the data file — application
//! threads never touch a file or run a serializer (asserted in debug builds).
//!
//! Backpressure: when the pool is empty the tracer allocates fresh buffers up
//! to a cap, then blocks until the writer returns one. A write error poisons
//! the recorder; the run is aborted and the error is reported when the
//! recording is finalized.

use std::cell::Cell;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use crossbeam::channel::{unbounded, Receiver, Sender};

use crate::error::RecorderError;
use crate::ids::{ActorId, DataId};
use crate::trace::{
    encode_data_header, encode_entry_into, TraceEntry, DATA_MAGIC, MAX_ENTRY_SIZE, TRACE_MAGIC,
};

thread_local! {
    static IS_WRITER_THREAD: Cell<bool> = const { Cell::new(false) };
}

/// Where and how a recording is written.
#[derive(Clone, Debug)]
pub struct RecorderConfig {
    pub trace_path: PathBuf,
    pub data_path: PathBuf,
    /// Size of each thread-local trace buffer in bytes.
    pub buffer_capacity: usize,
    /// Total buffers allowed in flight before producers block.
    pub max_buffers: usize,
}

impl RecorderConfig {
    pub fn new(trace_path: impl Into<PathBuf>, data_path: impl Into<PathBuf>) -> RecorderConfig {
        RecorderConfig {
            trace_path: trace_path.into(),
            data_path: data_path.into(),
            buffer_capacity: 4 * 1024 * 1024,
            max_buffers: 64,
        }
    }

    pub fn buffer_capacity(mut self, bytes: usize) -> RecorderConfig {
        self.buffer_capacity = bytes;
        self
    }

    pub fn max_buffers(mut self, n: usize) -> RecorderConfig {
        self.max_buffers = n;
        self
    }
}

/// An external payload on its way to the data file. `Lazy` serializers run on
/// the writer thread; `Bytes` hands over pre-formed bytes.
pub enum DataPayload {
    Bytes(Vec<u8>),
    Lazy(Box<dyn FnOnce() -> Vec<u8> + Send>),
}

impl DataPayload {
    fn into_bytes(self) -> Vec<u8> {
        match self {
            DataPayload::Bytes(b) => b,
            DataPayload::Lazy(f) => {
                debug_assert!(
                    IS_WRITER_THREAD.with(|w| w.get()),
                    "external-data serializer invoked off the writer thread"
                );
                f()
            }
        }
    }
}

enum WriterMsg {
    Trace(Vec<u8>),
    Data {
        origin: ActorId,
        data_id: DataId,
        payload: DataPayload,
    },
}

/// Bytes written per output file, reported at finalization.
#[derive(Clone, Copy, Debug, Default)]
pub struct WriterStats {
    pub trace_bytes: u64,
    pub data_bytes: u64,
}

struct BufferPool {
    empty: Mutex<Vec<Vec<u8>>>,
    returned: Condvar,
    allocated: AtomicUsize,
}

struct RecorderInner {
    capacity: usize,
    max_buffers: usize,
    pool: BufferPool,
    poisoned: AtomicBool,
    io_error: Mutex<Option<io::Error>>,
    stats_trace: AtomicU64,
    stats_data: AtomicU64,
}

impl RecorderInner {
    fn take_buffer(&self) -> Vec<u8> {
        let mut empty = self.pool.empty.lock().unwrap();
        loop {
            if let Some(mut buf) = empty.pop() {
                buf.clear();
                return buf;
            }
            if self.pool.allocated.load(Ordering::Relaxed) < self.max_buffers {
                self.pool.allocated.fetch_add(1, Ordering::Relaxed);
                return Vec::with_capacity(self.capacity);
            }
            if self.poisoned.load(Ordering::Relaxed) {
                // The writer is failing; hand out a throwaway buffer so the
                // run can reach its abort path instead of blocking here.
                return Vec::with_capacity(self.capacity);
            }
            empty = self.pool.returned.wait(empty).unwrap();
        }
    }

    fn recycle(&self, buf: Vec<u8>) {
        let mut empty = self.pool.empty.lock().unwrap();
        empty.push(buf);
        self.pool.returned.notify_one();
    }
}

/// Capture side of a recording. Owned by the actor system; hands out one
/// [`ThreadTracer`] per worker thread and accepts external payloads from any
/// thread.
pub struct Recorder {
    inner: Arc<RecorderInner>,
    tx: Mutex<Option<Sender<WriterMsg>>>,
    writer: Mutex<Option<JoinHandle<()>>>,
}

impl Recorder {
    pub fn new(config: &RecorderConfig) -> io::Result<Recorder> {
        let capacity = config.buffer_capacity.max(2 * MAX_ENTRY_SIZE);
        let trace_file = File::create(&config.trace_path)?;
        let data_file = File::create(&config.data_path)?;

        let inner = Arc::new(RecorderInner {
            capacity,
            max_buffers: config.max_buffers.max(2),
            pool: BufferPool {
                empty: Mutex::new(Vec::new()),
                returned: Condvar::new(),
                allocated: AtomicUsize::new(0),
            },
            poisoned: AtomicBool::new(false),
            io_error: Mutex::new(None),
            stats_trace: AtomicU64::new(0),
            stats_data: AtomicU64::new(0),
        });

        let (tx, rx) = unbounded();
        let writer_inner = Arc::clone(&inner);
        let writer = std::thread::Builder::new()
            .name("trace-writer".into())
            .spawn(move || writer_loop(rx, trace_file, data_file, writer_inner))
            .expect("spawn trace writer thread");

        Ok(Recorder {
            inner,
            tx: Mutex::new(Some(tx)),
            writer: Mutex::new(Some(writer)),
        })
    }

    /// A fresh per-thread tracer with its own buffer.
    pub fn thread_tracer(&self) -> ThreadTracer {
        let tx = self
            .tx
            .lock()
            .unwrap()
            .as_ref()
            .expect("recorder already finalized")
            .clone();
        ThreadTracer {
            inner: Arc::clone(&self.inner),
            tx,
            buf: self.inner.take_buffer(),
            scratch: Vec::with_capacity(MAX_ENTRY_SIZE),
        }
    }

    /// Queue one external payload for the data file. The caller has already
    /// allocated `data_id` from the origin actor's counter.
    pub fn submit_data(&self, origin: ActorId, data_id: DataId, payload: DataPayload) {
        let tx = self.tx.lock().unwrap();
        if let Some(tx) = tx.as_ref() {
            let _ = tx.send(WriterMsg::Data {
                origin,
                data_id,
                payload,
            });
        }
    }

    /// True once a write failed; the run should abort.
    pub fn poisoned(&self) -> bool {
        self.inner.poisoned.load(Ordering::Relaxed)
    }

    /// Close the channel, drain the writer and report totals. All thread
    /// tracers must have been dropped (workers joined) before this.
    pub fn finish(&self) -> Result<WriterStats, RecorderError> {
        self.tx.lock().unwrap().take();
        if let Some(writer) = self.writer.lock().unwrap().take() {
            writer.join().map_err(|_| RecorderError::WriterPanicked)?;
        }
        if let Some(err) = self.inner.io_error.lock().unwrap().take() {
            return Err(RecorderError::Io(err));
        }
        Ok(WriterStats {
            trace_bytes: self.inner.stats_trace.load(Ordering::Relaxed),
            data_bytes: self.inner.stats_data.load(Ordering::Relaxed),
        })
    }
}

impl Drop for Recorder {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}

fn writer_loop(
    rx: Receiver<WriterMsg>,
    mut trace_file: File,
    mut data_file: File,
    inner: Arc<RecorderInner>,
) {
    IS_WRITER_THREAD.with(|w| w.set(true));
    let fail = |inner: &RecorderInner, err: io::Error| {
        let mut slot = inner.io_error.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
        inner.poisoned.store(true, Ordering::Relaxed);
    };
    match trace_file
        .write_all(TRACE_MAGIC)
        .and_then(|()| data_file.write_all(DATA_MAGIC))
    {
        Ok(()) => {
            inner
                .stats_trace
                .fetch_add(TRACE_MAGIC.len() as u64, Ordering::Relaxed);
            inner
                .stats_data
                .fetch_add(DATA_MAGIC.len() as u64, Ordering::Relaxed);
        }
        Err(e) => fail(&inner, e),
    }
    for msg in rx {
        let broken = inner.poisoned.load(Ordering::Relaxed);
        match msg {
            WriterMsg::Trace(buf) => {
                if !broken {
                    match trace_file.write_all(&buf) {
                        Ok(()) => {
                            inner
                                .stats_trace
                                .fetch_add(buf.len() as u64, Ordering::Relaxed);
                        }
                        Err(e) => fail(&inner, e),
                    }
                }
                // Recycle even when broken so blocked producers can finish.
                inner.recycle(buf);
            }
            WriterMsg::Data {
                origin,
                data_id,
                payload,
            } => {
                if broken {
                    continue;
                }
                let bytes = payload.into_bytes();
                let head = encode_data_header(origin, data_id, bytes.len() as u32);
                let res = data_file
                    .write_all(&head)
                    .and_then(|()| data_file.write_all(&bytes));
                match res {
                    Ok(()) => {
                        inner
                            .stats_data
                            .fetch_add((head.len() + bytes.len()) as u64, Ordering::Relaxed);
                    }
                    Err(e) => fail(&inner, e),
                }
            }
        }
    }
    if !inner.poisoned.load(Ordering::Relaxed) {
        if let Err(e) = trace_file.sync_all().and_then(|()| data_file.sync_all()) {
            fail(&inner, e);
        }
    }
}

/// Per-thread trace capture. Appends entries to a private buffer and swaps it
/// out to the writer when full; an entry never straddles two buffers, and a
/// fresh buffer always opens with a subtrace start so the chunk stays
/// attributable to its actor.
pub struct ThreadTracer {
    inner: Arc<RecorderInner>,
    tx: Sender<WriterMsg>,
    buf: Vec<u8>,
    scratch: Vec<u8>,
}

impl ThreadTracer {
    fn remaining(&self) -> usize {
        self.inner.capacity - self.buf.len()
    }

    fn swap_buffer(&mut self) {
        let fresh = self.inner.take_buffer();
        let full = std::mem::replace(&mut self.buf, fresh);
        if !full.is_empty() {
            let _ = self.tx.send(WriterMsg::Trace(full));
        }
    }

    /// Open a subtrace for `actor`, consuming the next value of its wrapping
    /// subtrace counter.
    pub fn begin_subtrace(&mut self, actor: ActorId, counter: &mut u16) {
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        encode_entry_into(
            &TraceEntry::SubtraceStart {
                actor,
                ordering: *counter,
            },
            &mut scratch,
        );
        *counter = counter.wrapping_add(1);
        if self.remaining() < scratch.len() {
            self.swap_buffer();
        }
        self.buf.extend_from_slice(&scratch);
        self.scratch = scratch;
    }

    /// Append one event of `actor`'s current subtrace. If the buffer cannot
    /// hold it, the buffer retires and the entry lands in a fresh buffer
    /// right behind a new subtrace start (with the next counter value).
    pub fn record_entry(&mut self, entry: &TraceEntry, actor: ActorId, counter: &mut u16) {
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        encode_entry_into(entry, &mut scratch);
        if self.remaining() < scratch.len() {
            self.swap_buffer();
            self.begin_subtrace(actor, counter);
        }
        self.buf.extend_from_slice(&scratch);
        self.scratch = scratch;
    }

    /// Flush whatever this thread captured; called when its worker exits.
    pub fn retire(mut self) {
        self.flush_remaining();
    }

    fn flush_remaining(&mut self) {
        if !self.buf.is_empty() {
            let full = std::mem::take(&mut self.buf);
            let _ = self.tx.send(WriterMsg::Trace(full));
        }
    }
}

impl Drop for ThreadTracer {
    fn drop(&mut self) {
        self.flush_remaining();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{group_subtraces, read_trace};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn read(path: &std::path::Path) -> Vec<u8> {
        std::fs::read(path).unwrap()
    }

    #[test]
    fn subtrace_counter_starts_at_zero_and_increments() {
        let dir = tmp();
        let cfg = RecorderConfig::new(dir.path().join("t"), dir.path().join("d"));
        let rec = Recorder::new(&cfg).unwrap();
        let mut tracer = rec.thread_tracer();
        let mut counter = 0u16;
        tracer.begin_subtrace(ActorId(3), &mut counter);
        tracer.begin_subtrace(ActorId(3), &mut counter);
        tracer.retire();
        let stats = rec.finish().unwrap();
        assert!(stats.trace_bytes > 8);

        let entries = read_trace(&read(&cfg.trace_path)).unwrap();
        let starts: Vec<_> = entries
            .iter()
            .filter_map(|(_, e)| match e {
                TraceEntry::SubtraceStart { actor, ordering } => Some((*actor, *ordering)),
                _ => None,
            })
            .collect();
        assert_eq!(starts, vec![(ActorId(3), 0), (ActorId(3), 1)]);
        assert_eq!(counter, 2);
    }

    #[test]
    fn counter_wraps_after_the_two_byte_limit() {
        let dir = tmp();
        let cfg = RecorderConfig::new(dir.path().join("t"), dir.path().join("d"));
        let rec = Recorder::new(&cfg).unwrap();
        let mut tracer = rec.thread_tracer();
        let mut counter = 65535u16;
        tracer.begin_subtrace(ActorId(1), &mut counter);
        tracer.begin_subtrace(ActorId(1), &mut counter);
        tracer.retire();
        rec.finish().unwrap();

        let entries = read_trace(&read(&cfg.trace_path)).unwrap();
        let orderings: Vec<u16> = entries
            .iter()
            .filter_map(|(_, e)| match e {
                TraceEntry::SubtraceStart { ordering, .. } => Some(*ordering),
                _ => None,
            })
            .collect();
        assert_eq!(orderings, vec![65535, 0]);
    }

    #[test]
    fn full_buffer_swaps_cleanly_and_reopens_the_subtrace() {
        let dir = tmp();
        let cfg = RecorderConfig::new(dir.path().join("t"), dir.path().join("d"))
            .buffer_capacity(32)
            .max_buffers(4);
        let rec = Recorder::new(&cfg).unwrap();
        let mut tracer = rec.thread_tracer();
        let mut counter = 0u16;
        tracer.begin_subtrace(ActorId(2), &mut counter);
        // 2 bytes per message, 32-byte buffers: forces several swaps.
        for _ in 0..40 {
            tracer.record_entry(
                &TraceEntry::Message {
                    sender: ActorId(1),
                    external: None,
                },
                ActorId(2),
                &mut counter,
            );
        }
        tracer.retire();
        rec.finish().unwrap();

        let entries = read_trace(&read(&cfg.trace_path)).unwrap();
        let subtraces = group_subtraces(&entries).unwrap();
        assert!(subtraces.len() > 1, "expected multiple subtraces");
        // Consecutive counters, all for the same actor, messages intact.
        let counters: Vec<u16> = subtraces.iter().map(|s| s.ordering).collect();
        let expected: Vec<u16> = (0..subtraces.len() as u16).collect();
        assert_eq!(counters, expected);
        let messages: usize = subtraces.iter().map(|s| s.events.len()).sum();
        assert_eq!(messages, 40);
    }

    #[test]
    fn external_payloads_reach_the_data_file_with_lazy_serialization() {
        let dir = tmp();
        let cfg = RecorderConfig::new(dir.path().join("t"), dir.path().join("d"));
        let rec = Recorder::new(&cfg).unwrap();
        rec.submit_data(ActorId(4), DataId(0), DataPayload::Bytes(b"pre".to_vec()));
        rec.submit_data(
            ActorId(4),
            DataId(1),
            DataPayload::Lazy(Box::new(|| b"lazy".to_vec())),
        );
        rec.finish().unwrap();

        let store = crate::trace::read_data_file(&read(&cfg.data_path)).unwrap();
        assert_eq!(&store[&(ActorId(4), DataId(0))][..], b"pre");
        assert_eq!(&store[&(ActorId(4), DataId(1))][..], b"lazy");
    }

    #[test]
    fn write_failure_poisons_and_surfaces_at_finish() {
        // /dev/full accepts the open but fails every write.
        if !std::path::Path::new("/dev/full").exists() {
            return;
        }
        let dir = tmp();
        let cfg = RecorderConfig::new("/dev/full", dir.path().join("d")).buffer_capacity(64);
        let rec = Recorder::new(&cfg).unwrap();
        let mut tracer = rec.thread_tracer();
        let mut counter = 0u16;
        for _ in 0..100 {
            tracer.begin_subtrace(ActorId(1), &mut counter);
        }
        tracer.retire();
        let err = rec.finish();
        assert!(matches!(err, Err(RecorderError::Io(_))));
    }

    #[test]
    fn buffer_pool_reuses_returned_buffers() {
        let dir = tmp();
        let cfg = RecorderConfig::new(dir.path().join("t"), dir.path().join("d"))
            .buffer_capacity(64)
            .max_buffers(3);
        let rec = Recorder::new(&cfg).unwrap();
        let mut tracer = rec.thread_tracer();
        let mut counter = 0u16;
        for _ in 0..2000 {
            tracer.record_entry(
                &TraceEntry::Message {
                    sender: ActorId(9),
                    external: None,
                },
                ActorId(9),
                &mut counter,
            );
        }
        tracer.retire();
        rec.finish().unwrap();
        assert!(
            rec.inner.pool.allocated.load(Ordering::Relaxed) <= 3,
            "pool must not exceed its cap"
        );
    }
}
