//! Subtrace grouping and order reconstruction.
//!
//! A trace file is a concatenation of thread-local buffers, so one actor's
//! events are scattered across the file in chunks ("subtraces") that appear
//! in buffer-retirement order, not in the actor's execution order. Each chunk
//! opens with a subtrace-start entry carrying a per-actor 2-byte wrapping
//! counter; chaining consecutive counter values modulo 2^16 restores the
//! per-actor order.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{CorruptionError, FormatError};
use crate::ids::ActorId;
use crate::trace::entry::TraceEntry;

/// One contiguous run of a single actor's events.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subtrace {
    pub actor: ActorId,
    pub ordering: u16,
    /// Events of this chunk, excluding the subtrace-start entry itself.
    pub events: Vec<TraceEntry>,
}

/// Split a decoded entry stream into subtraces in file order.
///
/// Every entry is attributed to the most recent subtrace start; a stream that
/// does not open with one is malformed.
pub fn group_subtraces(entries: &[(usize, TraceEntry)]) -> Result<Vec<Subtrace>, FormatError> {
    let mut out: Vec<Subtrace> = Vec::new();
    for &(offset, entry) in entries {
        match entry {
            TraceEntry::SubtraceStart { actor, ordering } => out.push(Subtrace {
                actor,
                ordering,
                events: Vec::new(),
            }),
            other => match out.last_mut() {
                Some(current) => current.events.push(other),
                None => return Err(FormatError::LeadingEntryNotSubtraceStart { offset }),
            },
        }
    }
    Ok(out)
}

/// Compute the execution order of one actor's subtrace counters.
///
/// Counters were assigned consecutively modulo 2^16, so the correct order is
/// the unique chain where each counter is followed by its successor; it
/// starts at the one counter whose predecessor is absent. Returns indexes
/// into `counters` in execution order.
pub fn order_counters(actor: ActorId, counters: &[u16]) -> Result<Vec<usize>, CorruptionError> {
    if counters.is_empty() {
        return Ok(Vec::new());
    }
    let mut index_of: HashMap<u16, usize> = HashMap::with_capacity(counters.len());
    for (i, &c) in counters.iter().enumerate() {
        if index_of.insert(c, i).is_some() {
            return Err(CorruptionError::SubtraceDuplicate { actor, counter: c });
        }
    }
    if counters.len() == 1 << 16 {
        // Every counter value present: no chain start exists.
        return Err(CorruptionError::SubtraceAmbiguous { actor });
    }
    let present: HashSet<u16> = index_of.keys().copied().collect();
    let mut starts: Vec<u16> = counters
        .iter()
        .copied()
        .filter(|c| !present.contains(&c.wrapping_sub(1)))
        .collect();
    if starts.len() != 1 {
        // More than one chain start means at least one counter is missing
        // between recorded ones; report the first gap.
        starts.sort_unstable();
        let missing = starts
            .iter()
            .map(|s| s.wrapping_sub(1))
            .min()
            .expect("at least one start");
        return Err(CorruptionError::SubtraceGap { actor, missing });
    }
    let mut order = Vec::with_capacity(counters.len());
    let mut next = starts[0];
    for _ in 0..counters.len() {
        match index_of.get(&next) {
            Some(&i) => order.push(i),
            None => return Err(CorruptionError::SubtraceGap { actor, missing: next }),
        }
        next = next.wrapping_add(1);
    }
    Ok(order)
}

/// Regroup file-order subtraces per actor and sort each actor's chunks back
/// into execution order.
pub fn reconstruct_subtrace_order(
    subtraces: Vec<Subtrace>,
) -> Result<BTreeMap<ActorId, Vec<Subtrace>>, CorruptionError> {
    let mut per_actor: BTreeMap<ActorId, Vec<Subtrace>> = BTreeMap::new();
    for st in subtraces {
        per_actor.entry(st.actor).or_default().push(st);
    }
    for (actor, chunks) in per_actor.iter_mut() {
        let counters: Vec<u16> = chunks.iter().map(|s| s.ordering).collect();
        let order = order_counters(*actor, &counters)?;
        let mut sorted = Vec::with_capacity(chunks.len());
        for i in order {
            sorted.push(chunks[i].clone());
        }
        *chunks = sorted;
    }
    Ok(per_actor)
}
