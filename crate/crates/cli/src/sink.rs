//! Result collection. Benchmark actors publish their observable outcomes as
//! string key/value pairs; hashing the sorted pairs gives every run a single
//! digest, which is what replay verification compares.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

/// Shared result map. Each actor only ever writes keys it owns, so the final
/// map is deterministic exactly when the run is.
#[derive(Clone, Default)]
pub struct Sink(Arc<Mutex<BTreeMap<String, String>>>);

impl Sink {
    pub fn new() -> Sink {
        Sink::default()
    }

    pub fn put(&self, key: impl Into<String>, value: impl ToString) {
        self.0
            .lock()
            .unwrap()
            .insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.0.lock().unwrap().get(key).cloned()
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.0.lock().unwrap().clone()
    }

    /// Hex SHA-256 over `key=value` lines in key order.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.0.lock().unwrap().iter() {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        let mut hex = String::with_capacity(64);
        for byte in hasher.finalize() {
            write!(hex, "{byte:02x}").unwrap();
        }
        hex
    }
}
