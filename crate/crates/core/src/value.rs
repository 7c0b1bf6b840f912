use std::fmt;
use std::sync::Arc;

use crate::runtime::{ActorHandle, PromiseHandle};

/// Message payloads. Every variant is deeply immutable (shared data sits
/// behind `Arc`), so a payload can never carry mutable state between actors —
/// the isolation rule holds by construction rather than by a send-time check.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Bytes(Arc<[u8]>),
    Actor(ActorHandle),
    Promise(PromiseHandle),
    Tuple(Arc<[Value]>),
}

impl Value {
    /// The empty tuple, used where a payload or turn result carries nothing.
    pub fn unit() -> Value {
        Value::Tuple(Arc::new([]))
    }

    pub fn str(s: impl AsRef<str>) -> Value {
        Value::Str(Arc::from(s.as_ref()))
    }

    pub fn tuple(items: impl Into<Vec<Value>>) -> Value {
        Value::Tuple(items.into().into())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_actor(&self) -> Option<&ActorHandle> {
        match self {
            Value::Actor(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_promise(&self) -> Option<&PromiseHandle> {
        match self {
            Value::Promise(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Value]> {
        match self {
            Value::Tuple(v) => Some(v),
            _ => None,
        }
    }

    /// Tuple field accessor; `None` for non-tuples or out-of-range indexes.
    pub fn item(&self, index: usize) -> Option<&Value> {
        self.as_tuple().and_then(|t| t.get(index))
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Value {
        Value::Int(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Value {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Value {
        Value::str(v)
    }
}

impl From<String> for Value {
    fn from(v: String) -> Value {
        Value::Str(v.into())
    }
}

impl From<ActorHandle> for Value {
    fn from(v: ActorHandle) -> Value {
        Value::Actor(v)
    }
}

impl From<PromiseHandle> for Value {
    fn from(v: PromiseHandle) -> Value {
        Value::Promise(v)
    }
}

/// Canonical rendering, stable across runs for everything except unresolved
/// promise identity (promises print without identity). Actor handles print
/// as their id, which replay keeps stable.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
            Value::Bytes(v) => {
                write!(f, "0x")?;
                for b in v.iter() {
                    write!(f, "{b:02x}")?;
                }
                Ok(())
            }
            Value::Actor(h) => write!(f, "{}", h.id()),
            Value::Promise(_) => write!(f, "<promise>"),
            Value::Tuple(items) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, ")")
            }
        }
    }
}
