use std::fmt;

/// Identity of an actor within one run. Ids are assigned from a global
/// counter in creation order, so the set of ids in any run is contiguous.
/// The bootstrap (main) actor is always id 0.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ActorId(pub u32);

/// The bootstrap actor's id.
pub const MAIN_ACTOR: ActorId = ActorId(0);

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "actor#{}", self.0)
    }
}

/// Identifier for one recorded external payload. Allocated per origin actor,
/// monotonically from 0, so `(ActorId, DataId)` is globally unique and ties a
/// trace entry to its payload in the data file.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct DataId(pub u32);

impl fmt::Display for DataId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "data#{}", self.0)
    }
}
