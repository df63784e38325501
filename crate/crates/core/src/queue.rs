//! Two-batch transmit buffer with replacement, proactive dropping and
//! first-come-first-served service.
//!
//! At the start of a slot the buffer reacts to a possible arrival and to the
//! link's drop decision ([`apply_arrival`]); at the end of the slot the
//! packets that fit into the channel are drained and the ages are advanced
//! ([`apply_transmission`]). A batch is useful to the receiver only once all
//! of its packets have been delivered, and the receiver-side AoI jumps down to
//! that batch's age at that moment.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Whether a link keeps transmitting its earlier batch or discards it in
/// favour of newer data. Encodes the binary factor `gamma`: `Keep` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BatchDecision {
    Drop,
    Keep,
}

impl BatchDecision {
    pub fn from_gamma(gamma: u8) -> Self {
        if gamma == 0 {
            BatchDecision::Drop
        } else {
            BatchDecision::Keep
        }
    }

    pub fn gamma(self) -> u8 {
        match self {
            BatchDecision::Drop => 0,
            BatchDecision::Keep => 1,
        }
    }
}

/// Batch size and per-slot arrival probability of one transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalProcess {
    pub batch_size: u32,
    pub arrival_prob: f64,
}

impl Default for ArrivalProcess {
    fn default() -> Self {
        Self { batch_size: 3, arrival_prob: 0.8 }
    }
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if self.batch_size == 0 {
            return Err(ConfigError::Schema("arrival.batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return Err(ConfigError::Schema(format!(
                "arrival.arrival_prob must lie in [0, 1], got {}",
                self.arrival_prob
            )));
        }
        Ok(())
    }
}

/// Buffer occupancy and ages of one link, in packets and slots.
///
/// `None` ages mark an empty batch slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct QueueState {
    pub q1: u32,
    pub q2: u32,
    pub age1: Option<u32>,
    pub age2: Option<u32>,
    pub aoi_rx: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueInvariantError(pub String);

impl fmt::Display for QueueInvariantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "queue invariant violated: {}", self.0)
    }
}

impl std::error::Error for QueueInvariantError {}

impl QueueState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.q1 == 0
    }

    pub fn packets(&self) -> u32 {
        self.q1 + self.q2
    }

    pub fn check(&self, batch_size: u32) -> Result<(), QueueInvariantError> {
        let err = |msg: &str| Err(QueueInvariantError(format!("{msg}: {self:?}")));
        if self.q2 > 0 && self.q1 == 0 {
            return err("later batch present without an earlier one");
        }
        if (self.q1 == 0) != self.age1.is_none() || (self.q2 == 0) != self.age2.is_none() {
            return err("batch occupancy and age presence disagree");
        }
        if self.q1 > batch_size || self.q2 > batch_size {
            return err("batch larger than the batch size");
        }
        if let (Some(a1), Some(a2)) = (self.age1, self.age2) {
            if a1 < a2 {
                return err("earlier batch younger than the later one");
            }
        }
        Ok(())
    }
}

/// Bookkeeping for one slot of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotEvents {
    pub batches_dropped: u32,
    pub batches_completed: u32,
    pub packets_sent: u32,
}

/// Buffer update at the start of a slot. Returns the new state and the number
/// of batches discarded (dropped or replaced).
///
/// # Panics
///
/// If `state` violates the [`QueueState`] invariants.
pub fn apply_arrival(state: QueueState, arrived: bool, decision: BatchDecision, batch_size: u32) -> (QueueState, u32) {
    if let Err(e) = state.check(batch_size) {
        panic!("{e}");
    }
    let fresh = QueueState { q1: batch_size, q2: 0, age1: Some(0), age2: None, ..state };
    let appended = QueueState { q2: batch_size, age2: Some(0), ..state };
    use BatchDecision::*;
    match (state.q1 > 0, state.q2 > 0, arrived, decision) {
        // Empty buffer: the decision has nothing to act on.
        (false, _, false, _) => (state, 0),
        (false, _, true, _) => (fresh, 0),
        // One batch.
        (true, false, false, _) => (state, 0),
        (true, false, true, Drop) => (fresh, 1),
        (true, false, true, Keep) => (appended, 0),
        // Two batches; an arrival always replaces the later one.
        (true, true, false, Drop) => (QueueState { q1: state.q2, q2: 0, age1: state.age2, age2: None, ..state }, 1),
        (true, true, false, Keep) => (state, 0),
        (true, true, true, Drop) => (fresh, 2),
        (true, true, true, Keep) => (appended, 1),
    }
}

/// Drains up to `y` packets in FCFS order and advances all ages by one slot.
/// Returns the new state and the number of batches completed.
pub fn apply_transmission(state: QueueState, y: u32) -> (QueueState, u32) {
    let QueueState { q1, q2, age1, age2, aoi_rx } = state;
    let inc = |a: Option<u32>| a.map(|a| a + 1);
    if q1 == 0 {
        return (QueueState { aoi_rx: aoi_rx + 1, ..state }, 0);
    }
    let done_age = |a: Option<u32>| a.expect("occupied batch without an age") + 1;
    if y < q1 {
        let next = QueueState { q1: q1 - y, q2, age1: inc(age1), age2: inc(age2), aoi_rx: aoi_rx + 1 };
        (next, 0)
    } else if y < q1 + q2 {
        let next = QueueState { q1: q1 + q2 - y, q2: 0, age1: inc(age2), age2: None, aoi_rx: done_age(age1) };
        (next, 1)
    } else {
        let freshest = if q2 > 0 { age2 } else { age1 };
        let next = QueueState { q1: 0, q2: 0, age1: None, age2: None, aoi_rx: done_age(freshest) };
        (next, if q2 > 0 { 2 } else { 1 })
    }
}

/// One full slot: arrival handling followed by transmission of `y` packets.
pub fn slot_step(state: QueueState, arrived: bool, decision: BatchDecision, y: u32, batch_size: u32) -> (QueueState, SlotEvents) {
    let (after_arrival, batches_dropped) = apply_arrival(state, arrived, decision, batch_size);
    let packets_sent = y.min(after_arrival.packets());
    let (next, batches_completed) = apply_transmission(after_arrival, y);
    (next, SlotEvents { batches_dropped, batches_completed, packets_sent })
}
