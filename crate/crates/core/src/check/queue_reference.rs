//! Packet-level reference model of the transmit buffer.
//!
//! Every packet is stored individually with the slot its batch was generated
//! in. The replacement, dropping and FCFS rules are applied to that list and
//! the compact [`QueueState`] is recomputed from it, so the bookkeeping shares
//! no code with [`crate::queue`].

use std::collections::HashSet;

use crate::queue::{slot_step, BatchDecision, QueueState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Packet {
    batch: u64,
    born: u64,
}

#[derive(Debug, Clone)]
pub struct PacketListQueue {
    now: u64,
    next_batch: u64,
    packets: Vec<Packet>,
    /// Generation slot of the freshest status the receiver holds.
    freshest_delivered: u64,
    batch_size: u32,
}

impl PacketListQueue {
    pub fn new(batch_size: u32) -> Self {
        Self { now: 0, next_batch: 0, packets: Vec::new(), freshest_delivered: 0, batch_size }
    }

    fn batches(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = Vec::new();
        for p in &self.packets {
            if ids.last() != Some(&p.batch) {
                ids.push(p.batch);
            }
        }
        ids
    }

    fn remove_batch(&mut self, id: u64) {
        self.packets.retain(|p| p.batch != id);
    }

    pub fn step(&mut self, arrived: bool, decision: BatchDecision, y: u32) {
        let batches = self.batches();
        if arrived {
            if batches.len() == 2 {
                // The newcomer takes the later batch's place.
                self.remove_batch(batches[1]);
            }
            if !batches.is_empty() && decision == BatchDecision::Drop {
                self.remove_batch(batches[0]);
            }
            let id = self.next_batch;
            self.next_batch += 1;
            for _ in 0..self.batch_size {
                self.packets.push(Packet { batch: id, born: self.now });
            }
        } else if batches.len() == 2 && decision == BatchDecision::Drop {
            self.remove_batch(batches[0]);
        }

        let sent = (y as usize).min(self.packets.len());
        let delivered: Vec<Packet> = self.packets.drain(..sent).collect();
        for p in delivered {
            let finished = !self.packets.iter().any(|q| q.batch == p.batch);
            if finished {
                self.freshest_delivered = self.freshest_delivered.max(p.born);
            }
        }
        self.now += 1;
    }

    pub fn state(&self) -> QueueState {
        let batches = self.batches();
        let count = |id: u64| self.packets.iter().filter(|p| p.batch == id).count() as u32;
        let age = |id: u64| {
            let born = self.packets.iter().find(|p| p.batch == id).map(|p| p.born).unwrap();
            (self.now - born) as u32
        };
        QueueState {
            q1: batches.first().map_or(0, |&b| count(b)),
            q2: batches.get(1).map_or(0, |&b| count(b)),
            age1: batches.first().map(|&b| age(b)),
            age2: batches.get(1).map(|&b| age(b)),
            aoi_rx: (self.now - self.freshest_delivered) as u32,
        }
    }

    /// Time-shift-invariant description of the model, for deduplication.
    fn signature(&self) -> (Vec<(u64, u64)>, u64) {
        let first = self.packets.first().map_or(0, |p| p.batch);
        let pk = self.packets.iter().map(|p| (p.batch - first, self.now - p.born)).collect();
        (pk, self.now - self.freshest_delivered)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExhaustiveReport {
    pub transitions_checked: u64,
    pub distinct_states: usize,
    pub mismatches: Vec<String>,
}

/// Compares [`slot_step`] with the packet-list model over every input
/// sequence of length up to `depth`, each step drawn from
/// `arrived x decision x y in 0..=max_y`.
///
/// Paths that reach an identical (compact state, reference state) pair are
/// merged, since both models are time-invariant from that point on; every
/// sequence is therefore covered without enumerating `32^depth` paths.
pub fn exhaustive_equivalence(batch_size: u32, max_y: u32, depth: usize) -> ExhaustiveReport {
    type Key = (QueueState, (Vec<(u64, u64)>, u64));
    let mut report = ExhaustiveReport::default();
    let mut seen: HashSet<QueueState> = HashSet::new();
    let mut frontier = vec![(QueueState::empty(), PacketListQueue::new(batch_size))];
    seen.insert(QueueState::empty());
    for _ in 0..depth {
        let mut next: Vec<(QueueState, PacketListQueue)> = Vec::new();
        let mut next_keys: HashSet<Key> = HashSet::new();
        for (state, reference) in &frontier {
            for arrived in [false, true] {
                for decision in [BatchDecision::Drop, BatchDecision::Keep] {
                    for y in 0..=max_y {
                        let (s, _) = slot_step(*state, arrived, decision, y, batch_size);
                        let mut r = reference.clone();
                        r.step(arrived, decision, y);
                        report.transitions_checked += 1;
                        if let Err(e) = s.check(batch_size) {
                            report.mismatches.push(format!("{e} after {state:?} {arrived} {decision:?} y={y}"));
                        }
                        if s != r.state() {
                            report.mismatches.push(format!(
                                "from {state:?} with arrived={arrived} {decision:?} y={y}: step gave {s:?}, reference {:?}",
                                r.state()
                            ));
                        }
                        seen.insert(s);
                        if next_keys.insert((s, r.signature())) {
                            next.push((s, r));
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    report.distinct_states = seen.len();
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_worked_example() {
        let mut r = PacketListQueue::new(3);
        r.step(true, BatchDecision::Keep, 0);
        r.step(true, BatchDecision::Keep, 1);
        let s = r.state();
        assert_eq!((s.q1, s.q2, s.age1, s.age2), (2, 3, Some(2), Some(1)));
        r.step(false, BatchDecision::Keep, 5);
        assert_eq!(r.state().aoi_rx, 2);
    }

    #[test]
    fn exhaustive_depth_six_has_no_mismatch() {
        let report = exhaustive_equivalence(3, 7, 6);
        assert!(report.mismatches.is_empty(), "{:?}", &report.mismatches[..report.mismatches.len().min(5)]);
        assert!(report.distinct_states > 20);
    }
}
