use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::forwarding::{NodeId, PacketUid};
use crate::radio::{TxEvent, TxId};

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    GeneratePacket(NodeId),
    MobilityTick,
    TxStart(Box<TxEvent>),
    TxEnd(TxId),
    WaitExpiry(NodeId, PacketUid),
    TimerExpiry(NodeId, PacketUid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    /// Insertion counter breaking ties between equal times.
    pub sequence: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Future event set ordered by `(time, sequence)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_sequence: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedules `kind` at `time`.
    ///
    /// # Panics
    /// If `time` lies before the current simulation time.
    pub fn schedule(&mut self, time: f64, kind: EventKind) {
        assert!(
            time >= self.now,
            "event scheduled in the past ({time} < {})",
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event { time, sequence, kind });
    }

    /// Pops the next event if it occurs no later than `horizon`.
    pub fn pop_until(&mut self, horizon: f64) -> Option<Event> {
        if self.heap.peek()?.time > horizon {
            return None;
        }
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_times_follow_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(1.0, EventKind::TxEnd(TxId(2)));
        q.schedule(1.0, EventKind::TxEnd(TxId(1)));
        q.schedule(0.5, EventKind::MobilityTick);
        assert_eq!(q.pop_until(10.0).unwrap().kind, EventKind::MobilityTick);
        assert_eq!(q.pop_until(10.0).unwrap().kind, EventKind::TxEnd(TxId(2)));
        assert_eq!(q.pop_until(10.0).unwrap().kind, EventKind::TxEnd(TxId(1)));
        assert!(q.pop_until(10.0).is_none());
    }

    #[test]
    fn horizon_stops_the_queue() {
        let mut q = EventQueue::new();
        q.schedule(3.0, EventKind::MobilityTick);
        assert!(q.pop_until(2.0).is_none());
        assert_eq!(q.len(), 1);
        assert!(q.pop_until(3.0).is_some());
    }

    #[test]
    #[should_panic(expected = "past")]
    fn scheduling_in_the_past_panics() {
        let mut q = EventQueue::new();
        q.schedule(1.0, EventKind::MobilityTick);
        q.pop_until(5.0);
        q.schedule(0.5, EventKind::MobilityTick);
    }

    proptest! {
        #[test]
        fn pops_are_time_ordered(times in prop::collection::vec(0.0f64..100.0, 1..200)) {
            let mut q = EventQueue::new();
            for t in &times {
                q.schedule(*t, EventKind::MobilityTick);
            }
            let mut last = (f64::NEG_INFINITY, 0u64);
            while let Some(ev) = q.pop_until(f64::INFINITY) {
                prop_assert!(ev.time > last.0 || (ev.time == last.0 && ev.sequence > last.1));
                last = (ev.time, ev.sequence);
            }
        }
    }
}
