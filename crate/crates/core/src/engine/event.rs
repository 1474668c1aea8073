//! Events and the time-ordered queue.
//!
//! Events at the same instant run in a fixed order: swap completions, then
//! transaction arrivals, then the control epoch, so a swap landing exactly
//! at a check time is visible to that check. Remaining ties go by
//! insertion sequence.

use crate::model::{Side, Transaction};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    SwapCompletion(Side),
    TxArrival(Transaction),
    ControlEpoch(u64),
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::SwapCompletion(_) => 0,
            EventKind::TxArrival(_) => 1,
            EventKind::ControlEpoch(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub sequence: u64,
}

/// Total order on events: time, then kind priority, then sequence.
pub fn event_order(a: &Event, b: &Event) -> Ordering {
    a.time
        .total_cmp(&b.time)
        .then_with(|| a.kind.priority().cmp(&b.kind.priority()))
        .then_with(|| a.sequence.cmp(&b.sequence))
}

/// Heap entry reversing [`event_order`] so the earliest event pops first.
#[derive(Debug)]
struct Pending(Event);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        event_order(&self.0, &other.0) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        event_order(&other.0, &self.0)
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Pending>,
    next_sequence: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Pending(Event {
            time,
            kind,
            sequence,
        }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|p| p.0)
    }

    pub fn peek(&self) -> Option<&Event> {
        self.heap.peek().map(|p| &p.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
