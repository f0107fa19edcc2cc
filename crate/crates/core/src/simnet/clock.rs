use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SimError;

pub fn ms_to_ns(ms: f64) -> u64 {
    (ms.max(0.0) * 1e6).round() as u64
}

pub fn ns_to_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

struct Entry<T> {
    at: u64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Virtual time in integer nanoseconds plus the pending events. Events
/// fire in timestamp order; equal timestamps fire in insertion order.
pub struct VirtualClock<T> {
    now: u64,
    seq: u64,
    queue: BinaryHeap<Entry<T>>,
}

impl<T> Default for VirtualClock<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> VirtualClock<T> {
    pub fn new() -> Self {
        Self { now: 0, seq: 0, queue: BinaryHeap::new() }
    }

    pub fn now_ns(&self) -> u64 {
        self.now
    }

    pub fn now_ms(&self) -> f64 {
        ns_to_ms(self.now)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn next_at(&self) -> Option<u64> {
        self.queue.peek().map(|e| e.at)
    }

    pub fn schedule_at(&mut self, at_ns: u64, item: T) -> Result<(), SimError> {
        if at_ns < self.now {
            return Err(SimError::TimeReversal { now_ms: self.now_ms(), requested_ms: ns_to_ms(at_ns) });
        }
        self.queue.push(Entry { at: at_ns, seq: self.seq, item });
        self.seq += 1;
        Ok(())
    }

    pub fn schedule_in(&mut self, delay_ms: f64, item: T) {
        let at = self.now + ms_to_ns(delay_ms);
        self.schedule_at(at, item).expect("a non-negative delay never reverses time");
    }

    /// Pops the earliest event if it is due by `until_ns`, moving the clock
    /// to its timestamp.
    pub fn pop_due(&mut self, until_ns: u64) -> Option<(u64, T)> {
        if self.queue.peek()?.at > until_ns {
            return None;
        }
        let e = self.queue.pop()?;
        self.now = e.at;
        Some((e.at, e.item))
    }

    /// Fires everything due by `until_ms` and leaves the clock there.
    pub fn advance(&mut self, until_ms: f64) -> Result<Vec<(f64, T)>, SimError> {
        let until = ms_to_ns(until_ms);
        if until < self.now {
            return Err(SimError::TimeReversal { now_ms: self.now_ms(), requested_ms: until_ms });
        }
        let mut fired = Vec::new();
        while let Some((at, item)) = self.pop_due(until) {
            fired.push((ns_to_ms(at), item));
        }
        self.now = until;
        Ok(fired)
    }
}
