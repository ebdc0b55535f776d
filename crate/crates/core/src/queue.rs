//! Service queues: the priority service queue (PSQ) and the FIFO queue.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub type RowId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsqEntry {
    pub row_id: RowId,
    pub count: u32,
    /// Event sequence number of the latest observation of this row.
    pub last_update: u64,
}

/// Outcome of [`Psq::observe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observed {
    Updated,
    Inserted,
    /// Inserted by displacing the given minimum entry.
    Evicted(PsqEntry),
    Rejected,
}

/// Small sorted array of the highest-count rows of one bank.
///
/// Entries are kept sorted by count descending; among equal counts the least
/// recently updated entry comes first, so it is both popped first and, within
/// the minimum-count group, evicted first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Psq {
    capacity: usize,
    entries: Vec<PsqEntry>,
}

impl Psq {
    pub const DEFAULT_CAPACITY: usize = 5;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "PSQ capacity must be at least 1");
        Self { capacity, entries: Vec::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn entries(&self) -> &[PsqEntry] {
        &self.entries
    }

    pub fn top(&self) -> Option<&PsqEntry> {
        self.entries.first()
    }

    pub fn min_count(&self) -> Option<u32> {
        self.entries.last().map(|e| e.count)
    }

    pub fn contains(&self, row: RowId) -> bool {
        self.entries.iter().any(|e| e.row_id == row)
    }

    /// Records that `row` now holds `count` activations.
    pub fn observe(&mut self, row: RowId, count: u32, seq: u64) -> Observed {
        if count == 0 {
            return self.remove(row).map_or(Observed::Rejected, |_| Observed::Updated);
        }
        let entry = PsqEntry { row_id: row, count, last_update: seq };
        if let Some(i) = self.entries.iter().position(|e| e.row_id == row) {
            self.entries.remove(i);
            self.insert_sorted(entry);
            return Observed::Updated;
        }
        if !self.is_full() {
            self.insert_sorted(entry);
            return Observed::Inserted;
        }
        let min = self.min_count().expect("full queue is non-empty");
        if count <= min {
            return Observed::Rejected;
        }
        let victim_idx = self
            .entries
            .iter()
            .position(|e| e.count == min)
            .expect("minimum is present");
        let victim = self.entries.remove(victim_idx);
        self.insert_sorted(entry);
        Observed::Evicted(victim)
    }

    /// Removes and returns up to `k` entries in service order.
    pub fn pop_top(&mut self, k: usize) -> Vec<PsqEntry> {
        let n = k.min(self.entries.len());
        self.entries.drain(..n).collect()
    }

    pub fn remove(&mut self, row: RowId) -> Option<PsqEntry> {
        let i = self.entries.iter().position(|e| e.row_id == row)?;
        Some(self.entries.remove(i))
    }

    fn insert_sorted(&mut self, entry: PsqEntry) {
        let at = self
            .entries
            .iter()
            .position(|e| (e.count, std::cmp::Reverse(e.last_update)) < (entry.count, std::cmp::Reverse(entry.last_update)))
            .unwrap_or(self.entries.len());
        self.entries.insert(at, entry);
    }
}

impl Default for Psq {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}

/// Insertion-ordered queue that rejects offers once full.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FifoQueue {
    capacity: usize,
    entries: VecDeque<RowId>,
}

impl FifoQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "FIFO capacity must be at least 1");
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn contains(&self, row: RowId) -> bool {
        self.entries.contains(&row)
    }

    pub fn front(&self) -> Option<RowId> {
        self.entries.front().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = RowId> + '_ {
        self.entries.iter().copied()
    }

    /// Appends `row` unless the queue is full. `false` means the row bypassed
    /// the queue.
    pub fn offer(&mut self, row: RowId) -> bool {
        if self.is_full() {
            return false;
        }
        self.entries.push_back(row);
        true
    }

    pub fn pop_front(&mut self) -> Option<RowId> {
        self.entries.pop_front()
    }

    /// Drops every queued instance of `row`.
    pub fn remove(&mut self, row: RowId) -> bool {
        let before = self.entries.len();
        self.entries.retain(|&r| r != row);
        before != self.entries.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(q: &Psq) -> Vec<(RowId, u32)> {
        q.entries().iter().map(|e| (e.row_id, e.count)).collect()
    }

    #[test]
    fn insert_into_non_full() {
        let mut q = Psq::new(2);
        assert_eq!(q.observe(1, 5, 0), Observed::Inserted);
        assert_eq!(rows(&q), vec![(1, 5)]);
    }

    #[test]
    fn equal_to_min_does_not_displace() {
        let mut q = Psq::new(2);
        q.observe(10, 9, 0);
        q.observe(11, 4, 1);
        assert_eq!(q.observe(12, 4, 2), Observed::Rejected);
        assert_eq!(rows(&q), vec![(10, 9), (11, 4)]);
        assert!(matches!(q.observe(12, 7, 3), Observed::Evicted(e) if e.row_id == 11));
        assert_eq!(rows(&q), vec![(10, 9), (12, 7)]);
    }

    #[test]
    fn pop_top_order_and_overdraw() {
        let mut q = Psq::new(2);
        q.observe(10, 9, 0);
        q.observe(12, 7, 1);
        let mut q2 = q.clone();
        assert_eq!(q.pop_top(1).iter().map(|e| e.row_id).collect::<Vec<_>>(), vec![10]);
        assert_eq!(rows(&q), vec![(12, 7)]);
        assert_eq!(q2.pop_top(4).iter().map(|e| e.row_id).collect::<Vec<_>>(), vec![10, 12]);
        assert!(q2.is_empty());
        assert!(q2.pop_top(1).is_empty());
    }

    #[test]
    fn ties_pop_least_recently_updated() {
        let mut q = Psq::new(3);
        q.observe(2, 9, 5);
        q.observe(1, 9, 3);
        q.observe(3, 7, 6);
        assert_eq!(q.pop_top(1)[0].row_id, 1);
    }

    #[test]
    fn ties_evict_least_recently_updated_minimum() {
        let mut q = Psq::new(3);
        q.observe(1, 9, 0);
        q.observe(2, 4, 1);
        q.observe(3, 4, 2);
        assert!(matches!(q.observe(4, 5, 3), Observed::Evicted(e) if e.row_id == 2));
    }

    #[test]
    fn update_moves_entry() {
        let mut q = Psq::new(3);
        q.observe(1, 3, 0);
        q.observe(2, 2, 1);
        assert_eq!(q.observe(2, 4, 2), Observed::Updated);
        assert_eq!(rows(&q), vec![(2, 4), (1, 3)]);
    }

    #[test]
    fn fifo_basics() {
        let mut f = FifoQueue::new(2);
        assert!(f.offer(7));
        assert!(f.offer(8));
        assert!(!f.offer(9));
        assert_eq!(f.len(), 2);
        assert_eq!(f.pop_front(), Some(7));
        assert_eq!(f.pop_front(), Some(8));
        assert_eq!(f.pop_front(), None);
    }
}
