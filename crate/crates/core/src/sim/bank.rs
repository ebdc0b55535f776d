use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::policy::QueueKind;
use crate::queue::{FifoQueue, Psq, RowId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct RowCounter {
    pub count: u32,
    pub last_update: u64,
}

/// The per-bank structure that nominates rows for mitigation.
#[derive(Debug, Clone)]
pub enum ServiceQueue {
    Psq(Psq),
    Fifo(FifoQueue),
    /// Every non-zero counter, ordered like the PSQ (count desc, oldest first).
    Ideal(BTreeSet<(Reverse<u32>, u64, RowId)>),
}

impl ServiceQueue {
    pub(crate) fn for_kind(kind: &QueueKind) -> Self {
        match *kind {
            QueueKind::Psq { capacity } => ServiceQueue::Psq(Psq::new(capacity)),
            QueueKind::FifoTbit { capacity, .. } | QueueKind::FifoFullCount { capacity, .. } => {
                ServiceQueue::Fifo(FifoQueue::new(capacity))
            }
            QueueKind::IdealTopN => ServiceQueue::Ideal(BTreeSet::new()),
        }
    }

    /// Rows in service order.
    pub fn rows(&self) -> Vec<RowId> {
        match self {
            ServiceQueue::Psq(q) => q.entries().iter().map(|e| e.row_id).collect(),
            ServiceQueue::Fifo(q) => q.iter().collect(),
            ServiceQueue::Ideal(s) => s.iter().map(|&(_, _, r)| r).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ServiceQueue::Psq(q) => q.len(),
            ServiceQueue::Fifo(q) => q.len(),
            ServiceQueue::Ideal(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-bank tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankTally {
    pub activations: u64,
    pub alerts: u64,
    pub mitigations: u64,
}

/// Counters, queue and Alert Back-Off state of one bank.
#[derive(Debug, Clone)]
pub struct BankState {
    pub(crate) counters: HashMap<RowId, RowCounter>,
    pub(crate) queue: ServiceQueue,
    /// Highest count each row reached before being mitigated.
    pub(crate) peaks: HashMap<RowId, u32>,
    pub(crate) acts_since_alert_service: u64,
    /// Bank ACTs that must still elapse before this bank may alert again.
    pub(crate) holdoff: u32,
    pub(crate) alert_pending: bool,
    pub(crate) tally: BankTally,
}

impl BankState {
    pub(crate) fn new(kind: &QueueKind) -> Self {
        Self {
            counters: HashMap::new(),
            queue: ServiceQueue::for_kind(kind),
            peaks: HashMap::new(),
            acts_since_alert_service: 0,
            holdoff: 0,
            alert_pending: false,
            tally: BankTally::default(),
        }
    }

    pub fn count(&self, row: RowId) -> u32 {
        self.counters.get(&row).map_or(0, |c| c.count)
    }

    pub fn queue(&self) -> &ServiceQueue {
        &self.queue
    }

    pub fn alert_pending(&self) -> bool {
        self.alert_pending
    }

    pub fn acts_since_alert_service(&self) -> u64 {
        self.acts_since_alert_service
    }

    pub fn tally(&self) -> BankTally {
        self.tally
    }

    /// Rows with a non-zero counter, sorted by row.
    pub fn counters(&self) -> Vec<(RowId, u32)> {
        let mut v: Vec<_> = self.counters.iter().filter(|(_, c)| c.count > 0).map(|(&r, c)| (r, c.count)).collect();
        v.sort_unstable();
        v
    }

    /// Highest count any row of this bank reached.
    pub fn peak(&self) -> u32 {
        self.peaks.values().copied().max().unwrap_or(0)
    }

    pub fn peak_of(&self, row: RowId) -> u32 {
        self.peaks.get(&row).copied().unwrap_or(0)
    }

    /// The row the next mitigation would pick, with its count.
    pub fn top(&self) -> Option<(RowId, u32)> {
        match &self.queue {
            ServiceQueue::Psq(q) => q.top().map(|e| (e.row_id, e.count)),
            ServiceQueue::Fifo(q) => q.front().map(|r| (r, self.count(r))),
            ServiceQueue::Ideal(s) => s.first().map(|&(Reverse(c), _, r)| (r, c)),
        }
    }
}
