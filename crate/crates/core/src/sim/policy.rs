use serde::{Deserialize, Serialize};

use crate::dram::PracParams;
use crate::error::ConfigError;
use crate::queue::Psq;

/// Which structure decides what gets mitigated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueueKind {
    /// Priority service queue holding the highest-count rows.
    Psq { capacity: usize },
    /// FIFO fed whenever an increment toggles counter bit `tbit`.
    ///
    /// With `block_abo_toggle`, ACTs issued inside an open ABO window never
    /// enqueue the row.
    FifoTbit { capacity: usize, tbit: u32, block_abo_toggle: bool },
    /// FIFO fed whenever a row's count reaches `threshold` or more.
    FifoFullCount { capacity: usize, threshold: u32 },
    /// Reference tracker that always knows the true top row of the bank.
    IdealTopN,
}

impl QueueKind {
    /// Mitigation threshold M for FIFO designs.
    pub fn fifo_threshold(&self) -> Option<u32> {
        match *self {
            QueueKind::FifoTbit { tbit, .. } => Some(1 << tbit),
            QueueKind::FifoFullCount { threshold, .. } => Some(threshold),
            _ => None,
        }
    }

    pub fn is_fifo(&self) -> bool {
        self.fifo_threshold().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proactive {
    Off,
    EveryRef,
    EnergyAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationPolicy {
    pub queue: QueueKind,
    /// Every bank mitigates its top row on each all-bank RFM.
    pub opportunistic: bool,
    pub proactive: Proactive,
    /// Energy-aware gate: a REF mitigates only rows at or above this count.
    pub n_pro: u32,
}

impl MitigationPolicy {
    /// QPRAC: 5-entry PSQ with opportunistic mitigation.
    pub fn qprac(params: &PracParams) -> Self {
        Self {
            queue: QueueKind::Psq { capacity: Psq::DEFAULT_CAPACITY },
            opportunistic: true,
            proactive: Proactive::Off,
            n_pro: default_n_pro(params),
        }
    }

    /// QPRAC without opportunistic mitigation.
    pub fn qprac_noop(params: &PracParams) -> Self {
        Self { opportunistic: false, ..Self::qprac(params) }
    }

    pub fn qprac_proactive(params: &PracParams) -> Self {
        Self { proactive: Proactive::EveryRef, ..Self::qprac(params) }
    }

    pub fn qprac_energy_aware(params: &PracParams) -> Self {
        Self { proactive: Proactive::EnergyAware, ..Self::qprac(params) }
    }

    /// Alert-only mitigation driven by an oracle that sees every counter.
    pub fn ideal(params: &PracParams) -> Self {
        Self { queue: QueueKind::IdealTopN, opportunistic: false, ..Self::qprac(params) }
    }

    /// Panopticon-style t-bit FIFO.
    pub fn fifo_tbit(capacity: usize, tbit: u32, params: &PracParams) -> Self {
        Self {
            queue: QueueKind::FifoTbit { capacity, tbit, block_abo_toggle: false },
            opportunistic: false,
            proactive: Proactive::Off,
            n_pro: default_n_pro(params),
        }
    }

    pub fn fifo_fullcount(capacity: usize, threshold: u32, params: &PracParams) -> Self {
        Self {
            queue: QueueKind::FifoFullCount { capacity, threshold },
            ..Self::fifo_tbit(capacity, 0, params)
        }
    }

    pub fn with_opportunistic(mut self, on: bool) -> Self {
        self.opportunistic = on;
        self
    }

    pub fn with_proactive(mut self, proactive: Proactive) -> Self {
        self.proactive = proactive;
        self
    }

    pub fn with_psq_capacity(mut self, capacity: usize) -> Self {
        if let QueueKind::Psq { capacity: c } = &mut self.queue {
            *c = capacity;
        }
        self
    }

    pub fn validate(&self, params: &PracParams) -> Result<(), ConfigError> {
        if self.proactive == Proactive::EnergyAware && self.n_pro == 0 {
            return Err(ConfigError::Policy("energy-aware mitigation needs n_pro >= 1".into()));
        }
        match self.queue {
            QueueKind::Psq { capacity } => {
                let need = params.n_mit as usize + usize::from(self.proactive != Proactive::Off);
                if capacity < need {
                    return Err(ConfigError::Policy(format!(
                        "PSQ capacity {capacity} below the required {need}"
                    )));
                }
            }
            QueueKind::FifoTbit { capacity, tbit, .. } => {
                if capacity == 0 || tbit >= 31 {
                    return Err(ConfigError::Policy("FIFO needs capacity >= 1 and tbit < 31".into()));
                }
            }
            QueueKind::FifoFullCount { capacity, threshold } => {
                if capacity == 0 || threshold == 0 {
                    return Err(ConfigError::Policy("FIFO needs capacity >= 1 and threshold >= 1".into()));
                }
            }
            QueueKind::IdealTopN => {}
        }
        Ok(())
    }
}

fn default_n_pro(params: &PracParams) -> u32 {
    (params.n_bo / 2).max(1)
}
