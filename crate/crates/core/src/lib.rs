//! PRAC/QPRAC Rowhammer mitigation simulator and analytical security model.
//!
//! The crate is organised bottom-up:
//!
//! * [`dram`]: PRAC parameters, DDR5 timings and derived activation budgets.
//! * [`queue`]: the priority service queue (PSQ) and the FIFO service queue.
//! * [`sim`]: per-bank counters, the Alert Back-Off state machine and channel
//!   level mitigation policies.
//! * [`attacks`]: adversarial activation patterns executed against a channel.
//! * [`security`]: the closed-form pool recursion, secure threshold curves and
//!   the bandwidth-loss model.

pub mod attacks;
pub mod dram;
pub mod error;
pub mod queue;
pub mod security;
pub mod sim;

pub use dram::{CounterWidth, DramTimings, PracParams};
pub use error::{AttackError, ConfigError, ModelError, SimError};
pub use queue::{FifoQueue, Psq, PsqEntry};
