//! Event-driven model of PRAC counters and the Alert Back-Off protocol.
//!
//! A [`ChannelState`] owns one [`BankState`] per bank. The caller plays the
//! memory controller: it issues ACTs, REFs and Alert services, and the
//! channel enforces the ABO contract (at most `abo_act` ACTs between an Alert
//! and its service).

mod bank;
mod policy;
mod stats;
mod trace;

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

pub use bank::{BankState, BankTally, ServiceQueue};
pub use policy::{MitigationPolicy, Proactive, QueueKind};
pub use stats::{MitigationTally, RowPeak, SimStats};
pub use trace::{parse_trace, write_trace, TraceStep};

use crate::dram::{acts_per_trefi, CounterWidth, DramTimings, PracParams};
use crate::error::{ConfigError, SimError};
use crate::queue::RowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationKind {
    Alert,
    Opportunistic,
    Proactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    AlertRaised { bank: usize },
    Enqueued { bank: usize, row: RowId },
    /// A FIFO offer was rejected because the queue was full.
    Bypassed { bank: usize, row: RowId },
    Mitigated { bank: usize, row: RowId, count: u32, kind: MitigationKind },
    VictimRefreshed { bank: usize, row: RowId, count: u32 },
    ServiceNoop,
}

/// Full channel: banks, parameters, policy and the shared clock.
#[derive(Debug, Clone)]
pub struct ChannelState {
    banks: Vec<BankState>,
    params: PracParams,
    timings: DramTimings,
    policy: MitigationPolicy,
    width: CounterWidth,
    clock_ns: u64,
    alert_asserted: bool,
    acts_in_abo_window: u32,
    seq: u64,
    step: usize,
    stats: SimStats,
    recording: Option<Vec<TraceStep>>,
}

impl ChannelState {
    pub fn new(
        params: PracParams,
        timings: DramTimings,
        policy: MitigationPolicy,
        width: CounterWidth,
    ) -> Result<Self, ConfigError> {
        params.validate()?;
        timings.validate()?;
        policy.validate(&params)?;
        let banks = (0..timings.banks_per_channel).map(|_| BankState::new(&policy.queue)).collect();
        Ok(Self {
            banks,
            params,
            timings,
            policy,
            width,
            clock_ns: 0,
            alert_asserted: false,
            acts_in_abo_window: 0,
            seq: 0,
            step: 0,
            stats: SimStats::default(),
            recording: None,
        })
    }

    /// Starts logging every executed command as a replayable trace.
    pub fn record_trace(&mut self) {
        self.recording.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceStep>> {
        self.recording.take()
    }

    pub fn params(&self) -> &PracParams {
        &self.params
    }

    pub fn timings(&self) -> &DramTimings {
        &self.timings
    }

    pub fn policy(&self) -> &MitigationPolicy {
        &self.policy
    }

    pub fn counter_width(&self) -> CounterWidth {
        self.width
    }

    pub fn clock_ns(&self) -> u64 {
        self.clock_ns
    }

    pub fn bank(&self, bank: usize) -> &BankState {
        &self.banks[bank]
    }

    pub fn banks(&self) -> &[BankState] {
        &self.banks
    }

    pub fn count(&self, bank: usize, row: RowId) -> u32 {
        self.banks[bank].count(row)
    }

    pub fn alert_asserted(&self) -> bool {
        self.alert_asserted
    }

    pub fn acts_in_abo_window(&self) -> u32 {
        self.acts_in_abo_window
    }

    /// ACTs the controller may still issue before it must service the Alert.
    pub fn window_remaining(&self) -> Option<u32> {
        self.alert_asserted.then(|| self.params.abo_act - self.acts_in_abo_window)
    }

    /// True once the modeled clock has consumed the refresh window.
    pub fn window_exhausted(&self) -> bool {
        self.clock_ns >= self.timings.t_refw
    }

    pub fn stats(&self) -> SimStats {
        let mut s = self.stats.clone();
        s.timeline_ns = self.clock_ns;
        s.max_unmitigated = self
            .banks
            .iter()
            .enumerate()
            .flat_map(|(b, bank)| bank.peaks.iter().map(move |(&row, &max)| RowPeak { bank: b, row, max }))
            .filter(|p| p.max > 0)
            .collect();
        s.max_unmitigated.sort_unstable_by_key(|p| (p.bank, p.row));
        s
    }

    pub fn activate(&mut self, bank: usize, row: RowId) -> Result<Vec<SimEvent>, SimError> {
        self.check_target(bank, row)?;
        if self.alert_asserted && self.acts_in_abo_window >= self.params.abo_act {
            return Err(SimError::AboWindowExceeded { abo_act: self.params.abo_act });
        }
        self.log(TraceStep::Act { bank, row });
        let mut events = Vec::new();
        let in_window = self.alert_asserted;
        self.bump(bank, row, in_window, &mut events)?;
        if in_window {
            self.acts_in_abo_window += 1;
        }
        let b = &mut self.banks[bank];
        b.holdoff = b.holdoff.saturating_sub(1);
        b.acts_since_alert_service += 1;
        b.tally.activations += 1;
        self.stats.activations += 1;
        self.clock_ns += self.timings.t_rc;
        self.check_alert(bank, &mut events);
        Ok(events)
    }

    /// Issues the `n_mit` all-bank RFMs answering the current Alert.
    pub fn service_alert(&mut self) -> Result<Vec<SimEvent>, SimError> {
        self.log(TraceStep::Service);
        let mut events = Vec::new();
        let pending: Vec<bool> = self.banks.iter().map(|b| b.alert_pending).collect();
        if !pending.iter().any(|&p| p) {
            self.stats.noop_services += 1;
            events.push(SimEvent::ServiceNoop);
            return Ok(events);
        }
        for _ in 0..self.params.n_mit {
            for (b, &alerting) in pending.iter().enumerate() {
                if alerting {
                    self.mitigate_top(b, MitigationKind::Alert, &mut events)?;
                } else if self.policy.opportunistic {
                    self.mitigate_top(b, MitigationKind::Opportunistic, &mut events)?;
                }
            }
        }
        for (b, &alerting) in pending.iter().enumerate() {
            if alerting {
                let bank = &mut self.banks[b];
                bank.alert_pending = false;
                bank.holdoff = self.params.abo_delay;
                bank.acts_since_alert_service = 0;
            }
        }
        self.alert_asserted = false;
        self.acts_in_abo_window = 0;
        self.stats.rfms_issued += u64::from(self.params.n_mit);
        self.clock_ns += u64::from(self.params.n_mit) * self.timings.t_rfm_ab;
        for b in 0..self.banks.len() {
            self.check_alert(b, &mut events);
        }
        Ok(events)
    }

    /// One periodic REF, with proactive mitigation if the policy asks for it.
    pub fn refresh_tick(&mut self) -> Result<Vec<SimEvent>, SimError> {
        self.log(TraceStep::Ref);
        let mut events = Vec::new();
        self.clock_ns += self.timings.t_rfc;
        self.stats.refreshes += 1;
        for b in 0..self.banks.len() {
            let go = match self.policy.proactive {
                Proactive::Off => false,
                Proactive::EveryRef => true,
                Proactive::EnergyAware => self.banks[b].top().is_some_and(|(_, c)| c >= self.policy.n_pro),
            };
            if go {
                self.mitigate_top(b, MitigationKind::Proactive, &mut events)?;
            }
        }
        for b in 0..self.banks.len() {
            self.check_alert(b, &mut events);
        }
        Ok(events)
    }

    /// Executes one trace command.
    pub fn execute(&mut self, step: TraceStep) -> Result<Vec<SimEvent>, SimError> {
        match step {
            TraceStep::Act { bank, row } => self.activate(bank, row),
            TraceStep::Ref => self.refresh_tick(),
            TraceStep::Service => self.service_alert(),
        }
    }

    /// Serializable view of the complete channel state.
    pub fn snapshot(&self) -> ChannelSnapshot {
        ChannelSnapshot {
            clock_ns: self.clock_ns,
            alert_asserted: self.alert_asserted,
            acts_in_abo_window: self.acts_in_abo_window,
            banks: self
                .banks
                .iter()
                .enumerate()
                .filter(|(_, b)| !b.counters.is_empty() || b.alert_pending || !b.queue.is_empty())
                .map(|(i, b)| BankSnapshot {
                    bank: i,
                    counters: b.counters(),
                    queue: b.queue.rows(),
                    alert_pending: b.alert_pending,
                    holdoff: b.holdoff,
                })
                .collect(),
        }
    }

    fn check_target(&self, bank: usize, row: RowId) -> Result<(), SimError> {
        if bank >= self.banks.len() {
            return Err(SimError::BankOutOfRange { step: self.step, bank });
        }
        if row >= self.timings.rows_per_bank {
            return Err(SimError::RowOutOfRange { step: self.step, bank, row });
        }
        Ok(())
    }

    fn log(&mut self, step: TraceStep) {
        self.step += 1;
        if let Some(t) = &mut self.recording {
            t.push(step);
        }
    }

    /// +1 on a row counter, from an ACT or a victim refresh.
    fn bump(&mut self, bank: usize, row: RowId, in_window: bool, events: &mut Vec<SimEvent>) -> Result<u32, SimError> {
        self.seq += 1;
        let seq = self.seq;
        let max = self.width.max_value();
        let b = &mut self.banks[bank];
        let c = b.counters.entry(row).or_default();
        if c.count >= max {
            return Err(SimError::CounterOverflow { bank, row, bits: self.width.bits });
        }
        let old = *c;
        c.count += 1;
        c.last_update = seq;
        let new = c.count;
        let peak = b.peaks.entry(row).or_insert(0);
        *peak = (*peak).max(new);

        let offer = match self.policy.queue {
            QueueKind::FifoTbit { tbit, block_abo_toggle, .. } => {
                let toggled = ((old.count ^ new) >> tbit) & 1 == 1;
                toggled && !(block_abo_toggle && in_window)
            }
            QueueKind::FifoFullCount { threshold, .. } => new >= threshold,
            _ => false,
        };
        match &mut b.queue {
            ServiceQueue::Psq(q) => {
                q.observe(row, new, seq);
            }
            ServiceQueue::Ideal(s) => {
                if old.count > 0 {
                    s.remove(&(Reverse(old.count), old.last_update, row));
                }
                s.insert((Reverse(new), seq, row));
            }
            ServiceQueue::Fifo(q) => {
                if offer && !q.contains(row) {
                    if q.offer(row) {
                        events.push(SimEvent::Enqueued { bank, row });
                    } else {
                        events.push(SimEvent::Bypassed { bank, row });
                    }
                }
            }
        }
        Ok(new)
    }

    fn alert_condition(&self, bank: usize) -> bool {
        let b = &self.banks[bank];
        match &b.queue {
            ServiceQueue::Fifo(q) => q.is_full(),
            _ => b.top().is_some_and(|(_, c)| c >= self.params.n_bo),
        }
    }

    fn check_alert(&mut self, bank: usize, events: &mut Vec<SimEvent>) {
        let b = &self.banks[bank];
        if b.alert_pending || b.holdoff > 0 || !self.alert_condition(bank) {
            return;
        }
        let b = &mut self.banks[bank];
        b.alert_pending = true;
        b.tally.alerts += 1;
        if !self.alert_asserted {
            self.alert_asserted = true;
            self.acts_in_abo_window = 0;
            self.stats.alerts += 1;
        }
        events.push(SimEvent::AlertRaised { bank });
    }

    fn mitigate_top(&mut self, bank: usize, kind: MitigationKind, events: &mut Vec<SimEvent>) -> Result<(), SimError> {
        let row = match &mut self.banks[bank].queue {
            ServiceQueue::Psq(q) => q.pop_top(1).first().map(|e| e.row_id),
            ServiceQueue::Fifo(q) => q.pop_front(),
            ServiceQueue::Ideal(s) => s.pop_first().map(|(_, _, r)| r),
        };
        match row {
            Some(row) => self.mitigate(bank, row, kind, events),
            None => Ok(()),
        }
    }

    /// Resets the aggressor and refreshes its blast-radius neighbours.
    fn mitigate(&mut self, bank: usize, row: RowId, kind: MitigationKind, events: &mut Vec<SimEvent>) -> Result<(), SimError> {
        let b = &mut self.banks[bank];
        let old = b.counters.remove(&row).unwrap_or_default();
        match &mut b.queue {
            ServiceQueue::Psq(q) => {
                q.remove(row);
            }
            ServiceQueue::Fifo(q) => {
                q.remove(row);
            }
            ServiceQueue::Ideal(s) => {
                s.remove(&(Reverse(old.count), old.last_update, row));
            }
        }
        b.tally.mitigations += 1;
        match kind {
            MitigationKind::Alert => self.stats.mitigations_by_kind.alert += 1,
            MitigationKind::Opportunistic => self.stats.mitigations_by_kind.opportunistic += 1,
            MitigationKind::Proactive => self.stats.mitigations_by_kind.proactive += 1,
        }
        events.push(SimEvent::Mitigated { bank, row, count: old.count, kind });

        let br = self.params.blast_radius;
        let rows = self.timings.rows_per_bank;
        for d in 1..=br {
            for victim in [row.checked_sub(d), row.checked_add(d).filter(|&v| v < rows)].into_iter().flatten() {
                let count = self.bump(bank, victim, false, events)?;
                events.push(SimEvent::VictimRefreshed { bank, row: victim, count });
            }
        }
        Ok(())
    }
}

/// Controller behaviour for [`run_pattern`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Insert one REF after every `acts_per_trefi` ACTs.
    pub auto_refresh: bool,
    /// Service an Alert only once the full `abo_act` window has been used.
    pub auto_service: bool,
    /// Allow the run to extend past one refresh window.
    pub multi_window: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { auto_refresh: true, auto_service: true, multi_window: false }
    }
}

impl RunOptions {
    /// Execute the trace exactly as written: no inserted REFs or services.
    pub fn verbatim() -> Self {
        Self { auto_refresh: false, auto_service: false, multi_window: false }
    }
}

/// Drives a channel through a command pattern.
///
/// With `auto_service` the controller delays every Alert service as long as
/// the protocol allows, which is the worst case for security.
pub fn run_pattern(channel: &mut ChannelState, pattern: &[TraceStep], opts: RunOptions) -> Result<SimStats, SimError> {
    let per_ref = acts_per_trefi(&channel.timings);
    let mut acts_since_ref = 0u64;
    let t_refw = channel.timings.t_refw;
    for (i, &step) in pattern.iter().enumerate() {
        let fail_at = |e: SimError| match e {
            SimError::RowOutOfRange { bank, row, .. } => SimError::RowOutOfRange { step: i, bank, row },
            SimError::BankOutOfRange { bank, .. } => SimError::BankOutOfRange { step: i, bank },
            other => other,
        };
        match step {
            TraceStep::Act { bank, row } => {
                channel.check_target(bank, row).map_err(fail_at)?;
                if opts.auto_service && channel.window_remaining() == Some(0) {
                    channel.service_alert()?;
                }
                channel.activate(bank, row).map_err(fail_at)?;
                acts_since_ref += 1;
                if opts.auto_refresh && acts_since_ref == per_ref {
                    channel.refresh_tick()?;
                    acts_since_ref = 0;
                }
            }
            TraceStep::Ref => {
                channel.refresh_tick()?;
                acts_since_ref = 0;
            }
            TraceStep::Service => {
                channel.service_alert()?;
            }
        }
        if !opts.multi_window && channel.clock_ns > t_refw {
            return Err(SimError::WindowExceeded { step: i, t_refw });
        }
    }
    Ok(channel.stats())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankSnapshot {
    pub bank: usize,
    pub counters: Vec<(RowId, u32)>,
    pub queue: Vec<RowId>,
    pub alert_pending: bool,
    pub holdoff: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSnapshot {
    pub clock_ns: u64,
    pub alert_asserted: bool,
    pub acts_in_abo_window: u32,
    pub banks: Vec<BankSnapshot>,
}
