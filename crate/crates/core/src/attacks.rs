//! Adversarial activation patterns executed against a simulated channel.
//!
//! Every attack plays the memory controller as well: Alerts are serviced only
//! after the full `abo_act` window has been used, and one REF is issued per
//! `acts_per_trefi` ACTs. Attacks stop once the modeled clock reaches
//! `t_refw`.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dram::{acts_per_trefi, CounterWidth, DramTimings, PracParams};
use crate::error::AttackError;
use crate::queue::RowId;
use crate::sim::{ChannelState, MitigationPolicy, Proactive, QueueKind, ServiceQueue, SimEvent, SimStats, TraceStep};

/// Result of one attack run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackReport {
    pub target_row: RowId,
    /// Highest count the target reached without being mitigated.
    pub max_unmitigated: u64,
    pub total_acts_used: u64,
    /// Online rounds (wave attack only, 0 otherwise).
    pub rounds: u64,
    /// The attack ran out of time before it could exploit the defense.
    pub window_exhausted: bool,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub report: AttackReport,
    pub stats: SimStats,
    /// Defense the attack ran against; replaying `trace` needs it.
    pub policy: MitigationPolicy,
    /// Every command issued, when recording was requested.
    pub trace: Option<Vec<TraceStep>>,
}

/// Row spacing that keeps blast-radius refreshes off other attack rows.
pub fn isolation_spacing(params: &PracParams) -> u32 {
    2 * params.blast_radius + 1
}

/// Attacks run with 32-bit counters so saturation never caps a result.
fn attack_width() -> CounterWidth {
    CounterWidth::new(32)
}

/// Worst-case controller wrapped around a channel.
struct Driver {
    ch: ChannelState,
    per_ref: u64,
    since_ref: u64,
    mitigated: Vec<(usize, RowId)>,
    services: u64,
    trace: Option<Vec<TraceStep>>,
}

impl Driver {
    fn new(params: &PracParams, timings: &DramTimings, policy: MitigationPolicy, trace: bool) -> Result<Self, AttackError> {
        let ch = ChannelState::new(*params, *timings, policy, attack_width())?;
        Ok(Self {
            ch,
            per_ref: acts_per_trefi(timings),
            since_ref: 0,
            mitigated: Vec::new(),
            services: 0,
            trace: trace.then(Vec::new),
        })
    }

    /// Issues one ACT, servicing a used-up ABO window first. Returns false,
    /// without activating, once the refresh window is over.
    fn act(&mut self, bank: usize, row: RowId) -> Result<bool, AttackError> {
        self.ready()?;
        if !self.fits(self.ch.timings().t_rc) || self.ch.window_remaining() == Some(0) {
            return Ok(false);
        }
        let ev = self.ch.activate(bank, row)?;
        self.log(TraceStep::Act { bank, row });
        self.absorb(ev);
        self.since_ref += 1;
        if self.since_ref == self.per_ref && self.fits(self.ch.timings().t_rfc) {
            let ev = self.ch.refresh_tick()?;
            self.log(TraceStep::Ref);
            self.absorb(ev);
            self.since_ref = 0;
        }
        Ok(true)
    }

    /// Services the Alert if its ABO window is used up.
    fn ready(&mut self) -> Result<(), AttackError> {
        if self.ch.window_remaining() == Some(0) && self.fits(self.rfm_ns()) {
            self.service()?;
        }
        Ok(())
    }

    /// A command taking `ns` still ends inside the refresh window.
    fn fits(&self, ns: u64) -> bool {
        self.ch.clock_ns() + ns <= self.ch.timings().t_refw
    }

    fn rfm_ns(&self) -> u64 {
        u64::from(self.ch.params().n_mit) * self.ch.timings().t_rfm_ab
    }

    fn service(&mut self) -> Result<(), AttackError> {
        let ev = self.ch.service_alert()?;
        self.services += 1;
        self.log(TraceStep::Service);
        self.absorb(ev);
        Ok(())
    }

    fn log(&mut self, step: TraceStep) {
        if let Some(t) = &mut self.trace {
            t.push(step);
        }
    }

    fn absorb(&mut self, events: Vec<SimEvent>) {
        self.mitigated.extend(events.into_iter().filter_map(|e| match e {
            SimEvent::Mitigated { bank, row, .. } => Some((bank, row)),
            _ => None,
        }));
    }

    fn drop_mitigated(&mut self, dropped: &mut HashSet<RowId>) {
        dropped.extend(self.mitigated.drain(..).map(|(_, row)| row));
    }

    /// Activates `row` in bank 0 unless it has already been mitigated.
    /// Returns false once the refresh window is over.
    fn act_live(&mut self, row: RowId, dropped: &mut HashSet<RowId>) -> Result<bool, AttackError> {
        self.ready()?;
        self.drop_mitigated(dropped);
        if dropped.contains(&row) {
            return Ok(true);
        }
        let more = self.act(0, row)?;
        self.drop_mitigated(dropped);
        Ok(more)
    }

    /// Copy of the driver for lookahead, without trace recording.
    fn fork(&self) -> Self {
        Self {
            ch: self.ch.clone(),
            per_ref: self.per_ref,
            since_ref: self.since_ref,
            mitigated: Vec::new(),
            services: self.services,
            trace: None,
        }
    }

    /// Copy of the driver that keeps recording.
    fn fork_traced(&self) -> Self {
        Self { trace: self.trace.clone(), ..self.fork() }
    }

    fn take_mitigated(&mut self) -> Vec<(usize, RowId)> {
        std::mem::take(&mut self.mitigated)
    }

    /// An ABO window is open and still has room.
    fn in_window(&self) -> bool {
        self.ch.window_remaining().is_some_and(|r| r > 0)
    }

    fn queue_full(&self, bank: usize) -> bool {
        match self.ch.bank(bank).queue() {
            ServiceQueue::Fifo(q) => q.is_full(),
            ServiceQueue::Psq(q) => q.is_full(),
            ServiceQueue::Ideal(_) => false,
        }
    }

    fn activations(&self) -> u64 {
        self.ch.bank(0).tally().activations
    }

    /// Breaks a stalled loop: services a pending Alert, or reports that no
    /// further progress is possible.
    fn unstick(&mut self, before: u64) -> Result<bool, AttackError> {
        if self.activations() != before {
            return Ok(true);
        }
        if self.ch.alert_asserted() && self.fits(self.rfm_ns()) {
            self.service()?;
            return Ok(true);
        }
        Ok(false)
    }

    fn finish(mut self, target: RowId, rounds: u64, window_exhausted: bool) -> AttackOutcome {
        let stats = self.ch.stats();
        let report = AttackReport {
            target_row: target,
            max_unmitigated: u64::from(stats.max_of(0, target)),
            total_acts_used: stats.activations,
            rounds,
            window_exhausted,
        };
        AttackOutcome { report, stats, policy: *self.ch.policy(), trace: self.trace.take() }
    }
}

/// Hands out isolated filler rows, fresh ones first, then recycled ones.
struct Fillers {
    next: u32,
    spacing: u32,
    rows: u32,
    free: VecDeque<RowId>,
}

impl Fillers {
    /// Fillers start one slot after `reserved` attack rows.
    fn new(reserved: u32, spacing: u32, rows: u32) -> Self {
        Self { next: reserved, spacing, rows, free: VecDeque::new() }
    }

    fn take(&mut self) -> Option<RowId> {
        let fresh = self.next.checked_mul(self.spacing).filter(|&r| r < self.rows);
        match fresh {
            Some(r) => {
                self.next += 1;
                Some(r)
            }
            None => self.free.pop_front(),
        }
    }

    fn recycle(&mut self, row: RowId) {
        self.free.push_back(row);
    }
}

/// Toggle+Forget against a t-bit FIFO of `queue_size` entries.
///
/// `queue_size + 1` rows are raised round-robin to one ACT short of a t-bit
/// toggle. The first `queue_size` then toggle and fill the FIFO, which raises
/// an Alert, and the target toggles inside the ABO window where its offer
/// bounces off the full queue.
pub fn toggle_forget(
    queue_size: usize,
    tbit: u32,
    params: &PracParams,
    timings: &DramTimings,
    trace: bool,
) -> Result<AttackOutcome, AttackError> {
    if !(4..=64).contains(&queue_size) {
        return Err(AttackError::Unsupported(format!("queue size {queue_size} outside 4..=64")));
    }
    if tbit >= 31 {
        return Err(AttackError::Unsupported(format!("t-bit {tbit} too large")));
    }
    let m = 1u32 << tbit;
    let policy = MitigationPolicy::fifo_tbit(queue_size, tbit, params);
    let mut d = Driver::new(params, timings, policy, trace)?;
    let spacing = isolation_spacing(params);
    let rows: Vec<RowId> = (0..=queue_size as u32).map(|k| k * spacing).collect();
    let (fillers, target) = (&rows[..queue_size], rows[queue_size]);
    let mut exploited = 0u64;

    'attack: loop {
        let before = d.activations();
        loop {
            let mut moved = false;
            for &r in &rows {
                if d.ch.count(0, r) % m != m - 1 {
                    if !d.act(0, r)? {
                        break 'attack;
                    }
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        for &f in fillers {
            if d.ch.alert_asserted() {
                break;
            }
            if d.ch.count(0, f) % m == m - 1 && !d.act(0, f)? {
                break 'attack;
            }
        }
        if d.in_window() && d.queue_full(0) {
            exploited += 1;
            while d.in_window() && d.queue_full(0) {
                if !d.act(0, target)? {
                    break 'attack;
                }
            }
        }
        if !d.unstick(before)? {
            break;
        }
    }
    Ok(d.finish(target, 0, exploited == 0))
}

/// Fill+Escape against a full-count FIFO, reporting the worse of the two
/// refresh assumptions (with and without a FIFO pop on every REF).
pub fn fill_escape(
    threshold: u32,
    queue_size: usize,
    params: &PracParams,
    timings: &DramTimings,
    trace: bool,
) -> Result<AttackOutcome, AttackError> {
    let plain = fill_escape_with(threshold, queue_size, false, params, timings, trace)?;
    let refreshing = fill_escape_with(threshold, queue_size, true, params, timings, trace)?;
    Ok(if refreshing.report.max_unmitigated > plain.report.max_unmitigated { refreshing } else { plain })
}

/// Fill+Escape with an explicit refresh assumption.
///
/// The target sits at `threshold - 1`. Fresh filler rows are raised to the
/// threshold until the FIFO is full, and the target is then hammered only
/// with the ABO window ACTs, whose offers the full queue rejects.
pub fn fill_escape_with(
    threshold: u32,
    queue_size: usize,
    refresh_mitigation: bool,
    params: &PracParams,
    timings: &DramTimings,
    trace: bool,
) -> Result<AttackOutcome, AttackError> {
    if threshold == 0 || queue_size == 0 {
        return Err(AttackError::Unsupported("threshold and queue size must be positive".into()));
    }
    let proactive = if refresh_mitigation { Proactive::EveryRef } else { Proactive::Off };
    let policy = MitigationPolicy::fifo_fullcount(queue_size, threshold, params).with_proactive(proactive);
    let mut d = Driver::new(params, timings, policy, trace)?;
    let target = 0;
    let mut fillers = Fillers::new(1, isolation_spacing(params), timings.rows_per_bank);
    let mut exploited = 0u64;

    'attack: {
        for _ in 1..threshold {
            if !d.act(0, target)? {
                break 'attack;
            }
        }
        loop {
            let before = d.activations();
            while !d.ch.alert_asserted() {
                for (_, row) in d.take_mitigated() {
                    if row != target {
                        fillers.recycle(row);
                    }
                }
                let Some(f) = fillers.take() else { break 'attack };
                while d.ch.count(0, f) < threshold && !d.ch.alert_asserted() {
                    if !d.act(0, f)? {
                        break 'attack;
                    }
                }
            }
            if d.in_window() && d.queue_full(0) {
                exploited += 1;
                while d.in_window() && d.queue_full(0) {
                    if !d.act(0, target)? {
                        break 'attack;
                    }
                }
            }
            if !d.unstick(before)? {
                break;
            }
        }
    }
    Ok(d.finish(target, 0, exploited == 0))
}

/// The t-bit FIFO with the countermeasure that ACTs inside an ABO window
/// never toggle the t-bit.
///
/// The target is hammered exclusively with window ACTs, so it never toggles
/// outside a window and is never enqueued. Filler rows toggle outside windows
/// to keep the FIFO refilling and the Alerts coming. The channel serializes
/// ACTs across banks, so filling one bank is as cheap as filling any other;
/// the attack uses bank 0 throughout.
pub fn blocked_tbit(
    threshold: u32,
    queue_size: usize,
    params: &PracParams,
    timings: &DramTimings,
    trace: bool,
) -> Result<AttackOutcome, AttackError> {
    if !threshold.is_power_of_two() || threshold < 2 {
        return Err(AttackError::Unsupported(format!("threshold {threshold} is not a power of two")));
    }
    if queue_size == 0 {
        return Err(AttackError::Unsupported("queue size must be positive".into()));
    }
    let tbit = threshold.trailing_zeros();
    let policy = MitigationPolicy {
        queue: QueueKind::FifoTbit { capacity: queue_size, tbit, block_abo_toggle: true },
        ..MitigationPolicy::fifo_tbit(queue_size, tbit, params)
    };
    let mut d = Driver::new(params, timings, policy, trace)?;
    let target = 0;
    let mut fillers = Fillers::new(1, isolation_spacing(params), timings.rows_per_bank);
    let mut exploited = 0u64;

    'attack: {
        for _ in 1..threshold {
            if !d.act(0, target)? {
                break 'attack;
            }
        }
        loop {
            let before = d.activations();
            while !d.ch.alert_asserted() {
                for (_, row) in d.take_mitigated() {
                    if row != target {
                        fillers.recycle(row);
                    }
                }
                let Some(f) = fillers.take() else { break 'attack };
                // One full period from zero ends on a toggle.
                loop {
                    if !d.act(0, f)? {
                        break 'attack;
                    }
                    if d.ch.count(0, f) % threshold == 0 || d.ch.alert_asserted() {
                        break;
                    }
                }
            }
            if d.in_window() {
                exploited += 1;
                while d.in_window() {
                    if !d.act(0, target)? {
                        break 'attack;
                    }
                }
            }
            if !d.unstick(before)? {
                break;
            }
        }
    }
    Ok(d.finish(target, 0, exploited == 0))
}

/// Rows used by the wave attack, in activation order.
///
/// The last row is the intended survivor. The `blast_radius` rows before it
/// sit right below it, so their mitigations refresh the survivor. All other
/// rows are isolated when the bank has room.
pub fn wave_rows(r1: u32, params: &PracParams, timings: &DramTimings) -> Vec<RowId> {
    let br = params.blast_radius.min(r1 - 1);
    let spread = r1 - br;
    let spacing = isolation_spacing(params).min((timings.rows_per_bank - br) / spread).max(1);
    let mut rows: Vec<RowId> = (0..spread).map(|k| k * spacing).collect();
    let base = rows[rows.len() - 1];
    rows.extend((1..=br).map(|d| base + d));
    rows
}

/// Wave (feinting) attack on one bank.
///
/// Setup raises the pool to `n_bo - 1` ACTs per row. Each online round then
/// activates every live row once and drops the rows the defense mitigated.
/// The survivor and the `blast_radius` rows right below it (their
/// mitigations refresh the survivor) form a protected block, normally at the
/// end of the round. A round is first played on a copy, up to the first
/// service of the next one; if the defense would pick a protected row, the
/// block moves up to `abo_act + abo_delay` positions earlier. If no position
/// is safe, a round that only loses protected rows in the next round is
/// still played, and the final phase starts.
///
/// In the final phase the survivor rests while the other live rows keep
/// being activated round-robin, staying ahead of it until mitigated. The
/// survivor is then hammered alone.
///
/// Services remove exactly `n_mit` rows, so the pool is trimmed to one more
/// than a multiple of `n_mit`, which lets the last service before the
/// survivor's take only other rows.
pub fn wave_attack(
    defense: &MitigationPolicy,
    r1: u32,
    params: &PracParams,
    timings: &DramTimings,
    trace: bool,
) -> Result<AttackOutcome, AttackError> {
    if r1 == 0 || r1 > timings.rows_per_bank {
        return Err(AttackError::Unsupported(format!("r1 = {r1} outside 1..={}", timings.rows_per_bank)));
    }
    if defense.queue.is_fifo() {
        return Err(AttackError::Unsupported("the wave attack targets PSQ or ideal tracking".into()));
    }
    let mut d = Driver::new(params, timings, *defense, trace)?;
    let rows = wave_rows(r1 - (r1 - 1) % params.n_mit, params, timings);
    let n = rows.len();
    let guarded = n - 1 - (params.blast_radius as usize).min(n - 1);
    let (decoys, protected) = rows.split_at(guarded);
    let mut dropped: HashSet<RowId> = HashSet::new();
    let small = 4 * (params.alert_cycle() + params.blast_radius) as usize;
    let mut rounds = 0;
    let mut best: Option<(u32, u64, Driver)> = None;

    'attack: {
        for _ in 1..params.n_bo {
            if !play(&mut d, &rows, &mut dropped)? {
                break 'attack;
            }
        }
        'online: loop {
            d.ready()?;
            d.drop_mitigated(&mut dropped);
            if protected.iter().any(|r| dropped.contains(r)) {
                break 'attack;
            }
            if n - dropped.len() <= small {
                try_final(&d, &rows, &dropped, rounds + 1, &mut best)?;
            }
            let live: Vec<RowId> = decoys.iter().copied().filter(|r| !dropped.contains(r)).collect();
            let mut last = None;
            for shift in 0..=(params.alert_cycle() as usize).min(live.len()) {
                let at = live.len() - shift;
                let mut order = live.clone();
                order.splice(at..at, protected.iter().copied());
                let mut f = d.fork();
                let mut gone = dropped.clone();
                if !play(&mut f, &order, &mut gone)? || n - gone.len() <= params.n_mit as usize {
                    continue;
                }
                if protected.iter().any(|r| gone.contains(r)) {
                    continue;
                }
                let services = f.services;
                let mut open = true;
                for &r in live.iter().chain(protected).cycle().take(2 * order.len()) {
                    if f.services > services || !open {
                        break;
                    }
                    open = f.act_live(r, &mut gone)?;
                }
                if open && !protected.iter().any(|r| gone.contains(r)) {
                    if !play(&mut d, &order, &mut dropped)? {
                        break 'attack;
                    }
                    rounds += 1;
                    continue 'online;
                }
                last.get_or_insert(order);
            }
            if let Some(order) = last {
                if !play(&mut d, &order, &mut dropped)? {
                    break 'attack;
                }
                rounds += 1;
                d.ready()?;
                d.drop_mitigated(&mut dropped);
            }
            try_final(&d, &rows, &dropped, rounds + 1, &mut best)?;
            break;
        }
    }
    Ok(match best {
        Some((_, rounds, f)) => f.finish(rows[n - 1], rounds, false),
        None => d.finish(rows[n - 1], rounds, true),
    })
}

/// Plays the final phase from every round-robin starting point on copies of
/// `d` and keeps the run with the highest survivor count in `best`.
fn try_final(
    d: &Driver,
    rows: &[RowId],
    dropped: &HashSet<RowId>,
    rounds: u64,
    best: &mut Option<(u32, u64, Driver)>,
) -> Result<(), AttackError> {
    let survivor = rows[rows.len() - 1];
    let shields = rows.len() - 1 - rows[..rows.len() - 1].iter().filter(|r| dropped.contains(r)).count();
    let cycle = d.ch.params().alert_cycle() as usize;
    for start in 0..shields.clamp(1, cycle + 1) {
        let mut f = d.fork_traced();
        if final_phase(&mut f, rows, &mut dropped.clone(), start)? {
            let score = f.ch.stats().max_of(0, survivor);
            if best.as_ref().is_none_or(|b| score > b.0) {
                *best = Some((score, rounds, f));
            }
        }
    }
    Ok(())
}

/// Activates `order` once, skipping mitigated rows. Returns false once the
/// refresh window is over.
fn play(d: &mut Driver, order: &[RowId], dropped: &mut HashSet<RowId>) -> Result<bool, AttackError> {
    for &r in order {
        if !d.act_live(r, dropped)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Activates the live rows other than the last round-robin until they are
/// all mitigated, then hammers the last row until it is mitigated too.
/// Returns false if the refresh window ran out first.
fn final_phase(d: &mut Driver, rows: &[RowId], dropped: &mut HashSet<RowId>, start: usize) -> Result<bool, AttackError> {
    let (&survivor, shields) = rows.split_last().expect("non-empty pool");
    let mut turn = start;
    loop {
        d.ready()?;
        d.drop_mitigated(dropped);
        if dropped.contains(&survivor) {
            return Ok(true);
        }
        let live: Vec<RowId> = shields.iter().copied().filter(|r| !dropped.contains(r)).collect();
        let pick = if live.is_empty() {
            survivor
        } else {
            turn %= live.len();
            turn += 1;
            live[turn - 1]
        };
        if !d.act(0, pick)? {
            return Ok(false);
        }
    }
}
