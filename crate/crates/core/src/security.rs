//! Closed-form worst-case analysis of the wave attack against PRAC.
//!
//! The attacker first raises `r1` rows to `n_bo - 1` (setup), then activates
//! every surviving row once per round (online). Each round the Alerts it
//! triggers mitigate a fraction of the pool, and the last survivor ends with
//! `n_bo - 1 + n_online` activations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dram::{acts_per_trefi, DramTimings, PracParams};
use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub params: PracParams,
    pub timings: DramTimings,
    /// Model a proactive mitigation on every REF.
    pub proactive: bool,
    /// Time the channel is blocked per Alert.
    pub alert_time_ns: u64,
}

impl AnalysisConfig {
    pub fn new(params: PracParams, timings: DramTimings) -> Self {
        Self {
            params,
            timings,
            proactive: false,
            alert_time_ns: u64::from(params.n_mit) * timings.t_rfm_ab,
        }
    }

    /// PRAC-`n_mit` with default timings and a placeholder `n_bo`.
    pub fn prac(n_mit: u32) -> Result<Self, crate::ConfigError> {
        Ok(Self::new(PracParams::new(1, n_mit)?, DramTimings::default()))
    }

    pub fn with_proactive(mut self, on: bool) -> Self {
        self.proactive = on;
        self
    }

    pub fn with_n_bo(mut self, n_bo: u32) -> Self {
        self.params.n_bo = n_bo;
        self
    }
}

/// One online round of the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    /// Rows alive at the start of the round.
    pub pool: u64,
    pub activations: u64,
    pub alerts: u64,
    /// Rows removed by Alert mitigations.
    pub mitigated: u64,
    /// Rows removed by other means (proactive mitigation).
    pub extra: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSequence {
    /// R_1, R_2, ... down to the first pool at or below the terminal size.
    pub pools: Vec<u64>,
    pub rounds: Vec<Round>,
}

impl PoolSequence {
    /// Number of pool values, i.e. online rounds including the final one.
    pub fn nr(&self) -> u64 {
        self.pools.len() as u64
    }
}

/// Pool size at which the recursion stops: the final rows are covered by
/// the blast-radius and ABO window terms.
pub fn terminal_pool(params: &PracParams) -> u64 {
    u64::from(params.blast_radius + params.abo_act)
}

/// Iterates the pool recursion from `r1`.
///
/// `extra` returns the number of additional rows lost in a round, given that
/// round's Alert-driven figures.
pub fn pool_sequence(
    r1: u64,
    params: &PracParams,
    mut extra: impl FnMut(&Round) -> u64,
) -> Result<PoolSequence, ModelError> {
    if r1 == 0 {
        return Err(ModelError::EmptyPool);
    }
    let br = u64::from(params.blast_radius);
    let n_mit = u64::from(params.n_mit);
    let cycle = u64::from(params.alert_cycle()).max(1);
    let stop = terminal_pool(params);

    let mut pools = vec![r1];
    let mut rounds = Vec::new();
    let mut pool = r1;
    while pool > stop {
        let activations = pool.saturating_sub(br);
        let mitigated = n_mit * activations / cycle;
        let mut round = Round { pool, activations, alerts: mitigated / n_mit, mitigated, extra: 0 };
        round.extra = extra(&round);
        let next = pool.saturating_sub(round.mitigated + round.extra);
        if next >= pool {
            return Err(ModelError::Divergence { r1, pool });
        }
        rounds.push(round);
        pools.push(next);
        pool = next;
    }
    Ok(PoolSequence { pools, rounds })
}

fn round_busy(round: &Round, cfg: &AnalysisConfig) -> u64 {
    round.activations * cfg.timings.t_rc + round.alerts * cfg.alert_time_ns
}

/// Pool sequence under `cfg`, including proactive losses when enabled.
pub fn pool_sequence_for(r1: u64, cfg: &AnalysisConfig) -> Result<PoolSequence, ModelError> {
    pool_sequence(r1, &cfg.params, |round| {
        if cfg.proactive {
            cfg.timings.with_refresh(round_busy(round, cfg)) / cfg.timings.t_refi
        } else {
            0
        }
    })
}

/// Activations the last survivor gains during the online phase.
pub fn n_online(r1: u64, cfg: &AnalysisConfig) -> Result<u64, ModelError> {
    let p = &cfg.params;
    let nr = pool_sequence_for(r1, cfg)?.nr();
    Ok(nr + u64::from(p.abo_act + p.abo_delay + p.blast_radius))
}

/// Outcome of the setup-phase feasibility search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupPlan {
    /// Rows the attacker starts the setup phase with.
    pub setup_rows: u64,
    /// Rows alive when the online phase begins.
    pub r1: u64,
    /// Modeled duration of both phases, REF stalls included.
    pub elapsed_ns: u64,
}

/// Plans an attack starting with `setup_rows` rows; `None` if it cannot
/// finish inside one refresh window or proactive mitigation wipes the pool.
pub fn plan_setup(setup_rows: u64, n_bo: u32, cfg: &AnalysisConfig) -> Option<SetupPlan> {
    let t = &cfg.timings;
    let setup_acts = setup_rows * u64::from(n_bo.saturating_sub(1));
    let r1 = if cfg.proactive {
        setup_rows.checked_sub(setup_acts / acts_per_trefi(t)).filter(|&r| r > 0)?
    } else {
        setup_rows
    };
    let seq = pool_sequence_for(r1, cfg).ok()?;
    let online: u64 = seq.rounds.iter().map(|r| round_busy(r, cfg)).sum();
    let elapsed = t.with_refresh(setup_acts * t.t_rc + online);
    (elapsed <= t.t_refw).then_some(SetupPlan { setup_rows, r1, elapsed_ns: elapsed })
}

/// The feasible plan with the largest online pool, if any.
pub fn best_plan(n_bo: u32, cfg: &AnalysisConfig) -> Option<SetupPlan> {
    let cfg = cfg.with_n_bo(n_bo);
    let mut lo = 1u64;
    let mut hi = u64::from(cfg.timings.rows_per_bank);
    let mut best = plan_setup(lo, n_bo, &cfg)?;
    if let Some(p) = plan_setup(hi, n_bo, &cfg) {
        return Some(p);
    }
    // Invariant: lo feasible, hi infeasible.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match plan_setup(mid, n_bo, &cfg) {
            Some(p) => {
                best = p;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    Some(best)
}

/// Largest online pool an attacker can build within one refresh window.
/// Zero means proactive mitigation defeats the setup phase entirely.
pub fn max_r1(n_bo: u32, cfg: &AnalysisConfig) -> u64 {
    best_plan(n_bo, cfg).map_or(0, |p| p.r1)
}

/// Smallest Rowhammer threshold the configuration tolerates.
pub fn secure_trh(n_bo: u32, cfg: &AnalysisConfig) -> Result<u64, ModelError> {
    curve_point(n_bo, cfg).map(|p| p.min_secure_trh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_bo: u32,
    pub n_mit: u32,
    pub proactive: bool,
    pub max_r1: u64,
    pub n_online: u64,
    pub min_secure_trh: u64,
}

pub fn curve_point(n_bo: u32, cfg: &AnalysisConfig) -> Result<CurvePoint, ModelError> {
    let cfg = cfg.with_n_bo(n_bo);
    let r1 = max_r1(n_bo, &cfg);
    // With no feasible pool no row can be pushed past the threshold.
    let online = if r1 == 0 { 0 } else { n_online(r1, &cfg)? };
    Ok(CurvePoint {
        n_bo,
        n_mit: cfg.params.n_mit,
        proactive: cfg.proactive,
        max_r1: r1,
        n_online: online,
        min_secure_trh: u64::from(n_bo) + online,
    })
}

/// `n_bo` values swept by the curve command.
pub const CURVE_N_BO: [u32; 9] = [1, 2, 4, 8, 16, 32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityCurve {
    pub points: Vec<CurvePoint>,
}

impl SecurityCurve {
    pub fn compute(n_bos: &[u32], cfg: &AnalysisConfig) -> Result<Self, ModelError> {
        let points = n_bos.iter().map(|&n| curve_point(n, cfg)).collect::<Result<_, _>>()?;
        Ok(Self { points })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        write_curve_csv(&self.points, out)
    }
}

pub const CURVE_HEADER: [&str; 6] = ["n_bo", "n_mit", "proactive", "max_r1", "n_online", "min_secure_trh"];

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for p in points {
        w.write_record([
            p.n_bo.to_string(),
            p.n_mit.to_string(),
            on_off(p.proactive).to_string(),
            p.max_r1.to_string(),
            p.n_online.to_string(),
            p.min_secure_trh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Which banks an RFM blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfmScope {
    AllBank,
    SameBank,
    PerBank,
}

impl RfmScope {
    pub const ALL: [RfmScope; 3] = [RfmScope::AllBank, RfmScope::SameBank, RfmScope::PerBank];

    pub fn banks_blocked(&self, t: &DramTimings) -> u64 {
        match self {
            RfmScope::AllBank => u64::from(t.banks_per_channel),
            RfmScope::SameBank => u64::from(t.bank_groups),
            RfmScope::PerBank => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RfmScope::AllBank => "all_bank",
            RfmScope::SameBank => "same_bank",
            RfmScope::PerBank => "per_bank",
        }
    }
}

pub const BANDWIDTH_N_BO: [u32; 4] = [16, 32, 64, 128];

/// Worst-case fraction of a bank's activation bandwidth lost to RFMs when
/// every bank sustains the highest Alert rate it can trigger.
///
/// Per Alert an attacker bank spends `max(n_bo, abo_act + abo_delay)` ACTs;
/// the RFM burst blocks `banks_blocked` banks for `alert_time_ns` each, which
/// is charged to every bank. With proactive mitigation each REF removes the
/// row being built up, so only `apt - n_bo` of every `apt` ACTs progress and
/// thresholds at or above `apt` (ACTs per tREFI) never alert.
pub fn bandwidth_loss(n_bo: u32, scope: RfmScope, proactive: bool, cfg: &AnalysisConfig) -> Result<f64, ModelError> {
    if !BANDWIDTH_N_BO.contains(&n_bo) {
        return Err(ModelError::UnsupportedBackOff(n_bo));
    }
    let t = &cfg.timings;
    let apt = acts_per_trefi(t) as f64;
    let n = f64::from(n_bo);
    let acts = if proactive {
        if n >= apt {
            return Ok(0.0);
        }
        n * apt / (apt - n)
    } else {
        n
    };
    let acts = acts.max(f64::from(cfg.params.alert_cycle()));
    let act_time = (acts * t.t_rc as f64).max(t.t_abo_act as f64);
    let blocked = (scope.banks_blocked(t) * cfg.alert_time_ns) as f64;
    Ok(blocked / (act_time + blocked))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub n_bo: u32,
    pub scope: RfmScope,
    pub proactive: bool,
    pub bw_loss: f64,
}

pub fn bandwidth_table(cfg: &AnalysisConfig) -> Vec<BandwidthRow> {
    let mut rows = Vec::new();
    for n_bo in BANDWIDTH_N_BO {
        for scope in RfmScope::ALL {
            for proactive in [false, true] {
                let bw_loss = bandwidth_loss(n_bo, scope, proactive, cfg).expect("table thresholds are supported");
                rows.push(BandwidthRow { n_bo, scope, proactive, bw_loss });
            }
        }
    }
    rows
}

pub const BANDWIDTH_HEADER: [&str; 4] = ["n_bo", "scope", "proactive", "bw_loss"];

pub fn write_bandwidth_csv<W: Write>(rows: &[BandwidthRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BANDWIDTH_HEADER)?;
    for r in rows {
        w.write_record([
            r.n_bo.to_string(),
            r.scope.name().to_string(),
            on_off(r.proactive).to_string(),
            format!("{:.4}", r.bw_loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}
