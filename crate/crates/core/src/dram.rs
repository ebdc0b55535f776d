//! PRAC parameters, DDR5 timing constants and derived activation budgets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// The JEDEC PRAC knobs plus the blast radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracParams {
    /// Back-Off threshold: a queued row at this count raises an Alert.
    pub n_bo: u32,
    /// RFMs issued per Alert (PRAC-1, PRAC-2, PRAC-4).
    pub n_mit: u32,
    /// Maximum ACTs between Alert assertion and RFM service.
    pub abo_act: u32,
    /// Minimum ACTs after an RFM burst before the next Alert.
    pub abo_delay: u32,
    /// Victim rows refreshed on each side of a mitigated aggressor.
    pub blast_radius: u32,
}

impl PracParams {
    pub const DEFAULT_ABO_ACT: u32 = 3;
    pub const DEFAULT_BLAST_RADIUS: u32 = 2;

    /// Parameters with the default ABO window, `abo_delay == n_mit` and a
    /// blast radius of two.
    pub fn new(n_bo: u32, n_mit: u32) -> Result<Self, ConfigError> {
        let p = Self {
            n_bo,
            n_mit,
            abo_act: Self::DEFAULT_ABO_ACT,
            abo_delay: n_mit,
            blast_radius: Self::DEFAULT_BLAST_RADIUS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_abo_delay(mut self, abo_delay: u32) -> Self {
        self.abo_delay = abo_delay;
        self
    }

    pub fn with_abo_act(mut self, abo_act: u32) -> Self {
        self.abo_act = abo_act;
        self
    }

    pub fn with_blast_radius(mut self, blast_radius: u32) -> Self {
        self.blast_radius = blast_radius;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !matches!(self.n_mit, 1 | 2 | 4) {
            return Err(ConfigError::BadNMit(self.n_mit));
        }
        if self.n_bo == 0 {
            return Err(ConfigError::ZeroBackOff);
        }
        if self.blast_radius == 0 {
            return Err(ConfigError::ZeroBlastRadius);
        }
        Ok(())
    }

    /// ACTs in one full alert cycle as seen by a single bank.
    pub fn alert_cycle(&self) -> u32 {
        self.abo_act + self.abo_delay
    }
}

impl Default for PracParams {
    fn default() -> Self {
        Self::new(32, 1).expect("default parameters are valid")
    }
}

/// DDR5 timing constants (nanoseconds) and bank geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramTimings {
    pub t_rc: u64,
    pub t_refi: u64,
    pub t_refw: u64,
    pub t_rfc: u64,
    pub t_abo_act: u64,
    pub t_rfm_ab: u64,
    pub rows_per_bank: u32,
    pub banks_per_channel: u32,
    pub bank_groups: u32,
}

impl Default for DramTimings {
    fn default() -> Self {
        Self {
            t_rc: 52,
            t_refi: 3_900,
            t_refw: 32_000_000,
            t_rfc: 410,
            t_abo_act: 180,
            t_rfm_ab: 350,
            rows_per_bank: 131_072,
            banks_per_channel: 32,
            bank_groups: 8,
        }
    }
}

impl DramTimings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.t_rc == 0 || self.t_refi == 0 || self.t_refw == 0 || self.t_rfm_ab == 0 {
            return Err(ConfigError::Timing("durations must be positive"));
        }
        if self.t_refi <= self.t_rfc {
            return Err(ConfigError::Timing("t_refi must exceed t_rfc"));
        }
        if self.t_refw < self.t_refi {
            return Err(ConfigError::Timing("t_refw must be at least t_refi"));
        }
        if !self.rows_per_bank.is_power_of_two() {
            return Err(ConfigError::Timing("rows_per_bank must be a power of two"));
        }
        if self.banks_per_channel == 0 || self.bank_groups == 0 {
            return Err(ConfigError::Timing("bank geometry must be non-empty"));
        }
        if !self.banks_per_channel.is_multiple_of(self.bank_groups) {
            return Err(ConfigError::Timing("banks_per_channel must be a multiple of bank_groups"));
        }
        Ok(())
    }

    /// Number of REF commands issued in one refresh window.
    pub fn refs_per_window(&self) -> u64 {
        self.t_refw / self.t_refi
    }

    /// Time to cover `busy_ns` of non-refresh work once periodic REF stalls
    /// are inserted: one `t_rfc` after every `t_refi - t_rfc` of work, the
    /// same cadence the simulator uses (one REF per `acts_per_trefi` ACTs).
    pub fn with_refresh(&self, busy_ns: u64) -> u64 {
        busy_ns + busy_ns / (self.t_refi - self.t_rfc) * self.t_rfc
    }
}

/// Maximum number of ACTs a single bank can issue between two REFs.
pub fn acts_per_trefi(timings: &DramTimings) -> u64 {
    (timings.t_refi - timings.t_rfc) / timings.t_rc
}

/// Maximum single-bank ACTs in one refresh window.
pub fn act_budget_per_window(timings: &DramTimings) -> u64 {
    let refresh = timings.refs_per_window() * timings.t_rfc;
    timings.t_refw.saturating_sub(refresh) / timings.t_rc
}

/// Width of the per-row activation counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterWidth {
    pub bits: u32,
}

impl Default for CounterWidth {
    fn default() -> Self {
        Self { bits: 7 }
    }
}

impl CounterWidth {
    pub fn new(bits: u32) -> Self {
        assert!((1..=32).contains(&bits), "counter width must be 1..=32 bits");
        Self { bits }
    }

    /// Largest representable counter value.
    pub fn max_value(&self) -> u32 {
        if self.bits == 32 {
            u32::MAX
        } else {
            (1u32 << self.bits) - 1
        }
    }

    /// Narrowest width able to hold `bound`.
    pub fn covering(bound: u64) -> Self {
        let bits = (64 - bound.leading_zeros()).clamp(1, 32);
        Self { bits }
    }

    /// The default width, widened if `bound` would not fit.
    pub fn at_least_default(bound: u64) -> Self {
        let d = Self::default();
        if u64::from(d.max_value()) >= bound {
            d
        } else {
            Self::covering(bound)
        }
    }

    pub fn fits(&self, value: u64) -> bool {
        value <= u64::from(self.max_value())
    }
}

/// Parameters and timings loaded together from a flat config file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramConfig {
    pub params: PracParams,
    pub timings: DramTimings,
    pub counter_width: CounterWidth,
}

/// Keys accepted by [`DramConfig::apply`].
pub const CONFIG_KEYS: &[&str] = &[
    "n_bo",
    "n_mit",
    "abo_act",
    "abo_delay",
    "blast_radius",
    "t_rc",
    "t_refi",
    "t_refw",
    "t_rfc",
    "t_abo_act",
    "t_rfm_ab",
    "rows_per_bank",
    "banks_per_channel",
    "bank_groups",
    "counter_bits",
];

impl DramConfig {
    /// Parses `key = value` lines; `#` starts a comment. Keys not present keep
    /// their defaults. Setting `n_mit` without `abo_delay` keeps them equal.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut cfg = Self::default();
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    /// Applies overrides in order, then validates the result.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        let delay_given = pairs.iter().any(|(k, _)| k == "abo_delay");
        for (key, value) in pairs {
            let bad = || ConfigError::BadValue { key: key.clone(), value: value.clone() };
            let n: u64 = value.replace('_', "").parse().map_err(|_| bad())?;
            let n32 = || u32::try_from(n).map_err(|_| bad());
            match key.as_str() {
                "n_bo" => self.params.n_bo = n32()?,
                "n_mit" => {
                    self.params.n_mit = n32()?;
                    if !delay_given {
                        self.params.abo_delay = self.params.n_mit;
                    }
                }
                "abo_act" => self.params.abo_act = n32()?,
                "abo_delay" => self.params.abo_delay = n32()?,
                "blast_radius" => self.params.blast_radius = n32()?,
                "t_rc" => self.timings.t_rc = n,
                "t_refi" => self.timings.t_refi = n,
                "t_refw" => self.timings.t_refw = n,
                "t_rfc" => self.timings.t_rfc = n,
                "t_abo_act" => self.timings.t_abo_act = n,
                "t_rfm_ab" => self.timings.t_rfm_ab = n,
                "rows_per_bank" => self.timings.rows_per_bank = n32()?,
                "banks_per_channel" => self.timings.banks_per_channel = n32()?,
                "bank_groups" => self.timings.bank_groups = n32()?,
                "counter_bits" => {
                    let bits = n32()?;
                    if !(1..=32).contains(&bits) {
                        return Err(bad());
                    }
                    self.counter_width = CounterWidth { bits };
                }
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            }
        }
        self.params.validate()?;
        self.timings.validate()
    }

    /// Renders the configuration in the same `key = value` format.
    pub fn to_config_string(&self) -> String {
        let p = &self.params;
        let t = &self.timings;
        let mut out = String::new();
        for (k, v) in [
            ("n_bo", u64::from(p.n_bo)),
            ("n_mit", u64::from(p.n_mit)),
            ("abo_act", u64::from(p.abo_act)),
            ("abo_delay", u64::from(p.abo_delay)),
            ("blast_radius", u64::from(p.blast_radius)),
            ("t_rc", t.t_rc),
            ("t_refi", t.t_refi),
            ("t_refw", t.t_refw),
            ("t_rfc", t.t_rfc),
            ("t_abo_act", t.t_abo_act),
            ("t_rfm_ab", t.t_rfm_ab),
            ("rows_per_bank", u64::from(t.rows_per_bank)),
            ("banks_per_channel", u64::from(t.banks_per_channel)),
            ("bank_groups", u64::from(t.bank_groups)),
            ("counter_bits", u64::from(self.counter_width.bits)),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_budgets() {
        let t = DramTimings::default();
        assert_eq!(acts_per_trefi(&t), 67);
        assert_eq!(act_budget_per_window(&t), 550_691);
    }

    #[test]
    fn trivial_budgets() {
        let t = DramTimings { t_refi: 410 + 52, ..DramTimings::default() };
        assert_eq!(acts_per_trefi(&t), 1);
        let t = DramTimings { t_refi: 5252, t_rfc: 52, ..DramTimings::default() };
        assert_eq!(acts_per_trefi(&t), 100);

        let t = DramTimings { t_refw: 3900, t_rfc: 0, ..DramTimings::default() };
        assert_eq!(act_budget_per_window(&t), 3900 / 52);
        // Every interval is consumed by its REF, leaving no room for an ACT.
        let t = DramTimings { t_refi: 1000, t_rfc: 999, t_refw: 10_000, ..DramTimings::default() };
        assert_eq!(act_budget_per_window(&t), 0);
    }

    #[test]
    fn params_defaults() {
        let p = PracParams::new(32, 4).unwrap();
        assert_eq!(p.abo_delay, 4);
        assert_eq!(p.abo_act, 3);
        assert_eq!(p.blast_radius, 2);
        assert_eq!(PracParams::new(32, 3), Err(ConfigError::BadNMit(3)));
        assert_eq!(PracParams::new(0, 1), Err(ConfigError::ZeroBackOff));
    }

    #[test]
    fn timings_validate() {
        assert!(DramTimings::default().validate().is_ok());
        let t = DramTimings { rows_per_bank: 1000, ..DramTimings::default() };
        assert!(t.validate().is_err());
        let t = DramTimings { t_rfc: 3900, ..DramTimings::default() };
        assert!(t.validate().is_err());
    }

    #[test]
    fn with_refresh_cadence() {
        let t = DramTimings::default();
        assert_eq!(t.with_refresh(0), 0);
        assert_eq!(t.with_refresh(3489), 3489);
        assert_eq!(t.with_refresh(3490), 3490 + 410);
        // A full window of work plus its REFs spans exactly one window.
        assert_eq!(t.with_refresh(3490 * 8205), 3900 * 8205);
    }

    #[test]
    fn counter_width() {
        assert_eq!(CounterWidth::default().max_value(), 127);
        assert_eq!(CounterWidth::covering(127).bits, 7);
        assert_eq!(CounterWidth::covering(128).bits, 8);
        assert_eq!(CounterWidth::at_least_default(46).bits, 7);
        assert_eq!(CounterWidth::at_least_default(300).bits, 9);
        assert_eq!(CounterWidth::new(32).max_value(), u32::MAX);
    }

    #[test]
    fn config_roundtrip() {
        let text = "# PRAC-2\nn_mit = 2\nn_bo = 64  # threshold\n\nt_refw = 64_000_000\n";
        let cfg = DramConfig::parse(text).unwrap();
        assert_eq!(cfg.params.n_mit, 2);
        assert_eq!(cfg.params.abo_delay, 2);
        assert_eq!(cfg.params.n_bo, 64);
        assert_eq!(cfg.timings.t_refw, 64_000_000);
        assert_eq!(DramConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(DramConfig::parse("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(DramConfig::parse("n_bo 3"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(DramConfig::parse("n_bo = x"), Err(ConfigError::BadValue { .. })));
        let cfg = DramConfig::parse("abo_delay = 7\nn_mit = 4").unwrap();
        assert_eq!(cfg.params.abo_delay, 7);
    }
}
