use serde::{Deserialize, Serialize};

use crate::queue::RowId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationTally {
    pub alert: u64,
    pub opportunistic: u64,
    pub proactive: u64,
}

impl MitigationTally {
    pub fn total(&self) -> u64 {
        self.alert + self.opportunistic + self.proactive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowPeak {
    pub bank: usize,
    pub row: RowId,
    pub max: u32,
}

/// Aggregate outcome of a run. Field names are part of the JSON format.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub activations: u64,
    pub alerts: u64,
    pub rfms_issued: u64,
    pub refreshes: u64,
    pub noop_services: u64,
    pub mitigations_by_kind: MitigationTally,
    /// Highest count of every touched row, sorted by (bank, row).
    pub max_unmitigated: Vec<RowPeak>,
    pub timeline_ns: u64,
}

impl SimStats {
    /// Highest count reached by any row.
    pub fn max_count(&self) -> u32 {
        self.max_unmitigated.iter().map(|p| p.max).max().unwrap_or(0)
    }

    pub fn max_of(&self, bank: usize, row: RowId) -> u32 {
        self.max_unmitigated
            .binary_search_by_key(&(bank, row), |p| (p.bank, p.row))
            .map_or(0, |i| self.max_unmitigated[i].max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Human-readable list of differing fields.
    pub fn diff(&self, other: &SimStats) -> Vec<String> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => {$(
                if self.$f != other.$f {
                    out.push(format!("{}: {:?} != {:?}", stringify!($f), self.$f, other.$f));
                }
            )*};
        }
        cmp!(activations, alerts, rfms_issued, refreshes, noop_services, mitigations_by_kind, timeline_ns);
        if self.max_unmitigated != other.max_unmitigated {
            let n = self
                .max_unmitigated
                .iter()
                .zip(&other.max_unmitigated)
                .filter(|(a, b)| a != b)
                .count()
                + self.max_unmitigated.len().abs_diff(other.max_unmitigated.len());
            out.push(format!("max_unmitigated: {n} rows differ"));
        }
        out
    }
}
