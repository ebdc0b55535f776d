use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::queue::RowId;

/// One controller command in the line-oriented trace format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceStep {
    Act { bank: usize, row: RowId },
    Ref,
    Service,
}

/// Parses `ACT <bank> <row>`, `REF` and `SERVICE` lines. Blank lines and
/// `#` comments are ignored.
pub fn parse_trace(text: &str) -> Result<Vec<TraceStep>, SimError> {
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| SimError::Trace { line: idx + 1, msg };
        let mut tok = line.split_whitespace();
        let step = match tok.next() {
            Some("ACT") => {
                let mut num = |what: &str| {
                    tok.next()
                        .ok_or_else(|| err(format!("missing {what}")))?
                        .parse::<u64>()
                        .map_err(|_| err(format!("bad {what}")))
                };
                let bank = num("bank")?;
                let row = num("row")?;
                TraceStep::Act {
                    bank: usize::try_from(bank).map_err(|_| err("bank too large".into()))?,
                    row: RowId::try_from(row).map_err(|_| err("row too large".into()))?,
                }
            }
            Some("REF") => TraceStep::Ref,
            Some("SERVICE") => TraceStep::Service,
            Some(other) => return Err(err(format!("unknown command `{other}`"))),
            None => unreachable!("line is non-empty"),
        };
        if let Some(extra) = tok.next() {
            return Err(err(format!("unexpected token `{extra}`")));
        }
        steps.push(step);
    }
    Ok(steps)
}

pub fn write_trace(steps: &[TraceStep]) -> String {
    let mut out = String::with_capacity(steps.len() * 12);
    for s in steps {
        let _ = match s {
            TraceStep::Act { bank, row } => writeln!(out, "ACT {bank} {row}"),
            TraceStep::Ref => writeln!(out, "REF"),
            TraceStep::Service => writeln!(out, "SERVICE"),
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let steps = vec![TraceStep::Act { bank: 3, row: 77 }, TraceStep::Ref, TraceStep::Service];
        let text = write_trace(&steps);
        assert_eq!(text, "ACT 3 77\nREF\nSERVICE\n");
        assert_eq!(parse_trace(&text).unwrap(), steps);
    }

    #[test]
    fn comments_and_errors() {
        assert_eq!(parse_trace("# hdr\n\n  REF  # tail\n").unwrap(), vec![TraceStep::Ref]);
        assert!(matches!(parse_trace("REF\nACT 1\n"), Err(SimError::Trace { line: 2, .. })));
        assert!(matches!(parse_trace("NOP"), Err(SimError::Trace { line: 1, .. })));
        assert!(matches!(parse_trace("ACT 1 2 3"), Err(SimError::Trace { .. })));
        assert!(matches!(parse_trace("ACT -1 2"), Err(SimError::Trace { .. })));
    }
}
