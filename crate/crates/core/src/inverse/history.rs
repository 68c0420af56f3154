//! Iteration records, stage summaries and the history CSV.

use std::fmt;
use std::io::Write;

use serde::{Serialize, Serializer};

use super::step::StepKind;
use crate::error::Result;
use crate::io::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Morozov,
    MaxIterations,
    Stalled,
    Failed(String),
}

impl StopReason {
    pub fn is_failure(&self) -> bool {
        matches!(self, StopReason::Failed(_))
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Morozov => f.write_str("morozov"),
            StopReason::MaxIterations => f.write_str("max-iterations"),
            StopReason::Stalled => f.write_str("stalled"),
            StopReason::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

impl Serialize for StopReason {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One accepted iterate. `k = 0` is the initial guess.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub stage_order: usize,
    pub eps_m: f64,
    /// NaN when the true conductivity is unknown.
    pub eps_sigma: f64,
    pub step: f64,
    pub functional: f64,
    /// `√(2 S_data)`
    pub residual: f64,
    pub kind: StepKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub order: usize,
    pub level: usize,
    /// Index into the records of the first iterate of this stage.
    pub first_record: usize,
    pub iterations: usize,
    pub stop: StopReason,
    pub eps_m: f64,
    pub eps_sigma: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InversionHistory {
    pub records: Vec<IterationRecord>,
    pub stages: Vec<StageSummary>,
    pub stop: StopReason,
}

impl Default for InversionHistory {
    fn default() -> Self {
        Self { records: Vec::new(), stages: Vec::new(), stop: StopReason::MaxIterations }
    }
}

impl InversionHistory {
    /// Accepted steps over all stages.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    /// `k,stage_order,eps_M,eps_sigma,step,functional`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "stage_order", "eps_M", "eps_sigma", "step", "functional"])?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.stage_order.to_string(),
                fmt_f64(r.eps_m),
                fmt_f64(r.eps_sigma),
                fmt_f64(r.step),
                fmt_f64(r.functional),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let h = InversionHistory {
            records: vec![IterationRecord {
                k: 0,
                stage_order: 1,
                eps_m: 0.5,
                eps_sigma: f64::NAN,
                step: 0.0,
                functional: 0.25,
                residual: 0.7,
                kind: StepKind::Initial,
            }],
            stages: vec![],
            stop: StopReason::Failed("singular".into()),
        };
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,stage_order,eps_M,eps_sigma,step,functional"));
        assert_eq!(lines.next(), Some("0,1,5.0000000000000000e-1,NaN,0.0000000000000000e0,2.5000000000000000e-1"));
        assert_eq!(serde_json::to_string(&h.stop).unwrap(), "\"failed: singular\"");
    }
}
