//! Serializable check reports.

use serde::{Deserialize, Serialize};

use crate::history::HistoryFunction;

/// Format version of every JSON report written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// How many witnesses a report keeps verbatim; the total is always counted.
pub const MAX_STORED_VIOLATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub phi_csv: String,
    pub u: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub condition_id: String,
    pub pass: bool,
    pub samples: usize,
    /// Samples on which the condition was active (the gate held).
    pub gated: usize,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
    /// Largest `lhs - rhs` over gated samples; `None` if nothing was gated.
    pub worst_margin: Option<f64>,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Per-sample result fed into [`CheckReport::collect`].
#[derive(Debug, Clone)]
pub struct Outcome {
    pub index: usize,
    pub phi: HistoryFunction,
    pub u: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub gated: bool,
    /// Tolerance for this sample (it may depend on the estimate quality).
    pub tol: f64,
    pub note: Option<String>,
}

impl Outcome {
    pub fn violated(&self) -> bool {
        self.gated && !(self.lhs - self.rhs <= self.tol)
    }
}

impl CheckReport {
    /// Builds a report from outcomes ordered by sample index.
    pub fn collect(condition_id: impl Into<String>, tolerance: f64, outcomes: &[Outcome]) -> Self {
        let mut violations = Vec::new();
        let mut count = 0;
        let mut gated = 0;
        let mut worst: Option<f64> = None;
        let mut notes = Vec::new();
        for o in outcomes {
            if let Some(n) = &o.note {
                notes.push(format!("sample {}: {n}", o.index));
            }
            if !o.gated {
                continue;
            }
            gated += 1;
            let m = o.lhs - o.rhs;
            let m = if m.is_nan() { f64::INFINITY } else { m };
            worst = Some(worst.map_or(m, |w: f64| w.max(m)));
            if o.violated() {
                count += 1;
                if violations.len() < MAX_STORED_VIOLATIONS {
                    violations.push(Violation {
                        index: o.index,
                        phi_csv: o.phi.to_csv(),
                        u: o.u.clone(),
                        lhs: o.lhs,
                        rhs: o.rhs,
                        margin: m,
                    });
                }
            }
        }
        CheckReport {
            condition_id: condition_id.into(),
            pass: count == 0,
            samples: outcomes.len(),
            gated,
            violation_count: count,
            violations,
            worst_margin: worst.map(|w| if w.is_finite() { w } else { f64::MAX }),
            tolerance,
            notes,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}
