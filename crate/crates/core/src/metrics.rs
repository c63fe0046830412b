//! Summary statistics of a closed-loop trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{SideRecord, TraceRecord};
use crate::supervisor::Policy;

pub const SUMMARY_SCHEMA: &str = "skidsafe-summary/1";

/// Settling band as a fraction of the final reference.
pub const SETTLING_BAND: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseStats {
    pub start_s: f64,
    pub end_s: f64,
    pub samples: usize,
    pub max_abs_error_mps: f64,
    pub tracking_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideSummary {
    /// `max(v - v_ref_final, 0)` over the opening phase.
    pub overshoot_mps: f64,
    /// Time after which `|v - v_ref_final|` stays inside the 2 % band,
    /// measured within the opening phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settling_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_time_s: Option<f64>,
    pub max_abs_error_mps: f64,
    /// Steps with `ζ² - e² ≤ 0` while the inverse model was in charge.
    pub zeta_violations: usize,
    /// Steps with `o² - e² ≤ 0` while the adaptive controller was in charge.
    pub o_violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dnn: Option<PhaseStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rac: Option<PhaseStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub schema: String,
    pub steps: usize,
    pub t_end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shutdown_at_s: Option<f64>,
    pub exit_code: i32,
    pub left: SideSummary,
    pub right: SideSummary,
}

pub fn metrics(trace: &[TraceRecord]) -> Result<RunSummary> {
    let last = trace
        .last()
        .ok_or_else(|| Error::Contract("empty trace".into()))?;
    let shutdown_at_s = trace
        .iter()
        .find(|r| r.sides().iter().any(|s| s.status == Policy::Halted))
        .map(|r| r.t);
    let side = |pick: fn(&TraceRecord) -> &SideRecord| -> SideSummary {
        let rows: Vec<(f64, &SideRecord)> = trace.iter().map(|r| (r.t, pick(r))).collect();
        side_summary(&rows)
    };
    Ok(RunSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        steps: trace.len(),
        t_end_s: last.t,
        shutdown_at_s,
        exit_code: if shutdown_at_s.is_some() { 2 } else { 0 },
        left: side(|r| &r.left),
        right: side(|r| &r.right),
    })
}

fn side_summary(rows: &[(f64, &SideRecord)]) -> SideSummary {
    let initial = rows[0].1.status;
    let switch_time_s = rows
        .windows(2)
        .find(|w| w[0].1.alpha2 == 0 && w[1].1.alpha2 == 1)
        .map(|w| w[1].0);

    // Opening phase: everything before the first status change.
    let end = rows
        .iter()
        .position(|(_, s)| s.status != initial)
        .unwrap_or(rows.len());
    let (overshoot_mps, settling_time_s) = if end == 0 {
        (0.0, None)
    } else {
        step_response(&rows[..end])
    };

    let mut zeta_violations = 0;
    let mut o_violations = 0;
    let mut max_abs_error_mps: f64 = 0.0;
    for (t, s) in rows {
        max_abs_error_mps = max_abs_error_mps.max(s.e.abs());
        let on_dnn = s.alpha1 == 1 || switch_time_s == Some(*t);
        if on_dnn && s.r_low.is_some_and(|r| r <= 0.0) {
            zeta_violations += 1;
        }
        if s.alpha2 == 1 && s.denom_high.is_some_and(|d| d <= 0.0) {
            o_violations += 1;
        }
    }

    SideSummary {
        overshoot_mps,
        settling_time_s,
        switch_time_s,
        max_abs_error_mps,
        zeta_violations,
        o_violations,
        dnn: phase(rows, Policy::Dnn),
        rac: phase(rows, Policy::Rac),
    }
}

fn step_response(rows: &[(f64, &SideRecord)]) -> (f64, Option<f64>) {
    let t0 = rows[0].0;
    let target = rows[rows.len() - 1].1.v_ref;
    let overshoot = rows
        .iter()
        .map(|(_, s)| s.v - target)
        .fold(0.0f64, f64::max);
    let band = SETTLING_BAND * target.abs();
    let settling = match rows.iter().rposition(|(_, s)| (s.v - target).abs() > band) {
        None => Some(0.0),
        Some(i) if i + 1 < rows.len() => Some(rows[i + 1].0 - t0),
        Some(_) => None,
    };
    (overshoot, settling)
}

fn phase(rows: &[(f64, &SideRecord)], policy: Policy) -> Option<PhaseStats> {
    let sel: Vec<&(f64, &SideRecord)> = rows.iter().filter(|(_, s)| s.status == policy).collect();
    let (first, last) = (sel.first()?, sel.last()?);
    let sq: f64 = sel.iter().map(|(_, s)| s.e * s.e).sum();
    Some(PhaseStats {
        start_s: first.0,
        end_s: last.0,
        samples: sel.len(),
        max_abs_error_mps: sel.iter().map(|(_, s)| s.e.abs()).fold(0.0, f64::max),
        tracking_mse: sq / sel.len() as f64,
    })
}
