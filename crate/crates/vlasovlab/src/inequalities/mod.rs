//! Numerical verification of the moment and interpolation inequalities on
//! simulated data. Every check compares a measured left-hand side against
//! the bound with its explicit constants; on data produced by this
//! simulator from admissible initial data a failure indicates an estimator
//! or wiring bug, not a broken theorem.

mod envelopes2d;
mod envelopes3d;
mod interpolation;

pub use envelopes2d::{base_rate_2d, envelope_2d, envelope_2d_suite, Norms2d};
pub use envelopes3d::{
    envelope_3d_high_order, envelope_3d_short, envelope_eulerian, t_star, validate_smallness,
    EulerianParams, ShortTimeReport, SmallnessParams, SmallnessReport,
};
pub use interpolation::{check_kinetic_interpolation, check_moment_ode, check_weak_young};

use serde::Serialize;

/// Default relative slack for estimator error, plus an absolute floor.
pub const DEFAULT_SLACK: f64 = 0.10;
pub const ABS_FLOOR: f64 = 1e-8;

/// Outcome of one inequality check: `lhs[t] <= rhs[t]` within slack.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub id: String,
    pub params: serde_json::Value,
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// min over frames of `rhs - lhs`
    pub worst_margin_abs: f64,
    /// min over frames of `(rhs - lhs) / max(|rhs|, |lhs|)`
    pub worst_margin_rel: f64,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl EnvelopeReport {
    pub fn from_series(
        id: &str,
        params: serde_json::Value,
        times: Vec<f64>,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        rel_slack: f64,
        abs_tol: f64,
    ) -> Self {
        assert_eq!(times.len(), lhs.len());
        assert_eq!(times.len(), rhs.len());
        let mut worst_abs = f64::INFINITY;
        let mut worst_rel = f64::INFINITY;
        let mut pass = true;
        for k in 0..times.len() {
            let margin = rhs[k] - lhs[k];
            let scale = rhs[k].abs().max(lhs[k].abs()).max(1e-300);
            worst_abs = worst_abs.min(margin);
            worst_rel = worst_rel.min(margin / scale);
            if lhs[k] > rhs[k] * (1.0 + rel_slack) + abs_tol {
                pass = false;
            }
        }
        if times.is_empty() {
            worst_abs = 0.0;
            worst_rel = 0.0;
        }
        EnvelopeReport {
            id: id.to_string(),
            params,
            times,
            lhs,
            rhs,
            worst_margin_abs: worst_abs,
            worst_margin_rel: worst_rel,
            pass,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn failed(id: &str, params: serde_json::Value, note: impl Into<String>) -> Self {
        EnvelopeReport {
            id: id.to_string(),
            params,
            times: Vec::new(),
            lhs: Vec::new(),
            rhs: Vec::new(),
            worst_margin_abs: f64::NEG_INFINITY,
            worst_margin_rel: f64::NEG_INFINITY,
            pass: false,
            notes: vec![note.into()],
        }
    }

    /// One human-readable status line.
    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {} worst rel margin {:+.3e}{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.worst_margin_rel,
            if self.notes.is_empty() {
                String::new()
            } else {
                format!(" ({})", self.notes.join("; "))
            }
        )
    }
}
