//! Run reports: a human readable summary followed by a JSON machine block.
//!
//! The machine block holds everything except wall-clock timings, so two runs
//! with the same configuration and seeds produce identical blocks regardless
//! of the number of worker threads.

use std::fmt::Write as _;
use std::path::Path;

use coincide_core::criteria::CriterionReport;
use coincide_core::nonlinearity::{GrowthReport, TangencyReport};
use coincide_core::resolvent::{GeneratorTangencyReport, InvarianceReport};
use coincide_core::truncation::TailReport;
use coincide_core::{GardingEstimate, SolveReport};
use serde::Serialize;

use crate::error::{IoError, IoResult};
use crate::field_io::Artifact;

/// Version tag of the machine block layout.
pub const SCHEMA: &str = "coincide-report/1";
pub const MACHINE_BEGIN: &str = "-----BEGIN MACHINE REPORT-----";
pub const MACHINE_END: &str = "-----END MACHINE REPORT-----";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
    /// Reported for information; does not affect the exit status.
    Info,
}

impl CheckStatus {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::NotApplicable => "N/A",
            Self::Info => "INFO",
        }
    }
}

/// One named verdict of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub checks: Vec<NamedCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub garding: Option<GardingEstimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub criteria: Vec<CriterionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator_tangency: Option<GeneratorTangencyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangency: Option<TangencyReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub solves: Vec<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailReport>,
    pub artifacts: Vec<Artifact>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            schema: SCHEMA,
            command: command.into(),
            config,
            checks: Vec::new(),
            garding: None,
            criteria: Vec::new(),
            invariance: None,
            generator_tangency: None,
            growth: None,
            tangency: None,
            solves: Vec::new(),
            tail: None,
            artifacts: Vec::new(),
            notes: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, status: CheckStatus, detail: impl Into<String>) {
        self.checks.push(NamedCheck { name: name.into(), status, detail: detail.into() });
    }

    /// No check failed.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn find(&self, name: &str) -> Option<&NamedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The JSON machine block, without the delimiters.
    pub fn machine_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human readable text, then the delimited machine block.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "coincide {} report ({SCHEMA})", self.command);
        let _ = writeln!(s);
        let _ = writeln!(s, "checks:");
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let _ = writeln!(s, "  {:<4}  {:<width$}  {}", c.status.label(), c.name, c.detail);
        }
        if let Some(g) = &self.garding {
            let _ = writeln!(s);
            let _ = writeln!(s, "garding: omega = {:.6e}, alpha = {:.6e}, theta = {:.6e}", g.omega, g.alpha, g.theta);
        }
        for r in &self.criteria {
            let _ = writeln!(s, "criterion {:?}: {:?} (margin {})", r.criterion, r.status, r.margin.map_or("-".into(), |m| format!("{m:.3e}")));
            for w in r.witnesses.iter().take(3) {
                let _ = writeln!(s, "  witness {} at x = {:?}, normal {:?}: value {:.3e}", w.label, w.x, w.normal, w.value);
            }
        }
        if let Some(inv) = &self.invariance {
            let _ = writeln!(s, "resolvent invariance on {} samples: {}", inv.samples, CheckStatus::from_bool(inv.pass).label());
            for e in &inv.entries {
                let _ = writeln!(
                    s,
                    "  h = {:.6e}: worst distance {:.3e} (tolerance {:.3e}){}",
                    e.h,
                    e.worst_distance,
                    e.tolerance,
                    if e.pass { String::new() } else { format!(", witness node {} at x = {:?}, sample {}", e.witness_node, e.witness_x, e.witness_sample) }
                );
            }
        }
        for (k, r) in self.solves.iter().enumerate() {
            let _ = writeln!(s);
            let _ = writeln!(s, "solve {}: {:?} after {} iterations", k + 1, r.termination, r.total_iterations);
            let _ = writeln!(s, "  residual {:.6e} (tol_res {:.1e})", r.residual, r.tol_res);
            let _ = writeln!(s, "  max constraint violation {:.3e} (tol_inv {:.1e})", r.max_iterate_violation, r.tol_inv);
            for b in &r.blocks {
                let _ = writeln!(
                    s,
                    "  t = {:.3} h = {:.4e}: {} iterations, gap {:.3e}, residual {:.3e}, certificate {:.3e}",
                    b.t, b.h, b.iterations, b.gap, b.residual, b.certificate
                );
            }
            for n in &r.notes {
                let _ = writeln!(s, "  note: {n}");
            }
        }
        if let Some(t) = &self.tail {
            let _ = writeln!(s);
            let _ = writeln!(s, "truncation levels:");
            for l in &t.levels {
                let diff = l.diff_h1.map_or("-".to_string(), |d| format!("{d:.3e}"));
                let _ = writeln!(s, "  B_{} (R = {}): {} nodes, |u|_H1 = {:.4e}, diff_H1 = {diff}, residual {:.2e}", l.level, l.radius, l.nodes, l.h1_norm, l.residual);
                for row in &l.tails {
                    let _ = writeln!(s, "    R_probe = {}: l2_tail {:.4e}, h1_tail {:.4e}, envelope tail {:.4e}", row.probe, row.l2_tail, row.h1_tail, row.envelope_tail);
                }
            }
            for n in &t.notes {
                let _ = writeln!(s, "  note: {n}");
            }
        }
        if !self.artifacts.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "artifacts:");
            for a in &self.artifacts {
                let _ = writeln!(s, "  {}  {} ({} bytes)", a.sha256, a.name, a.bytes);
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        if !self.timings.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "timings:");
            for (name, secs) in &self.timings {
                let _ = writeln!(s, "  {name}: {secs:.3} s");
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{MACHINE_BEGIN}");
        s.push_str(&self.machine_json());
        s.push('\n');
        let _ = writeln!(s, "{MACHINE_END}");
        s
    }
}

/// Writes the rendered report to `path`.
pub fn emit_report(report: &RunReport, path: &Path) -> IoResult<()> {
    std::fs::write(path, report.render()).map_err(|e| IoError::io(path, e))
}

/// Extracts the machine block from rendered report text.
pub fn machine_block(text: &str) -> Option<&str> {
    let start = text.find(MACHINE_BEGIN)? + MACHINE_BEGIN.len();
    let end = text[start..].find(MACHINE_END)? + start;
    Some(text[start..end].trim())
}
