//! Per-iteration records and their CSV form.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TRACE_HEADER: &str =
    "iter,cost,grad_norm,step_norm,constraint_residual,inner_solves,cumulative_inner_solves";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Objective value; `None` for gradient-only problems.
    pub cost: Option<f64>,
    pub grad_norm: f64,
    pub step_norm: f64,
    /// `‖δx‖` for constrained runs.
    pub constraint_residual: Option<f64>,
    pub inner_solves: u64,
    pub cumulative_inner_solves: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max-iters",
            RunStatus::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record, filling in the cumulative counter.
    pub fn push(
        &mut self,
        cost: Option<f64>,
        grad_norm: f64,
        step_norm: f64,
        constraint_residual: Option<f64>,
        inner_solves: u64,
    ) {
        let iter = self.records.len();
        let cumulative = self.cumulative_inner_solves() + inner_solves;
        self.records.push(IterationRecord {
            iter,
            cost,
            grad_norm,
            step_norm,
            constraint_residual,
            inner_solves,
            cumulative_inner_solves: cumulative,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn first(&self) -> Option<&IterationRecord> {
        self.records.first()
    }

    pub fn cumulative_inner_solves(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_inner_solves)
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.last().and_then(|r| r.cost)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost.unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iter,
                fmt_opt(r.cost),
                fmt_real(r.grad_norm),
                fmt_real(r.step_norm),
                fmt_opt(r.constraint_residual),
                r.inner_solves,
                r.cumulative_inner_solves
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Seventeen significant digits, `.` decimal separator.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}
