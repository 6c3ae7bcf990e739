use std::io::Write;

use crate::error::Result;
use crate::subproblem::InnerStop;

/// CSV header of a trace file.
pub const TRACE_HEADER: &str = "t,F,normG,alpha,normDx,eta,inner_iters,refresh,hess_evals,wall_s,ls_trials,lambda";

/// One outer iteration. The row for `t` holds `F(x_t)`, `‖G(x_t)‖` and the
/// quantities of the step taken from `x_t`; the final row of a run has no step
/// and carries NaN in the step columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub f: f64,
    pub norm_g: f64,
    pub alpha: f64,
    /// `‖x' − x_t‖`, the full subproblem step before scaling by `α`.
    pub norm_dx: f64,
    pub eta: f64,
    pub gamma: f64,
    pub inner_iters: usize,
    pub inner_stop: Option<InnerStop>,
    pub refresh: bool,
    /// Cumulative curvature refreshes (Hessian evaluations) up to this row.
    pub hess_evals: usize,
    pub wall_s: f64,
    pub ls_trials: usize,
    /// `Δx_tᵀ∇f(x_t) + r(x') − r(x_t)`.
    pub lambda: f64,
    /// The inexact driver rejected the unit step and searched instead.
    pub safeguarded: bool,
}

impl TraceRecord {
    pub fn terminal(t: usize, f: f64, norm_g: f64, hess_evals: usize, wall_s: f64) -> Self {
        Self {
            t,
            f,
            norm_g,
            alpha: f64::NAN,
            norm_dx: f64::NAN,
            eta: f64::NAN,
            gamma: f64::NAN,
            inner_iters: 0,
            inner_stop: None,
            refresh: false,
            hess_evals,
            wall_s,
            ls_trials: 0,
            lambda: f64::NAN,
            safeguarded: false,
        }
    }

    pub fn has_step(&self) -> bool {
        !self.alpha.is_nan()
    }

    pub fn csv_row(&self) -> String {
        let f = format_float;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            f(self.f),
            f(self.norm_g),
            f(self.alpha),
            f(self.norm_dx),
            f(self.eta),
            self.inner_iters,
            u8::from(self.refresh),
            self.hess_evals,
            f(self.wall_s),
            self.ls_trials,
            f(self.lambda)
        )
    }
}

/// Shortest decimal that parses back to the same `f64`; exponent notation
/// outside `[1e−4, 1e15)`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("ascii")
    }

    /// Total inner iterations over the run.
    pub fn cumulative_inner(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }
}
