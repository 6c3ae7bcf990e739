//! Outer drivers.
//!
//! [`solve_generic`] refreshes the curvature model every `n` iterations and
//! globalizes with a sufficient-descent backtracking line search.
//! [`solve_inexact`] takes unit steps, solves each subproblem only to the
//! forcing-term accuracy `‖Ĝ‖ ≤ η_t‖G(x_t)‖^γ`, and falls back to the line
//! search when a unit step would increase the objective.
//! [`solve_baseline`] provides ISTA and FISTA with the same trace schema.

mod baseline;
mod forcing;
mod line_search;
mod shamanskii;
mod trace;

use std::time::Duration;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hessian::{HessianModel, RefreshSchedule, DEFAULT_MEMORY};
use crate::subproblem::{InnerSolver, DEFAULT_INNER_CAP};

pub use baseline::{solve_baseline, BaselineVariant};
pub use forcing::{forcing_term, ForcingState};
pub use line_search::{line_search, sufficient_descent_holds, LineSearchResult};
pub use shamanskii::{solve_generic, solve_inexact};
pub use trace::{format_float, Trace, TraceRecord, TRACE_HEADER};

/// Floor applied to adaptive forcing terms.
pub const DEFAULT_ETA_MIN: f64 = 1e-10;
/// Default `η̄`.
pub const DEFAULT_ETA_BAR: f64 = 0.1;
/// Relative increase of `F` above which an inexact unit step is rejected.
pub const SAFEGUARD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HessianMode {
    Exact,
    Lbfgs { memory: usize },
}

impl HessianMode {
    pub fn lbfgs() -> Self {
        HessianMode::Lbfgs { memory: DEFAULT_MEMORY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaSchedule {
    /// `η_t = max(η_min, min(η̄, ‖Ĝ(x_t, x_{t−1}, H) − G(x_t)‖ / ‖G(x_{t−1})‖))`.
    Adaptive,
    /// `η_t = η̄`.
    Constant,
}

/// Which subproblem stopping rule a run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRuleConfig {
    FixedTolerance(f64),
    Forcing { gamma: f64, eta_bar: f64, schedule: EtaSchedule },
    MaxInnerIters(usize),
}

impl StopRuleConfig {
    pub fn label(&self) -> String {
        match self {
            StopRuleConfig::FixedTolerance(eps) => format!("fixed({eps:e})"),
            StopRuleConfig::Forcing { gamma, eta_bar, schedule } => {
                let s = match schedule {
                    EtaSchedule::Adaptive => "adaptive",
                    EtaSchedule::Constant => "constant",
                };
                format!("forcing(gamma={gamma},eta_bar={eta_bar},{s})")
            }
            StopRuleConfig::MaxInnerIters(k) => format!("max_inner({k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearchConfig {
    Backtracking { beta: f64, budget: usize },
    UnitStep,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig::Backtracking { beta: 0.5, budget: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub refresh: RefreshSchedule,
    pub hessian: HessianMode,
    pub stop_rule: StopRuleConfig,
    /// Absolute inner iteration cap, applied under every rule.
    pub inner_cap: usize,
    pub inner_solver: InnerSolver,
    pub line_search: LineSearchConfig,
    /// Outer tolerance on `‖G(x_t)‖`; `None` means `1e-8·(1 + ‖G(x_0)‖)`.
    pub tol_g: Option<f64>,
    pub max_iters: usize,
    pub time_budget: Option<Duration>,
    pub eta_min: f64,
    /// Record elapsed seconds in the trace; when off the column is zero and
    /// traces are reproducible byte for byte.
    pub wall_clock: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            refresh: RefreshSchedule::Every(1),
            hessian: HessianMode::Exact,
            stop_rule: StopRuleConfig::Forcing { gamma: 1.0, eta_bar: DEFAULT_ETA_BAR, schedule: EtaSchedule::Adaptive },
            inner_cap: DEFAULT_INNER_CAP,
            inner_solver: InnerSolver::Spectral,
            line_search: LineSearchConfig::default(),
            tol_g: None,
            max_iters: 500,
            time_budget: None,
            eta_min: DEFAULT_ETA_MIN,
            wall_clock: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let RefreshSchedule::Every(0) = self.refresh {
            return Err(Error::InvalidConfig("refresh period must be >= 1".into()));
        }
        if let HessianMode::Lbfgs { memory: 0 } = self.hessian {
            return Err(Error::InvalidConfig("L-BFGS memory must be >= 1".into()));
        }
        match self.stop_rule {
            StopRuleConfig::FixedTolerance(eps) if !(eps >= 0.0) => {
                return Err(Error::InvalidConfig(format!("subproblem tolerance must be >= 0, got {eps}")));
            }
            StopRuleConfig::Forcing { gamma, eta_bar, .. } if !(gamma >= 1.0) || !(eta_bar > 0.0) => {
                return Err(Error::InvalidConfig(format!("forcing rule needs gamma >= 1 and eta_bar > 0, got {gamma}, {eta_bar}")));
            }
            StopRuleConfig::MaxInnerIters(0) => return Err(Error::InvalidConfig("max inner iterations must be >= 1".into())),
            _ => {}
        }
        if self.inner_cap == 0 {
            return Err(Error::InvalidConfig("inner iteration cap must be >= 1".into()));
        }
        if let LineSearchConfig::Backtracking { beta, budget } = self.line_search {
            if !(beta > 0.0 && beta < 1.0) || budget == 0 {
                return Err(Error::InvalidConfig(format!("line search needs beta in (0,1) and budget >= 1, got {beta}, {budget}")));
            }
        }
        if let Some(tol) = self.tol_g {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!("tol_g must be positive, got {tol}")));
            }
        }
        if !(self.eta_min > 0.0) {
            return Err(Error::InvalidConfig(format!("eta_min must be positive, got {}", self.eta_min)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    TimeBudget,
    LineSearchFailure,
    /// The subproblem returned no descent direction before the tolerance was met.
    Stalled,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::TimeBudget => "time_budget",
            SolveStatus::LineSearchFailure => "line_search_failure",
            SolveStatus::Stalled => "stalled",
        }
    }

    pub fn converged(self) -> bool {
        self == SolveStatus::Converged
    }
}

/// Result of one solver run.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: DVector<f64>,
    pub status: SolveStatus,
    pub trace: Trace,
    /// `x_0, …, x_T`.
    pub iterates: Vec<DVector<f64>>,
    /// The curvature models in the order they were built.
    pub models: Vec<HessianModel>,
    /// Outer tolerance actually used.
    pub tol_g: f64,
}

impl SolveOutput {
    pub fn iterations(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }
}
