//! Multi-run experiments: reference solutions, the stopping-rule study,
//! order sweeps and method comparisons. Runs execute concurrently and results
//! come back in input order.

use std::thread;
use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::analysis::{estimate_order, predicted_order, OrderEstimate};
use crate::error::Result;
use crate::hessian::RefreshSchedule;
use crate::problem::CompositeProblem;
use crate::solver::{
    solve_baseline, solve_generic, solve_inexact, BaselineVariant, EtaSchedule, HessianMode, SolveOutput, SolverConfig, StopRuleConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Generic,
    Inexact,
    Baseline(BaselineVariant),
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Generic => "generic",
            Method::Inexact => "inexact",
            Method::Baseline(v) => v.as_str(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub method: Method,
    pub config: SolverConfig,
}

impl RunSpec {
    pub fn new(label: impl Into<String>, method: Method, config: SolverConfig) -> Self {
        Self { label: label.into(), method, config }
    }

    /// One-line description of the settings, for reports.
    pub fn describe(&self) -> String {
        let c = &self.config;
        let refresh = match c.refresh {
            RefreshSchedule::Every(n) => n.to_string(),
            RefreshSchedule::Never => "inf".into(),
        };
        let hessian = match c.hessian {
            HessianMode::Exact => "exact".to_string(),
            HessianMode::Lbfgs { memory } => format!("lbfgs({memory})"),
        };
        format!(
            "method={} refresh={refresh} hessian={hessian} stop_rule={} inner_cap={} max_iters={} tol_g={}",
            self.method.as_str(),
            c.stop_rule.label(),
            c.inner_cap,
            c.max_iters,
            c.tol_g.map_or_else(|| "auto".to_string(), |t| t.to_string()),
        )
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub spec: RunSpec,
    pub output: Result<SolveOutput>,
    pub elapsed: Duration,
}

pub fn run_one(problem: &CompositeProblem, x0: &DVector<f64>, spec: &RunSpec) -> RunResult {
    let start = Instant::now();
    let output = match spec.method {
        Method::Generic => solve_generic(problem, x0, &spec.config),
        Method::Inexact => solve_inexact(problem, x0, &spec.config),
        Method::Baseline(v) => solve_baseline(problem, x0, v, &spec.config),
    };
    RunResult { spec: spec.clone(), output, elapsed: start.elapsed() }
}

/// Runs every spec on its own thread.
pub fn run_all(problem: &CompositeProblem, x0: &DVector<f64>, specs: &[RunSpec]) -> Vec<RunResult> {
    thread::scope(|scope| {
        let handles: Vec<_> = specs.iter().map(|s| scope.spawn(move || run_one(problem, x0, s))).collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    })
}

/// High-accuracy solution: proximal Newton with exact Hessians, subproblems
/// solved to `1e−14`, stopped at `‖G‖ ≤ 1e−12`.
pub fn reference_solution(problem: &CompositeProblem, x0: &DVector<f64>, max_iters: usize) -> Result<SolveOutput> {
    let config = SolverConfig {
        refresh: RefreshSchedule::Every(1),
        hessian: HessianMode::Exact,
        stop_rule: StopRuleConfig::FixedTolerance(1e-14),
        inner_cap: 20_000,
        tol_g: Some(1e-12),
        max_iters,
        ..SolverConfig::default()
    };
    solve_generic(problem, x0, &config)
}

/// Shared settings for the stopping-rule study: `n = 1`, exact Hessians and a
/// tight outer tolerance so the linear tail of the five-iteration variant is
/// long enough to measure.
pub fn stopping_study_base() -> SolverConfig {
    SolverConfig { refresh: RefreshSchedule::Every(1), hessian: HessianMode::Exact, tol_g: Some(1e-11), max_iters: 3000, ..SolverConfig::default() }
}

pub const STOPPING_VARIANT_LABELS: [&str; 4] = ["fixed_1e-4", "forcing_gamma2", "forcing_gamma1", "max_inner_5"];

/// The four subproblem stopping rules plus ISTA and FISTA, sharing `base`.
pub fn stopping_rule_study(base: &SolverConfig) -> Vec<RunSpec> {
    let rules = [
        StopRuleConfig::FixedTolerance(1e-4),
        StopRuleConfig::Forcing { gamma: 2.0, eta_bar: base_eta_bar(base), schedule: EtaSchedule::Adaptive },
        StopRuleConfig::Forcing { gamma: 1.0, eta_bar: base_eta_bar(base), schedule: EtaSchedule::Adaptive },
        StopRuleConfig::MaxInnerIters(5),
    ];
    let mut specs: Vec<RunSpec> = STOPPING_VARIANT_LABELS
        .iter()
        .zip(rules)
        .map(|(label, rule)| RunSpec::new(*label, Method::Inexact, SolverConfig { stop_rule: rule, ..base.clone() }))
        .collect();
    for v in [BaselineVariant::Ista, BaselineVariant::Fista] {
        specs.push(RunSpec::new(v.as_str(), Method::Baseline(v), base.clone()));
    }
    specs
}

fn base_eta_bar(base: &SolverConfig) -> f64 {
    match base.stop_rule {
        StopRuleConfig::Forcing { eta_bar, .. } => eta_bar,
        _ => crate::solver::DEFAULT_ETA_BAR,
    }
}

/// Lazy L-BFGS (`n = 3`, memory 50), proximal Newton, ISTA and FISTA.
pub fn method_comparison(base: &SolverConfig) -> Vec<RunSpec> {
    vec![
        RunSpec::new(
            "shamanskii_lbfgs_n3",
            Method::Generic,
            SolverConfig { refresh: RefreshSchedule::Every(3), hessian: HessianMode::Lbfgs { memory: 50 }, ..base.clone() },
        ),
        RunSpec::new(
            "prox_newton_n1",
            Method::Generic,
            SolverConfig { refresh: RefreshSchedule::Every(1), hessian: HessianMode::Exact, ..base.clone() },
        ),
        RunSpec::new("ista", Method::Baseline(BaselineVariant::Ista), base.clone()),
        RunSpec::new("fista", Method::Baseline(BaselineVariant::Fista), base.clone()),
    ]
}

/// One row of an order sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderCase {
    /// Exact Hessian refreshed every `n`, subproblems solved to `1e−10`.
    Exact { n: usize },
    /// Unit steps with `‖Ĝ‖ ≤ η_t‖G‖^γ`.
    Forcing { n: usize, gamma: f64, schedule: EtaSchedule },
}

impl OrderCase {
    pub fn period(&self) -> usize {
        match *self {
            OrderCase::Exact { n } | OrderCase::Forcing { n, .. } => n,
        }
    }

    pub fn predicted(&self) -> f64 {
        match *self {
            OrderCase::Exact { n } => predicted_order(n, None),
            OrderCase::Forcing { n, gamma, schedule: EtaSchedule::Constant } => predicted_order(n, Some(gamma)),
            OrderCase::Forcing { n, .. } => predicted_order(n, None),
        }
    }

    pub fn spec(&self, base: &SolverConfig) -> RunSpec {
        match *self {
            OrderCase::Exact { n } => RunSpec::new(
                format!("exact_n{n}"),
                Method::Generic,
                SolverConfig {
                    refresh: RefreshSchedule::Every(n),
                    hessian: HessianMode::Exact,
                    stop_rule: StopRuleConfig::FixedTolerance(1e-10),
                    inner_cap: base.inner_cap.max(20_000),
                    ..base.clone()
                },
            ),
            OrderCase::Forcing { n, gamma, schedule } => {
                let s = match schedule {
                    EtaSchedule::Adaptive => "adaptive",
                    EtaSchedule::Constant => "constant",
                };
                RunSpec::new(
                    format!("forcing_n{n}_gamma{gamma}_{s}"),
                    Method::Inexact,
                    SolverConfig {
                        refresh: RefreshSchedule::Every(n),
                        hessian: HessianMode::Exact,
                        stop_rule: StopRuleConfig::Forcing { gamma, eta_bar: base_eta_bar(base), schedule },
                        ..base.clone()
                    },
                )
            }
        }
    }
}

#[derive(Debug)]
pub struct OrderRow {
    pub case: OrderCase,
    pub predicted: f64,
    pub run: RunResult,
    pub estimate: Result<OrderEstimate>,
}

pub fn order_sweep(problem: &CompositeProblem, x0: &DVector<f64>, x_ref: &DVector<f64>, cases: &[OrderCase], base: &SolverConfig) -> Vec<OrderRow> {
    let specs: Vec<RunSpec> = cases.iter().map(|c| c.spec(base)).collect();
    run_all(problem, x0, &specs)
        .into_iter()
        .zip(cases)
        .map(|(run, case)| {
            let estimate = match &run.output {
                Ok(out) => estimate_order(&out.iterates, x_ref, case.period()),
                Err(e) => Err(e.clone()),
            };
            OrderRow { case: *case, predicted: case.predicted(), run, estimate }
        })
        .collect()
}

/// Smallest final objective over successful runs and an optional reference value.
pub fn best_objective(results: &[RunResult], reference: Option<f64>) -> f64 {
    results.iter().filter_map(|r| r.output.as_ref().ok()).flat_map(|o| o.trace.iter().map(|t| t.f)).chain(reference).fold(f64::INFINITY, f64::min)
}
