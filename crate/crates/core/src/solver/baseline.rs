use std::time::Instant;

use nalgebra::DVector;

use super::trace::{Trace, TraceRecord};
use super::{SolveOutput, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::problem::{eval_objective, CompositeProblem};
use crate::prox::{composite_gradient, prox_apply, CompositeGradientScale};

const ROUNDING_SLACK: f64 = 16.0 * f64::EPSILON;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineVariant {
    Ista,
    Fista,
}

impl BaselineVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineVariant::Ista => "ista",
            BaselineVariant::Fista => "fista",
        }
    }
}

/// Proximal gradient from `y` with step `1/L`, doubling `L` until the
/// quadratic upper bound holds at the new point.
fn prox_step(problem: &CompositeProblem, y: &DVector<f64>, lip: &mut f64) -> Result<(DVector<f64>, usize)> {
    let fy = problem.smooth.value(y);
    let gy = problem.smooth.gradient(y);
    for trial in 1..=MAX_DOUBLINGS {
        let z = prox_apply(&problem.reg, &(y - &gy / *lip), 1.0 / *lip);
        let d = &z - y;
        let bound = fy + gy.dot(&d) + 0.5 * *lip * d.norm_squared();
        if problem.smooth.value(&z) <= bound + ROUNDING_SLACK * (1.0 + fy.abs()) {
            return Ok((z, trial));
        }
        *lip *= 2.0;
    }
    Err(Error::LineSearchFailure { trials: MAX_DOUBLINGS })
}

/// ISTA or FISTA started with step `1/ℓ̂`. Trace rows record `α = 1/L`.
pub fn solve_baseline(problem: &CompositeProblem, x0: &DVector<f64>, variant: BaselineVariant, config: &SolverConfig) -> Result<SolveOutput> {
    config.validate()?;
    problem.check_dim(x0)?;
    let scale = CompositeGradientScale::of(problem);
    let start = Instant::now();
    let wall = |start: &Instant| if config.wall_clock { start.elapsed().as_secs_f64() } else { 0.0 };

    let mut x = x0.clone();
    let mut f = eval_objective(problem, &x)?;
    if !f.is_finite() {
        return Err(Error::InvalidConfig("starting point is outside the domain of r".into()));
    }
    let mut norm_g = composite_gradient(problem, &x, scale)?.norm();
    let tol = config.tol_g.unwrap_or(1e-8 * (1.0 + norm_g));
    let mut lip = problem.lipschitz();
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut trace = Trace::default();
    let mut iterates = vec![x.clone()];
    let mut t = 0;

    let status = loop {
        if norm_g <= tol {
            break SolveStatus::Converged;
        }
        if t >= config.max_iters {
            break SolveStatus::MaxIterations;
        }
        if config.time_budget.is_some_and(|b| start.elapsed() >= b) {
            break SolveStatus::TimeBudget;
        }
        let from = match variant {
            BaselineVariant::Ista => &x,
            BaselineVariant::Fista => &y,
        };
        let (x_new, trials) = match prox_step(problem, from, &mut lip) {
            Ok(v) => v,
            Err(Error::LineSearchFailure { trials }) => {
                let mut r = TraceRecord::terminal(t, f, norm_g, 0, wall(&start));
                r.ls_trials = trials;
                trace.push(r);
                break SolveStatus::LineSearchFailure;
            }
            Err(e) => return Err(e),
        };
        let mut record = TraceRecord::terminal(t, f, norm_g, 0, wall(&start));
        record.alpha = 1.0 / lip;
        record.norm_dx = (&x_new - &x).norm();
        record.inner_iters = 0;
        record.ls_trials = trials;
        trace.push(record);

        if variant == BaselineVariant::Fista {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &x_new + (&x_new - &x) * ((momentum - 1.0) / next);
            momentum = next;
        }
        x = x_new;
        f = eval_objective(problem, &x)?;
        norm_g = composite_gradient(problem, &x, scale)?.norm();
        iterates.push(x.clone());
        t += 1;
    };
    if trace.last().is_none_or(|r| r.t != t) {
        trace.push(TraceRecord::terminal(t, f, norm_g, 0, wall(&start)));
    }
    Ok(SolveOutput { x, status, trace, iterates, models: Vec::new(), tol_g: tol })
}
