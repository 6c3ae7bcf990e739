use std::time::Instant;

use log::{debug, trace};
use nalgebra::DVector;

use super::forcing::ForcingState;
use super::line_search::line_search;
use super::trace::{Trace, TraceRecord};
use super::{EtaSchedule, HessianMode, LineSearchConfig, SolveOutput, SolveStatus, SolverConfig, StopRuleConfig, SAFEGUARD_TOL};
use crate::error::{Error, Result};
use crate::hessian::{needs_refresh, refresh_exact, HessianModel, LbfgsModel};
use crate::problem::{eval_objective, CompositeProblem};
use crate::prox::{composite_gradient, subproblem_residual, CompositeGradientScale};
use crate::subproblem::{build_model, solve_subproblem_with, StopRule, StopVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Globalization {
    LineSearch,
    UnitWithSafeguard,
}

/// Shamanskii iteration with a backtracking line search on every step.
pub fn solve_generic(problem: &CompositeProblem, x0: &DVector<f64>, config: &SolverConfig) -> Result<SolveOutput> {
    if config.line_search == LineSearchConfig::UnitStep {
        return Err(Error::InvalidConfig("the line-search driver needs a backtracking line search".into()));
    }
    run(problem, x0, config, Globalization::LineSearch)
}

/// Shamanskii iteration with unit steps and forcing-term inner accuracy.
pub fn solve_inexact(problem: &CompositeProblem, x0: &DVector<f64>, config: &SolverConfig) -> Result<SolveOutput> {
    run(problem, x0, config, Globalization::UnitWithSafeguard)
}

struct Previous {
    x: DVector<f64>,
    grad: DVector<f64>,
    model: HessianModel,
    norm_g: f64,
}

fn run(problem: &CompositeProblem, x0: &DVector<f64>, config: &SolverConfig, mode: Globalization) -> Result<SolveOutput> {
    config.validate()?;
    problem.check_dim(x0)?;
    if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { value: x0[i], coordinate: Some(i) });
    }
    let scale = CompositeGradientScale::of(problem);
    let start = Instant::now();
    let wall = |start: &Instant| if config.wall_clock { start.elapsed().as_secs_f64() } else { 0.0 };
    let (beta, budget) = match config.line_search {
        LineSearchConfig::Backtracking { beta, budget } => (beta, budget),
        LineSearchConfig::UnitStep => (0.5, 50),
    };

    let mut x = x0.clone();
    let mut f = eval_objective(problem, &x)?;
    if !f.is_finite() {
        return Err(Error::InvalidConfig("starting point is outside the domain of r".into()));
    }
    let mut grad = problem.smooth.gradient(&x);
    let mut norm_g = composite_gradient(problem, &x, scale)?.norm();
    let tol = config.tol_g.unwrap_or(1e-8 * (1.0 + norm_g));

    let mut lbfgs = match config.hessian {
        HessianMode::Lbfgs { memory } => Some(LbfgsModel::new(problem.dim(), memory, problem.lipschitz())?),
        HessianMode::Exact => None,
    };
    let mut forcing = match config.stop_rule {
        StopRuleConfig::Forcing { eta_bar, .. } => Some(ForcingState::new(eta_bar, config.eta_min)),
        _ => None,
    };

    let mut trace = Trace::default();
    let mut iterates = vec![x.clone()];
    let mut models: Vec<HessianModel> = Vec::new();
    let mut model: Option<HessianModel> = None;
    let mut prev: Option<Previous> = None;
    let mut hess_evals = 0;
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

        let refresh = model.is_none() || needs_refresh(t, config.refresh);
        if refresh {
            let m = match &lbfgs {
                Some(state) => HessianModel::lbfgs(state.clone(), t),
                None => refresh_exact(problem, &x, t)?,
            };
            // L-BFGS refreshes only snapshot the running model
            if lbfgs.is_none() {
                hess_evals += 1;
            }
            models.push(m.clone());
            model = Some(m);
        }
        let h = model.as_ref().expect("model built on first iteration");

        let (variant, eta, gamma) = match config.stop_rule {
            StopRuleConfig::FixedTolerance(eps) => (StopVariant::FixedTolerance(eps), f64::NAN, f64::NAN),
            StopRuleConfig::MaxInnerIters(k) => (StopVariant::MaxInnerIters(k), f64::NAN, f64::NAN),
            StopRuleConfig::Forcing { gamma, eta_bar, schedule } => {
                let eta = match (schedule, &prev, forcing.as_mut()) {
                    (EtaSchedule::Adaptive, Some(p), Some(state)) => {
                        let g_hat = subproblem_residual(&x, &p.x, &p.grad, &p.model, &problem.reg, scale)?;
                        let g_now = composite_gradient(problem, &x, scale)?;
                        state.advance((g_hat - g_now).norm(), p.norm_g)
                    }
                    _ => eta_bar,
                };
                (StopVariant::Forcing { gamma, eta, grad_norm: norm_g }, eta, gamma)
            }
        };
        let rule = StopRule::new(variant, config.inner_cap)?;
        let qm = build_model(&x, &grad, h)?;
        let sub = solve_subproblem_with(&qm, &problem.reg, &rule, scale, config.inner_solver)?;
        let dx = &sub.z - &x;
        let norm_dx = dx.norm();
        let r_gain = problem.reg.difference(&sub.z, &x);
        let lambda = dx.dot(&grad) + r_gain;

        let mut record = TraceRecord {
            t,
            f,
            norm_g,
            alpha: f64::NAN,
            norm_dx,
            eta,
            gamma,
            inner_iters: sub.inner_iters,
            inner_stop: Some(sub.stop_reason),
            refresh,
            hess_evals,
            wall_s: 0.0,
            ls_trials: 0,
            lambda,
            safeguarded: false,
        };

        if norm_dx == 0.0 {
            record.wall_s = wall(&start);
            trace.push(record);
            break SolveStatus::Stalled;
        }

        let mut unit = None;
        if mode == Globalization::UnitWithSafeguard {
            let f_trial = eval_objective(problem, &sub.z)?;
            if f_trial <= f + SAFEGUARD_TOL * (1.0 + f.abs()) {
                unit = Some(f_trial);
            } else {
                record.safeguarded = true;
                debug!("t={t}: unit step raised F by {:e}, falling back to line search", f_trial - f);
            }
        }
        let (x_new, f_new, alpha, trials) = match unit {
            Some(f_trial) => (sub.z.clone(), f_trial, 1.0, 1),
            None => match line_search(problem, &x, &dx, &grad, f, r_gain, beta, budget) {
                Ok(ls) => (ls.x, ls.f_new, ls.alpha, ls.trials),
                Err(Error::NonDescent { .. }) => {
                    record.wall_s = wall(&start);
                    trace.push(record);
                    break SolveStatus::Stalled;
                }
                Err(Error::LineSearchFailure { trials }) => {
                    record.ls_trials = trials;
                    record.wall_s = wall(&start);
                    trace.push(record);
                    break SolveStatus::LineSearchFailure;
                }
                Err(e) => return Err(e),
            },
        };
        record.alpha = alpha;
        record.ls_trials = trials;
        record.wall_s = wall(&start);
        trace!("t={t} F={f:e} |G|={norm_g:e} alpha={alpha} inner={}", sub.inner_iters);
        trace.push(record);

        let grad_new = problem.smooth.gradient(&x_new);
        if let Some(state) = lbfgs.take() {
            lbfgs = Some(state.update(&(&x_new - &x), &(&grad_new - &grad))?);
        }
        prev = Some(Previous { x: std::mem::replace(&mut x, x_new), grad: std::mem::replace(&mut grad, grad_new), model: h.clone(), norm_g });
        f = f_new;
        norm_g = composite_gradient(problem, &x, scale)?.norm();
        iterates.push(x.clone());
        t += 1;
    };

    if trace.last().is_none_or(|r| r.t != t) {
        trace.push(TraceRecord::terminal(t, f, norm_g, hess_evals, wall(&start)));
    }
    debug!("finished after {t} iterations: {} (|G|={norm_g:e}, tol={tol:e})", status.as_str());
    Ok(SolveOutput { x, status, trace, iterates, models, tol_g: tol })
}
