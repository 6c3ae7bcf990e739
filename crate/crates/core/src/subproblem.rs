//! Inexact solution of the proximal Newton subproblem
//!
//! ```text
//! min_z  r(z) + (z − x_t)ᵀ∇f(x_t) + ½(z − x_t)ᵀH(z − x_t)
//! ```
//!
//! by proximal gradient with Barzilai–Borwein steps and non-monotone
//! acceptance (SpaRSA style), warm-started at `x_t` and stopped by one of the
//! rules in [`StopVariant`].

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hessian::{Curvature, HessianModel};
use crate::problem::Regularizer;
use crate::prox::{prox_apply, prox_gradient_map, subproblem_residual, CompositeGradientScale};

/// Default absolute inner iteration cap.
pub const DEFAULT_INNER_CAP: usize = 1000;
/// Number of model values in the non-monotone acceptance window.
pub const NONMONOTONE_WINDOW: usize = 5;
const SUFFICIENT_DECREASE: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// The quadratic model at `x_t`.
pub struct QuadraticModel<'a> {
    pub anchor: &'a DVector<f64>,
    pub grad: &'a DVector<f64>,
    pub curvature: &'a dyn Curvature,
    /// Largest-eigenvalue estimate of the curvature.
    pub lipschitz: f64,
}

impl<'a> QuadraticModel<'a> {
    /// Model value relative to the anchor (zero at `z = x_t`), smooth part only.
    pub fn smooth_value(&self, z: &DVector<f64>) -> f64 {
        let d = z - self.anchor;
        self.grad.dot(&d) + 0.5 * d.dot(&self.curvature.matvec(&d))
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        self.grad + self.curvature.matvec(&(z - self.anchor))
    }

    /// Full subproblem objective `φ(z) − φ(x_t)` including `r(z) − r(x_t)`.
    pub fn value(&self, z: &DVector<f64>, reg: &Regularizer) -> f64 {
        self.smooth_value(z) + reg.difference(z, self.anchor)
    }
}

/// Builds the model and its curvature bound `L_H`; the model must be positive definite.
pub fn build_model<'a>(anchor: &'a DVector<f64>, grad: &'a DVector<f64>, curvature: &'a HessianModel) -> Result<QuadraticModel<'a>> {
    if anchor.len() != grad.len() || curvature.dim() != anchor.len() {
        return Err(Error::DimensionMismatch { expected: anchor.len(), got: grad.len().max(curvature.dim()) });
    }
    curvature.ensure_positive_definite()?;
    Ok(QuadraticModel { anchor, grad, curvature, lipschitz: curvature.largest_eigenvalue() })
}

/// Stopping test applied to `‖Ĝ‖` after each inner iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopVariant {
    /// `‖Ĝ‖ ≤ ε`.
    FixedTolerance(f64),
    /// `‖Ĝ‖ ≤ η_t‖G(x_t)‖^γ`.
    Forcing { gamma: f64, eta: f64, grad_norm: f64 },
    /// Never fires; the loop stops after `K` iterations.
    MaxInnerIters(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub variant: StopVariant,
    /// Absolute cap on inner iterations regardless of the variant.
    pub max_iters: usize,
}

impl StopRule {
    pub fn new(variant: StopVariant, max_iters: usize) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::InvalidConfig("inner iteration cap must be >= 1".into()));
        }
        match variant {
            StopVariant::FixedTolerance(eps) if !(eps >= 0.0) => {
                return Err(Error::InvalidConfig(format!("subproblem tolerance must be >= 0, got {eps}")))
            }
            StopVariant::Forcing { gamma, eta, .. } if !(gamma >= 1.0) || !(eta > 0.0) => {
                return Err(Error::InvalidConfig(format!("forcing rule needs gamma >= 1 and eta > 0, got {gamma}, {eta}")))
            }
            StopVariant::MaxInnerIters(0) => return Err(Error::InvalidConfig("max inner iterations must be >= 1".into())),
            _ => {}
        }
        Ok(Self { variant, max_iters })
    }

    fn iteration_cap(&self) -> usize {
        match self.variant {
            StopVariant::MaxInnerIters(k) => k.min(self.max_iters),
            _ => self.max_iters,
        }
    }
}

pub fn check_stop(residual_norm: f64, rule: &StopRule) -> bool {
    match rule.variant {
        StopVariant::FixedTolerance(eps) => residual_norm <= eps,
        StopVariant::Forcing { gamma, eta, grad_norm } => residual_norm <= eta * grad_norm.powf(gamma),
        StopVariant::MaxInnerIters(_) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStop {
    CriterionMet,
    IterCap,
    Stalled,
}

impl InnerStop {
    pub fn as_str(self) -> &'static str {
        match self {
            InnerStop::CriterionMet => "criterion_met",
            InnerStop::IterCap => "iter_cap",
            InnerStop::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub z: DVector<f64>,
    /// `‖Ĝ(z, x_t, H)‖`, recomputed at the returned `z`.
    pub residual_norm: f64,
    pub inner_iters: usize,
    pub stop_reason: InnerStop,
    /// Subproblem objective at each accepted iterate, starting with 0 at `x_t`.
    pub model_values: Vec<f64>,
}

/// Inner algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerSolver {
    /// Barzilai–Borwein proximal gradient with non-monotone acceptance.
    #[default]
    Spectral,
    /// Accelerated proximal gradient with constant step `1/L_H`.
    Fista,
}

pub fn solve_subproblem(model: &QuadraticModel<'_>, reg: &Regularizer, rule: &StopRule, scale: CompositeGradientScale) -> Result<SubproblemResult> {
    solve_subproblem_with(model, reg, rule, scale, InnerSolver::Spectral)
}

pub fn solve_subproblem_with(
    model: &QuadraticModel<'_>,
    reg: &Regularizer,
    rule: &StopRule,
    scale: CompositeGradientScale,
    solver: InnerSolver,
) -> Result<SubproblemResult> {
    if !(model.lipschitz > 0.0) || !model.lipschitz.is_finite() {
        return Err(Error::NotPositiveDefinite(format!("model curvature bound {}", model.lipschitz)));
    }
    let mut out = match solver {
        InnerSolver::Spectral => spectral(model, reg, rule, scale),
        InnerSolver::Fista => accelerated(model, reg, rule, scale),
    };
    out.residual_norm = subproblem_residual(&out.z, model.anchor, model.grad, model.curvature, reg, scale)?.norm();
    Ok(out)
}

fn stall_threshold(model: &QuadraticModel<'_>) -> f64 {
    1e-16 * (1.0 + model.anchor.norm())
}

fn spectral(model: &QuadraticModel<'_>, reg: &Regularizer, rule: &StopRule, scale: CompositeGradientScale) -> SubproblemResult {
    let x = model.anchor;
    let g = model.grad;
    let (step_min, step_max) = (1e-3 / model.lipschitz, 1e3 / model.lipschitz);
    let stall = stall_threshold(model);
    let cap = rule.iteration_cap();

    let mut z = x.clone();
    let mut hd = DVector::zeros(x.len());
    let mut grad_z = g.clone();
    let mut window: VecDeque<f64> = VecDeque::from([0.0]);
    let mut values = vec![0.0];
    let mut step = 1.0 / model.lipschitz;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut iters = 0;

    let reason = loop {
        if iters >= cap {
            break InnerStop::IterCap;
        }
        let reference = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let z_new = prox_apply(reg, &(&z - &grad_z * step), step);
            let d_new = &z_new - x;
            let hd_new = model.curvature.matvec(&d_new);
            let phi_new = g.dot(&d_new) + 0.5 * d_new.dot(&hd_new) + reg.difference(&z_new, x);
            let dz = (&z_new - &z).norm_squared();
            if phi_new <= reference - 0.5 * SUFFICIENT_DECREASE / step * dz {
                accepted = Some((z_new, hd_new, phi_new));
                break;
            }
            step *= 0.5;
        }
        let Some((z_new, hd_new, phi_new)) = accepted else {
            break InnerStop::Stalled;
        };
        iters += 1;

        let s = &z_new - &z;
        let y = &hd_new - &hd;
        z = z_new;
        hd = hd_new;
        grad_z = g + &hd;
        if window.len() == NONMONOTONE_WINDOW {
            window.pop_front();
        }
        window.push_back(phi_new);
        values.push(phi_new);

        let resid = prox_gradient_map(reg, &z, &grad_z, scale).norm();
        if best.as_ref().is_none_or(|(b, _)| resid < *b) {
            best = Some((resid, z.clone()));
        }
        if check_stop(resid, rule) {
            break InnerStop::CriterionMet;
        }
        let ss = s.norm_squared();
        if ss.sqrt() < stall {
            break InnerStop::Stalled;
        }
        let sy = s.dot(&y);
        step = if sy > 0.0 { (ss / sy).clamp(step_min, step_max) } else { step_max };
    };

    let z = match (reason, best) {
        (InnerStop::Stalled, Some((_, zb))) => zb,
        _ => z,
    };
    SubproblemResult { z, residual_norm: f64::NAN, inner_iters: iters, stop_reason: reason, model_values: values }
}

fn accelerated(model: &QuadraticModel<'_>, reg: &Regularizer, rule: &StopRule, scale: CompositeGradientScale) -> SubproblemResult {
    let x = model.anchor;
    // power iteration may underestimate λ_max by its tolerance
    let step = 1.0 / (model.lipschitz * (1.0 + 2.0 * crate::hessian::MODEL_POWER_TOL));
    let stall = stall_threshold(model);
    let cap = rule.iteration_cap();

    let mut z = x.clone();
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut values = vec![0.0];
    let mut iters = 0;
    let reason = loop {
        if iters >= cap {
            break InnerStop::IterCap;
        }
        let z_new = prox_apply(reg, &(&y - model.gradient(&y) * step), step);
        iters += 1;
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let dz = &z_new - &z;
        y = &z_new + &dz * ((momentum - 1.0) / next_momentum);
        momentum = next_momentum;
        z = z_new;
        values.push(model.value(&z, reg));
        let resid = prox_gradient_map(reg, &z, &model.gradient(&z), scale).norm();
        if check_stop(resid, rule) {
            break InnerStop::CriterionMet;
        }
        if dz.norm() < stall {
            break InnerStop::Stalled;
        }
    };
    SubproblemResult { z, residual_norm: f64::NAN, inner_iters: iters, stop_reason: reason, model_values: values }
}
