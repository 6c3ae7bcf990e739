use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{eval_objective, CompositeProblem};

/// Slack for rounding in `F` when the predicted decrease is at machine level.
const ROUNDING_SLACK: f64 = 16.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    /// The accepted point; `f_new` is evaluated exactly here.
    pub x: DVector<f64>,
    pub alpha: f64,
    pub f_new: f64,
    pub trials: usize,
    pub lambda: f64,
}

/// `F(x + αΔx) − F(x) ≤ (α/4)λ`, with rounding slack proportional to `|F(x)|`.
pub fn sufficient_descent_holds(f_old: f64, f_new: f64, alpha: f64, lambda: f64) -> bool {
    f_new - f_old <= 0.25 * alpha * lambda + ROUNDING_SLACK * (1.0 + f_old.abs())
}

/// Backtracking from `α = 1` by factor `beta` until the sufficient-descent
/// inequality holds. `r_gain` is `r(x') − r(x)` at the full step `x' = x + Δx`.
#[allow(clippy::too_many_arguments)]
pub fn line_search(
    problem: &CompositeProblem,
    x: &DVector<f64>,
    dx: &DVector<f64>,
    grad: &DVector<f64>,
    f_x: f64,
    r_gain: f64,
    beta: f64,
    budget: usize,
) -> Result<LineSearchResult> {
    let lambda = dx.dot(grad) + r_gain;
    if !(lambda < 0.0) {
        return Err(Error::NonDescent { lambda });
    }
    let mut alpha = 1.0;
    for trial in 1..=budget {
        let candidate = x + dx * alpha;
        let f_new = eval_objective(problem, &candidate)?;
        if sufficient_descent_holds(f_x, f_new, alpha, lambda) {
            return Ok(LineSearchResult { x: candidate, alpha, f_new, trials: trial, lambda });
        }
        alpha *= beta;
    }
    Err(Error::LineSearchFailure { trials: budget })
}
