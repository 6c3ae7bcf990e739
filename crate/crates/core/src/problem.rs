//! Composite objectives `F(x) = f(x) + r(x)` and the oracle contracts behind them.
//!
//! A [`SmoothOracle`] supplies value, gradient and Hessian of the convex smooth
//! part `f`. A [`Regularizer`] supplies the value and proximal map of the closed
//! convex part `r`. [`CompositeProblem`] bundles both with the gradient
//! Lipschitz estimate `ℓ̂` that scales the composite gradient.

use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance of the power iteration used for `ℓ̂`.
pub const LIPSCHITZ_REL_TOL: f64 = 1e-3;
/// Iteration cap of the power iteration used for `ℓ̂`.
pub const LIPSCHITZ_MAX_ITER: usize = 200;
/// Multiplier applied on top of the largest Hessian eigenvalue.
pub const LIPSCHITZ_SAFETY: f64 = 1.1;
/// Value returned when the Hessian at the start point vanishes.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// Declared or estimated smoothness constants of `f`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmoothnessConstants {
    /// Gradient Lipschitz constant.
    pub grad_lipschitz: Option<f64>,
    /// Hessian Lipschitz constant. Only a local diagnostic for losses such as
    /// the Poisson loss that violate it globally.
    pub hess_lipschitz: Option<f64>,
    /// Local strong-convexity modulus (smallest Hessian eigenvalue at a
    /// reference point).
    pub strong_convexity: Option<f64>,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("grad_lipschitz", self.grad_lipschitz), ("hess_lipschitz", self.hess_lipschitz), ("strong_convexity", self.strong_convexity)]
        {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidOracle(format!("{name} must be finite and >= 0, got {v}")));
                }
            }
        }
        if let (Some(l), Some(m)) = (self.grad_lipschitz, self.strong_convexity) {
            if m > l {
                return Err(Error::InvalidOracle(format!("strong convexity {m} exceeds gradient Lipschitz {l}")));
            }
        }
        Ok(())
    }
}

/// Smooth convex part `f` of a composite objective.
///
/// Implementations must be pure functions of `x`: no caching, no interior
/// mutability. That keeps runs deterministic and lets one oracle be shared by
/// concurrent solver runs.
pub trait SmoothOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Dense symmetric Hessian.
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Hessian-vector product. The default densifies.
    fn hess_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.hessian(x) * v
    }

    fn constants(&self) -> SmoothnessConstants {
        SmoothnessConstants::default()
    }

    fn name(&self) -> &str;
}

/// Closed convex regularizer `r`.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    /// `μ‖x‖₁`.
    L1 {
        mu: f64,
    },
    /// Indicator of the box `[lo, hi]`.
    Box {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
}

impl Regularizer {
    pub fn l1(mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidRegularizer(format!("l1 weight must be finite and >= 0, got {mu}")));
        }
        Ok(Regularizer::L1 { mu })
    }

    /// Box indicator; `lo > hi` in any coordinate is rejected (empty set).
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(Error::InvalidRegularizer(format!("box bound lo[{i}] = {} exceeds hi[{i}] = {}", lo[i], hi[i])));
        }
        Ok(Regularizer::Box { lo, hi })
    }

    /// Uniform box `[lo, hi]^d`.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(DVector::from_element(dim, lo), DVector::from_element(dim, hi))
    }

    /// `r(x)`; `+∞` outside the box for indicators.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { mu } => mu * x.lp_norm(1),
            Regularizer::Box { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi.iter())).all(|(v, (l, h))| *l <= *v && *v <= *h);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `r(z) − r(x)` summed coordinate by coordinate, so that the difference
    /// keeps relative accuracy when `z` is close to `x`.
    pub fn difference(&self, z: &DVector<f64>, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::L1 { mu } => mu * z.iter().zip(x.iter()).map(|(a, b)| a.abs() - b.abs()).sum::<f64>(),
            _ => self.value(z) - self.value(x),
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, Regularizer::Box { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Regularizer::Zero => "zero",
            Regularizer::L1 { .. } => "l1",
            Regularizer::Box { .. } => "box",
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Regularizer::Box { lo, .. } => Some(lo.len()),
            _ => None,
        }
    }
}

/// Result of [`estimate_grad_lipschitz`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// Set when the Hessian at the start point was numerically zero and the
    /// floor was returned instead.
    pub degenerate: bool,
}

/// `min f(x) + r(x)` with a fixed composite-gradient scale `ℓ̂`.
#[derive(Clone)]
pub struct CompositeProblem {
    pub smooth: Arc<dyn SmoothOracle>,
    pub reg: Regularizer,
    lipschitz: f64,
}

impl fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("smooth", &self.smooth.name())
            .field("dim", &self.smooth.dim())
            .field("reg", &self.reg)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl CompositeProblem {
    pub fn new(smooth: Arc<dyn SmoothOracle>, reg: Regularizer, lipschitz: f64) -> Result<Self> {
        if let Some(d) = reg.dim() {
            if d != smooth.dim() {
                return Err(Error::DimensionMismatch { expected: smooth.dim(), got: d });
            }
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidOracle(format!("Lipschitz estimate must be positive, got {lipschitz}")));
        }
        Ok(Self { smooth, reg, lipschitz })
    }

    /// Builds the problem with `ℓ̂` estimated once at `x0`.
    pub fn with_estimated_lipschitz(smooth: Arc<dyn SmoothOracle>, reg: Regularizer, x0: &DVector<f64>) -> Result<Self> {
        let est = estimate_grad_lipschitz(smooth.as_ref(), x0)?;
        Self::new(smooth, reg, est.value)
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }
}

/// `F(x) = f(x) + r(x)`. Infeasible points of an indicator give `+∞`; a
/// non-finite coordinate of `x` or a non-finite `f(x)` is an error.
pub fn eval_objective(problem: &CompositeProblem, x: &DVector<f64>) -> Result<f64> {
    problem.check_dim(x)?;
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { value: x[i], coordinate: Some(i) });
    }
    let f = problem.smooth.value(x);
    if !f.is_finite() {
        return Err(Error::NonFiniteValue { value: f, coordinate: None });
    }
    Ok(f + problem.reg.value(x))
}

/// Largest eigenvalue of `∇²f(x0)` by power iteration, times a 1.1 safety factor.
pub fn estimate_grad_lipschitz(smooth: &dyn SmoothOracle, x0: &DVector<f64>) -> Result<LipschitzEstimate> {
    if x0.len() != smooth.dim() {
        return Err(Error::DimensionMismatch { expected: smooth.dim(), got: x0.len() });
    }
    let h = smooth.hessian(x0);
    let est = linalg::largest_eigenvalue(|v| &h * v, h.nrows(), LIPSCHITZ_REL_TOL, LIPSCHITZ_MAX_ITER);
    let value = est.value * LIPSCHITZ_SAFETY;
    if !(value > LIPSCHITZ_FLOOR) || !value.is_finite() {
        warn!("Hessian at the start point is numerically zero; using Lipschitz floor {LIPSCHITZ_FLOOR:e}");
        return Ok(LipschitzEstimate { value: LIPSCHITZ_FLOOR, degenerate: true });
    }
    Ok(LipschitzEstimate { value, degenerate: false })
}

/// Relative error of the analytic gradient against central differences with
/// step `1e-6·(1+‖x‖)`.
pub fn gradient_fd_error(smooth: &dyn SmoothOracle, x: &DVector<f64>) -> f64 {
    let h = 1e-6 * (1.0 + x.norm());
    let g = smooth.gradient(x);
    let mut xp = x.clone();
    let fd = DVector::from_fn(x.len(), |i, _| {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = smooth.value(&xp);
        xp[i] = orig - h;
        let fm = smooth.value(&xp);
        xp[i] = orig;
        (fp - fm) / (2.0 * h)
    });
    (fd - &g).norm() / g.norm().max(1e-8)
}

/// Relative error of the Hessian-vector product against central differences
/// of the gradient.
pub fn hess_vec_fd_error(smooth: &dyn SmoothOracle, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let h = 1e-6 * (1.0 + x.norm()) / v.norm().max(1e-300);
    let hv = smooth.hess_vec(x, v);
    let fd = (smooth.gradient(&(x + v * h)) - smooth.gradient(&(x - v * h))) / (2.0 * h);
    (fd - &hv).norm() / hv.norm().max(1e-8)
}

/// Smallest value of `f(y) - f(x) - (y-x)ᵀ∇f(x)` over the given pairs.
/// Nonnegative (up to rounding) for convex `f`.
pub fn convexity_gap(smooth: &dyn SmoothOracle, pairs: &[(DVector<f64>, DVector<f64>)]) -> f64 {
    pairs.iter().map(|(x, y)| smooth.value(y) - smooth.value(x) - (y - x).dot(&smooth.gradient(x))).fold(f64::INFINITY, f64::min)
}
