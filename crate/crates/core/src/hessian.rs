//! Curvature models `H_t`: damped Cholesky factors of the exact Hessian
//! refreshed every `n` iterations, and a cautious limited-memory BFGS model.

use std::collections::VecDeque;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::CompositeProblem;

/// Curvature pairs with `sᵀy ≤ CURVATURE_EPS·‖s‖²` are skipped.
pub const CURVATURE_EPS: f64 = 1e-8;
/// Rayleigh-quotient floor every model must satisfy.
pub const RAYLEIGH_FLOOR: f64 = 1e-12;
/// Tolerance of the power iteration giving the model's largest eigenvalue.
pub const MODEL_POWER_TOL: f64 = 1e-3;
const MODEL_POWER_MAX_ITER: usize = 500;
/// Default L-BFGS memory.
pub const DEFAULT_MEMORY: usize = 50;

/// A symmetric linear operator.
pub trait Curvature {
    fn dim(&self) -> usize;
    fn matvec(&self, v: &DVector<f64>) -> DVector<f64>;

    fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            m.set_column(j, &self.matvec(&e));
        }
        m
    }
}

/// Plain dense symmetric matrix as a curvature operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCurvature(pub DMatrix<f64>);

impl Curvature for DenseCurvature {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }
}

/// When the curvature model is rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefreshSchedule {
    /// Rebuild when `t mod n == 0`.
    Every(usize),
    /// Build once at `t = 0` and keep it (chord method).
    Never,
}

impl RefreshSchedule {
    pub fn every(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("refresh period must be >= 1".into()));
        }
        Ok(RefreshSchedule::Every(n))
    }

    pub fn period(self) -> Option<usize> {
        match self {
            RefreshSchedule::Every(n) => Some(n),
            RefreshSchedule::Never => None,
        }
    }

    /// Iteration `t' = n⌊t/n⌋` at which the model in use at `t` was built.
    pub fn anchor(self, t: usize) -> usize {
        match self {
            RefreshSchedule::Every(n) => n * (t / n),
            RefreshSchedule::Never => 0,
        }
    }
}

pub fn needs_refresh(t: usize, schedule: RefreshSchedule) -> bool {
    match schedule {
        RefreshSchedule::Every(n) => t.is_multiple_of(n),
        RefreshSchedule::Never => t == 0,
    }
}

/// `H + λI = RRᵀ` with `R` lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub factor: DMatrix<f64>,
    pub damping: f64,
}

fn cholesky_lower(a: &DMatrix<f64>, shift: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)] + shift;
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Cholesky with damping fallback: `λ = 0` first, then
/// `λ = max(1e-10, 1e-10·tr(H)/d)` doubled until the factorization succeeds or
/// `λ` exceeds `1e6·(1 + ‖H‖_max)`.
pub fn factorize(h: &DMatrix<f64>) -> Result<Factorization> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: h.ncols() });
    }
    if let Some(factor) = cholesky_lower(h, 0.0) {
        return Ok(Factorization { factor, damping: 0.0 });
    }
    let d = h.nrows().max(1) as f64;
    let cap = 1e6 * (1.0 + linalg::max_abs(h));
    let mut damping = (1e-10 * h.trace() / d).max(1e-10);
    while damping <= cap {
        if let Some(factor) = cholesky_lower(h, damping) {
            return Ok(Factorization { factor, damping });
        }
        damping *= 2.0;
    }
    Err(Error::DampingCapExceeded { damping, cap })
}

/// Factored exact Hessian.
#[derive(Debug, Clone)]
pub struct ExactModel {
    pub hessian: DMatrix<f64>,
    pub factor: DMatrix<f64>,
    pub damping: f64,
}

impl ExactModel {
    pub fn from_hessian(hessian: DMatrix<f64>) -> Result<Self> {
        let Factorization { factor, damping } = factorize(&hessian)?;
        Ok(Self { hessian, factor, damping })
    }

    /// `‖RRᵀ − (H + λI)‖_max`.
    pub fn reconstruction_error(&self) -> f64 {
        let mut target = self.hessian.clone();
        for i in 0..target.nrows() {
            target[(i, i)] += self.damping;
        }
        linalg::max_abs(&(&self.factor * self.factor.transpose() - target))
    }
}

/// Direct (not inverse) limited-memory BFGS matrix with initial matrix `τI`.
///
/// Stored in unrolled form: `B v = τv + Σ_j (b_jᵀv) b_j − (a_jᵀv) a_j` with
/// `a_j = B_j s_j / √(s_jᵀB_j s_j)` and `b_j = y_j / √(y_jᵀs_j)`, oldest pair first.
#[derive(Debug, Clone)]
pub struct LbfgsModel {
    pairs: VecDeque<(DVector<f64>, DVector<f64>)>,
    memory: usize,
    tau: f64,
    skipped: usize,
    dim: usize,
    a: Vec<DVector<f64>>,
    b: Vec<DVector<f64>>,
}

impl LbfgsModel {
    pub fn new(dim: usize, memory: usize, initial_tau: f64) -> Result<Self> {
        if memory == 0 {
            return Err(Error::InvalidConfig("L-BFGS memory must be >= 1".into()));
        }
        if !(initial_tau > 0.0) || !initial_tau.is_finite() {
            return Err(Error::InvalidConfig(format!("L-BFGS scaling must be positive, got {initial_tau}")));
        }
        Ok(Self { pairs: VecDeque::new(), memory, tau: initial_tau, skipped: 0, dim, a: Vec::new(), b: Vec::new() })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&DVector<f64>, &DVector<f64>)> {
        self.pairs.iter().map(|(s, y)| (s, y))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Cautious update: the pair is stored only if `sᵀy > ε‖s‖²`. The scaling
    /// follows the newest pair as `τ = yᵀy / sᵀy`.
    pub fn update(&self, s: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        if s.len() != self.dim || y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: s.len().max(y.len()) });
        }
        let mut next = self.clone();
        let sy = s.dot(y);
        if !(sy > CURVATURE_EPS * s.norm_squared()) || !sy.is_finite() {
            next.skipped += 1;
            return Ok(next);
        }
        if next.pairs.len() == next.memory {
            next.pairs.pop_front();
        }
        next.pairs.push_back((s.clone(), y.clone()));
        next.tau = y.norm_squared() / sy;
        next.rebuild();
        Ok(next)
    }

    fn rebuild(&mut self) {
        self.a.clear();
        self.b.clear();
        for (s, y) in &self.pairs {
            let bs = self.apply(s);
            let sbs = s.dot(&bs);
            let sy = s.dot(y);
            self.a.push(bs / sbs.sqrt());
            self.b.push(y / sy.sqrt());
        }
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v * self.tau;
        for (a, b) in self.a.iter().zip(&self.b) {
            out.axpy(b.dot(v), b, 1.0);
            out.axpy(-a.dot(v), a, 1.0);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Exact(ExactModel),
    Lbfgs(LbfgsModel),
}

/// Curvature model `H_t` built at iteration `refresh_iteration`.
/// Immutable once built; updates produce a new value.
#[derive(Debug, Clone)]
pub struct HessianModel {
    pub kind: ModelKind,
    pub refresh_iteration: usize,
    largest: OnceLock<f64>,
}

impl HessianModel {
    pub fn exact(model: ExactModel, refresh_iteration: usize) -> Self {
        Self { kind: ModelKind::Exact(model), refresh_iteration, largest: OnceLock::new() }
    }

    pub fn lbfgs(model: LbfgsModel, refresh_iteration: usize) -> Self {
        Self { kind: ModelKind::Lbfgs(model), refresh_iteration, largest: OnceLock::new() }
    }

    pub fn mode(&self) -> &'static str {
        match self.kind {
            ModelKind::Exact(_) => "exact",
            ModelKind::Lbfgs(_) => "lbfgs",
        }
    }

    pub fn as_exact(&self) -> Option<&ExactModel> {
        match &self.kind {
            ModelKind::Exact(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_lbfgs(&self) -> Option<&LbfgsModel> {
        match &self.kind {
            ModelKind::Lbfgs(m) => Some(m),
            _ => None,
        }
    }

    /// Largest eigenvalue by power iteration (cached).
    pub fn largest_eigenvalue(&self) -> f64 {
        *self.largest.get_or_init(|| linalg::largest_eigenvalue(|v| self.matvec(v), self.dim(), MODEL_POWER_TOL, MODEL_POWER_MAX_ITER).value)
    }

    /// Smallest eigenvalue of the densified model; small dimensions only.
    pub fn smallest_eigenvalue(&self) -> f64 {
        let dense = self.dense();
        SymmetricEigen::new(dense).eigenvalues.min()
    }

    /// Errors unless the model is usable as a strictly convex quadratic.
    pub fn ensure_positive_definite(&self) -> Result<()> {
        match &self.kind {
            ModelKind::Exact(m) => {
                if m.factor.diagonal().iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::NotPositiveDefinite("Cholesky factor has a non-positive pivot".into()));
                }
            }
            ModelKind::Lbfgs(m) => {
                if !(m.tau > 0.0) {
                    return Err(Error::NotPositiveDefinite(format!("L-BFGS scaling {} is not positive", m.tau)));
                }
            }
        }
        let top = self.largest_eigenvalue();
        if !(top > 0.0) || !top.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("largest eigenvalue estimate {top}")));
        }
        Ok(())
    }
}

impl Curvature for HessianModel {
    fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Exact(m) => m.hessian.nrows(),
            ModelKind::Lbfgs(m) => m.dim,
        }
    }

    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ModelKind::Exact(m) => {
                let mut out = &m.hessian * v;
                if m.damping > 0.0 {
                    out.axpy(m.damping, v, 1.0);
                }
                out
            }
            ModelKind::Lbfgs(m) => m.apply(v),
        }
    }
}

/// Evaluates `∇²f(x_t)` and factorizes it.
pub fn refresh_exact(problem: &CompositeProblem, x: &DVector<f64>, t: usize) -> Result<HessianModel> {
    problem.check_dim(x)?;
    let h = problem.smooth.hessian(x);
    Ok(HessianModel::exact(ExactModel::from_hessian(h)?, t))
}

pub fn lbfgs_update(state: &HessianModel, s: &DVector<f64>, y: &DVector<f64>) -> Result<HessianModel> {
    match &state.kind {
        ModelKind::Lbfgs(m) => Ok(HessianModel::lbfgs(m.update(s, y)?, state.refresh_iteration)),
        ModelKind::Exact(_) => Err(Error::InvalidConfig("lbfgs_update called on an exact model".into())),
    }
}

pub fn lbfgs_matvec(state: &HessianModel, v: &DVector<f64>) -> Result<DVector<f64>> {
    match &state.kind {
        ModelKind::Lbfgs(m) => Ok(m.apply(v)),
        ModelKind::Exact(_) => Err(Error::InvalidConfig("lbfgs_matvec called on an exact model".into())),
    }
}

/// `‖H_t − ∇²f(x_t)‖₂` by power iteration on the difference.
pub fn hessian_error(problem: &CompositeProblem, x: &DVector<f64>, model: &HessianModel) -> f64 {
    let h = problem.smooth.hessian(x);
    linalg::spectral_norm(|v| model.matvec(v) - &h * v, h.nrows(), 1e-8, 5000).value
}
