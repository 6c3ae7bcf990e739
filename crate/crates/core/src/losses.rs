//! Smooth oracles: averaged logistic and Poisson losses over a sparse design
//! matrix, and dense quadratics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{SmoothOracle, SmoothnessConstants};

/// Poisson margins are clamped here before exponentiation.
pub const POISSON_MARGIN_CLAMP: f64 = 700.0;

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^{-m})` without overflow.
#[inline]
fn log1p_exp_neg(m: f64) -> f64 {
    (-m).max(0.0) + (-m.abs()).exp().ln_1p()
}

fn row_dot(row: &[(usize, f64)], x: &DVector<f64>) -> f64 {
    row.iter().map(|&(j, w)| w * x[j]).sum()
}

fn add_outer(h: &mut DMatrix<f64>, row: &[(usize, f64)], weight: f64) {
    for &(i, wi) in row {
        let c = weight * wi;
        for &(j, wj) in row {
            h[(i, j)] += c * wj;
        }
    }
}

/// `(1/n) Σ log(1 + exp(−y_i w_iᵀx))` with labels in `{−1, +1}`.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    data: Dataset,
}

impl LogisticLoss {
    pub fn new(data: Dataset) -> Result<Self> {
        if data.samples() == 0 {
            return Err(Error::InvalidOracle("logistic loss needs at least one sample".into()));
        }
        if let Some(i) = data.labels().iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidOracle(format!("logistic label {} at sample {} is not ±1", data.labels()[i], i + 1)));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Per-sample curvature weights `σ(m_i)(1 − σ(m_i))`.
    fn weights(&self, x: &DVector<f64>) -> Vec<f64> {
        self.data
            .rows()
            .iter()
            .zip(self.data.labels())
            .map(|(row, y)| {
                let s = sigmoid(y * row_dot(row, x));
                s * (1.0 - s)
            })
            .collect()
    }
}

impl SmoothOracle for LogisticLoss {
    fn dim(&self) -> usize {
        self.data.features()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let n = self.data.samples() as f64;
        self.data.rows().iter().zip(self.data.labels()).map(|(row, y)| log1p_exp_neg(y * row_dot(row, x))).sum::<f64>() / n
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.data.samples() as f64;
        let mut g = DVector::zeros(self.dim());
        for (row, y) in self.data.rows().iter().zip(self.data.labels()) {
            let c = -y * sigmoid(-y * row_dot(row, x)) / n;
            for &(j, w) in row {
                g[j] += c * w;
            }
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.data.samples() as f64;
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for (row, w) in self.data.rows().iter().zip(self.weights(x)) {
            add_outer(&mut h, row, w / n);
        }
        h
    }

    fn hess_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.data.samples() as f64;
        let mut out = DVector::zeros(self.dim());
        for (row, w) in self.data.rows().iter().zip(self.weights(x)) {
            let c = w * row_dot(row, v) / n;
            for &(j, wj) in row {
                out[j] += c * wj;
            }
        }
        out
    }

    fn name(&self) -> &str {
        "logistic"
    }
}

/// `(1/n) Σ (exp(w_iᵀx) − y_i w_iᵀx)` with nonnegative integer counts `y_i`.
#[derive(Debug, Clone)]
pub struct PoissonLoss {
    data: Dataset,
}

impl PoissonLoss {
    pub fn new(data: Dataset) -> Result<Self> {
        if data.samples() == 0 {
            return Err(Error::InvalidOracle("Poisson loss needs at least one sample".into()));
        }
        if let Some(i) = data.labels().iter().position(|&y| !(y >= 0.0) || y.fract() != 0.0) {
            return Err(Error::InvalidOracle(format!("Poisson label {} at sample {} is not a nonnegative integer", data.labels()[i], i + 1)));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// True when some margin at `x` exceeds the exponent clamp.
    pub fn saturated(&self, x: &DVector<f64>) -> bool {
        self.data.rows().iter().any(|row| row_dot(row, x) > POISSON_MARGIN_CLAMP)
    }
}

#[inline]
fn clamped_exp(z: f64) -> f64 {
    z.min(POISSON_MARGIN_CLAMP).exp()
}

impl SmoothOracle for PoissonLoss {
    fn dim(&self) -> usize {
        self.data.features()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let n = self.data.samples() as f64;
        self.data
            .rows()
            .iter()
            .zip(self.data.labels())
            .map(|(row, y)| {
                let z = row_dot(row, x);
                clamped_exp(z) - y * z
            })
            .sum::<f64>()
            / n
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.data.samples() as f64;
        let mut g = DVector::zeros(self.dim());
        for (row, y) in self.data.rows().iter().zip(self.data.labels()) {
            let c = (clamped_exp(row_dot(row, x)) - y) / n;
            for &(j, w) in row {
                g[j] += c * w;
            }
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.data.samples() as f64;
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for row in self.data.rows() {
            add_outer(&mut h, row, clamped_exp(row_dot(row, x)) / n);
        }
        h
    }

    fn name(&self) -> &str {
        "poisson"
    }
}

/// `½xᵀQx − bᵀx`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    q: DMatrix<f64>,
    b: DVector<f64>,
    constants: SmoothnessConstants,
}

impl QuadraticLoss {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: b.len(), got: q.nrows() });
        }
        let asym = linalg::asymmetry(&q);
        if asym > 1e-12 * (1.0 + linalg::max_abs(&q)) {
            return Err(Error::InvalidOracle(format!("quadratic matrix is not symmetric (max asymmetry {asym:e})")));
        }
        let eig = SymmetricEigen::new(q.clone()).eigenvalues;
        let constants =
            SmoothnessConstants { grad_lipschitz: Some(eig.max().max(0.0)), hess_lipschitz: Some(0.0), strong_convexity: Some(eig.min().max(0.0)) };
        Ok(Self { q, b, constants })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }
}

impl SmoothOracle for QuadraticLoss {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) - self.b.dot(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x - &self.b
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.q.clone()
    }

    fn hess_vec(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.q * v
    }

    fn constants(&self) -> SmoothnessConstants {
        self.constants
    }

    fn name(&self) -> &str {
        "quadratic"
    }
}
