//! Small dense helpers shared by the model, analysis and oracle code.

use nalgebra::{DMatrix, DVector};

/// Outcome of a power iteration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Deterministic start vector with no zero entries and no obvious symmetry.
pub fn start_vector(dim: usize) -> DVector<f64> {
    let v = DVector::from_fn(dim, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract());
    let n = v.norm();
    v / n
}

/// Largest eigenvalue of a symmetric positive semidefinite operator via
/// Rayleigh-quotient power iteration. Stops once successive estimates agree
/// to `rel_tol`.
pub fn largest_eigenvalue<F>(apply: F, dim: usize, rel_tol: f64, max_iter: usize) -> PowerEstimate
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return PowerEstimate { value: 0.0, iterations: 0, converged: true };
    }
    let mut v = start_vector(dim);
    let mut estimate = 0.0;
    for k in 1..=max_iter {
        let w = apply(&v);
        let rayleigh = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return PowerEstimate { value: rayleigh.max(0.0), iterations: k, converged: true };
        }
        let done = k > 1 && (rayleigh - estimate).abs() <= rel_tol * rayleigh.abs();
        estimate = rayleigh;
        v = w / norm;
        if done {
            return PowerEstimate { value: estimate, iterations: k, converged: true };
        }
    }
    PowerEstimate { value: estimate, iterations: max_iter, converged: false }
}

/// Spectral norm (largest singular value) of a symmetric, possibly indefinite
/// operator. Uses `‖Av‖` on the normalized iterate, which is monotone and
/// insensitive to ± eigenvalue ties.
pub fn spectral_norm<F>(apply: F, dim: usize, rel_tol: f64, max_iter: usize) -> PowerEstimate
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return PowerEstimate { value: 0.0, iterations: 0, converged: true };
    }
    let mut v = start_vector(dim);
    let mut estimate = 0.0;
    for k in 1..=max_iter {
        // two applications per step so that v follows A² and the ±λ pair
        // cannot make the iterate oscillate
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return PowerEstimate { value: 0.0, iterations: k, converged: true };
        }
        let u = apply(&(w / nw));
        let nu = u.norm();
        let value = (nw * nu).sqrt();
        let done = k > 1 && (value - estimate).abs() <= rel_tol * value;
        estimate = value;
        if nu == 0.0 {
            return PowerEstimate { value: nw, iterations: k, converged: true };
        }
        v = u / nu;
        if done {
            return PowerEstimate { value: estimate, iterations: k, converged: true };
        }
    }
    PowerEstimate { value: estimate, iterations: max_iter, converged: false }
}

/// Max-abs entry of a matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Max-abs entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
