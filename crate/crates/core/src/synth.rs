//! Seed-pinned synthetic problems with controlled spectra.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::LogisticLoss;
use crate::problem::{CompositeProblem, Regularizer, SmoothOracle};

/// Shape of a synthetic regression design `W = UΣVᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    pub samples: usize,
    pub features: usize,
    /// Ratio of largest to smallest eigenvalue of `WᵀW`.
    pub condition: f64,
    /// Largest eigenvalue of `WᵀW / n`.
    pub top_eigenvalue: f64,
    /// Norm of the planted coefficient vector.
    pub signal: f64,
    pub seed: u64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { samples: 200, features: 50, condition: 50.0, top_eigenvalue: 1.0, signal: 1.0, seed: 0 }
    }
}

impl DesignSpec {
    /// 200×50 logistic design with condition number 10 used by the test suite
    /// and as the command-line default.
    pub fn logistic_fixture() -> Self {
        Self { samples: 200, features: 50, condition: 10.0, top_eigenvalue: 4.0, signal: 0.5, seed: 7 }
    }

    fn validate(&self) -> Result<()> {
        if self.features == 0 || self.samples < self.features {
            return Err(Error::InvalidConfig(format!("synthetic design needs samples >= features >= 1, got {}x{}", self.samples, self.features)));
        }
        if !(self.condition >= 1.0) || !(self.top_eigenvalue > 0.0) || !(self.signal >= 0.0) {
            return Err(Error::InvalidConfig("synthetic design needs condition >= 1, top eigenvalue > 0, signal >= 0".into()));
        }
        Ok(())
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, rows, cols).qr().q()
}

/// Eigenvalues spaced geometrically from `top` down to `top / condition`.
pub fn log_spectrum(dim: usize, top: f64, condition: f64) -> DVector<f64> {
    if dim == 1 {
        return DVector::from_element(1, top);
    }
    DVector::from_fn(dim, |k, _| top * condition.powf(-(k as f64) / (dim as f64 - 1.0)))
}

/// Dense design with the requested spectrum, and a planted coefficient vector.
pub fn design(spec: &DesignSpec, rng: &mut ChaCha8Rng) -> Result<(DMatrix<f64>, DVector<f64>)> {
    spec.validate()?;
    let (n, d) = (spec.samples, spec.features);
    let u = orthonormal_columns(rng, n, d);
    let v = orthonormal_columns(rng, d, d);
    let eig = log_spectrum(d, spec.top_eigenvalue, spec.condition);
    let sigma = DMatrix::from_diagonal(&eig.map(|e| (e * n as f64).sqrt()));
    let w = u * sigma * v.transpose();
    let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x_true = &dir * (spec.signal / dir.norm());
    Ok((w, x_true))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Binary labels drawn from the logistic model at the planted coefficients.
pub fn logistic_dataset(spec: &DesignSpec) -> Result<(Dataset, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, x_true) = design(spec, &mut rng)?;
    let margins = &w * &x_true;
    let labels = margins.iter().map(|&m| if rng.random_bool(sigmoid(m)) { 1.0 } else { -1.0 }).collect();
    Ok((Dataset::from_dense(&w, labels)?, x_true))
}

/// Count labels drawn from the Poisson model at the planted coefficients.
pub fn poisson_dataset(spec: &DesignSpec) -> Result<(Dataset, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, x_true) = design(spec, &mut rng)?;
    let margins = &w * &x_true;
    let labels = margins
        .iter()
        .map(|&m| {
            let rate = m.min(20.0).exp();
            Poisson::new(rate).map(|p| p.sample(&mut rng)).map_err(|e| Error::InvalidConfig(e.to_string()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((Dataset::from_dense(&w, labels)?, x_true))
}

/// Averaged logistic loss on a synthetic design plus `mu·‖x‖₁` (omitted when
/// `mu = 0`), with `ℓ̂` estimated at the origin.
pub fn logistic_problem(spec: &DesignSpec, mu: f64) -> Result<CompositeProblem> {
    let (data, _) = logistic_dataset(spec)?;
    let f: Arc<dyn SmoothOracle> = Arc::new(LogisticLoss::new(data)?);
    let reg = if mu > 0.0 { Regularizer::l1(mu)? } else { Regularizer::Zero };
    CompositeProblem::with_estimated_lipschitz(f, reg, &DVector::zeros(spec.features))
}

/// `Q = V diag(spectrum) Vᵀ` with a random orthogonal `V`, and a Gaussian `b`.
pub fn quadratic(dim: usize, top: f64, condition: f64, seed: u64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if dim == 0 || !(condition >= 1.0) || !(top > 0.0) {
        return Err(Error::InvalidConfig("quadratic fixture needs dim >= 1, condition >= 1, top > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = orthonormal_columns(&mut rng, dim, dim);
    let q = &v * DMatrix::from_diagonal(&log_spectrum(dim, top, condition)) * v.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let b = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
    Ok((q, b))
}

/// Point drawn uniformly in direction with norm uniform in `[0, radius]`.
pub fn random_point(dim: usize, radius: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm();
    if norm == 0.0 {
        return dir;
    }
    dir * (radius * rng.random::<f64>() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    #[test]
    fn random_point_within_radius_and_seeded() {
        let a = random_point(10, 3.0, 1);
        assert!(a.norm() <= 3.0);
        assert_eq!(a, random_point(10, 3.0, 1));
        assert_ne!(a, random_point(10, 3.0, 2));
    }

    #[test]
    fn design_has_requested_spectrum() {
        let spec = DesignSpec { samples: 60, features: 8, condition: 30.0, top_eigenvalue: 2.0, signal: 1.5, seed: 9 };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (w, x) = design(&spec, &mut rng).unwrap();
        let eig = SymmetricEigen::new(w.transpose() * &w / 60.0).eigenvalues;
        assert!((eig.max() - 2.0).abs() < 1e-10);
        assert!((eig.max() / eig.min() - 30.0).abs() < 1e-8);
        assert!((x.norm() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let spec = DesignSpec { samples: 30, features: 4, seed: 5, ..Default::default() };
        assert_eq!(logistic_dataset(&spec).unwrap().0, logistic_dataset(&spec).unwrap().0);
        assert_eq!(poisson_dataset(&spec).unwrap().0, poisson_dataset(&spec).unwrap().0);
        let other = DesignSpec { seed: 6, ..spec };
        assert_ne!(logistic_dataset(&spec).unwrap().0, logistic_dataset(&other).unwrap().0);
    }

    #[test]
    fn labels_have_the_right_type() {
        let spec = DesignSpec { samples: 40, features: 3, seed: 1, ..Default::default() };
        let (d, _) = logistic_dataset(&spec).unwrap();
        assert!(d.labels().iter().all(|&y| y == 1.0 || y == -1.0));
        let (d, _) = poisson_dataset(&spec).unwrap();
        assert!(d.labels().iter().all(|&y| y >= 0.0 && y.fract() == 0.0));
    }

    #[test]
    fn quadratic_spectrum() {
        let (q, _) = quadratic(6, 4.0, 100.0, 3).unwrap();
        let eig = SymmetricEigen::new(q).eigenvalues;
        assert!((eig.max() - 4.0).abs() < 1e-10);
        assert!((eig.min() - 0.04).abs() < 1e-10);
    }
}
