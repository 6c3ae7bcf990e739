//! Proximal maps and the composite gradients `G` and `Ĝ`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hessian::Curvature;
use crate::problem::{CompositeProblem, Regularizer};

/// Scale `ℓ` of the composite gradient; the prox step inside `G` and `Ĝ` is `1/ℓ`.
/// One value is shared by both maps for the lifetime of a solver run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeGradientScale(f64);

impl CompositeGradientScale {
    pub fn new(lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidConfig(format!("composite gradient scale must be positive, got {lipschitz}")));
        }
        Ok(Self(lipschitz))
    }

    pub fn of(problem: &CompositeProblem) -> Self {
        Self(problem.lipschitz())
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Scalar soft-threshold; `|v| == tau` maps to exactly zero.
#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// `argmin_z r(z) + ‖z − v‖²/(2·step)`.
pub fn prox_apply(reg: &Regularizer, v: &DVector<f64>, step: f64) -> DVector<f64> {
    debug_assert!(step > 0.0);
    match reg {
        Regularizer::Zero => v.clone(),
        Regularizer::L1 { mu } => {
            let tau = mu * step;
            v.map(|vi| soft_threshold(vi, tau))
        }
        Regularizer::Box { lo, hi } => DVector::from_fn(v.len(), |i, _| v[i].max(lo[i]).min(hi[i])),
    }
}

impl Regularizer {
    pub fn prox(&self, v: &DVector<f64>, step: f64) -> DVector<f64> {
        prox_apply(self, v, step)
    }
}

/// `ℓ(x − prox_{r/ℓ}(x − ∇/ℓ))` for an arbitrary gradient-like vector.
pub fn prox_gradient_map(reg: &Regularizer, x: &DVector<f64>, grad: &DVector<f64>, scale: CompositeGradientScale) -> DVector<f64> {
    let l = scale.value();
    let p = prox_apply(reg, &(x - grad / l), 1.0 / l);
    (x - p) * l
}

/// Composite gradient `G(x)`; zero exactly at minimizers of `f + r`.
pub fn composite_gradient(problem: &CompositeProblem, x: &DVector<f64>, scale: CompositeGradientScale) -> Result<DVector<f64>> {
    problem.check_dim(x)?;
    let g = problem.smooth.gradient(x);
    Ok(prox_gradient_map(&problem.reg, x, &g, scale))
}

/// Composite gradient of the quadratic model anchored at `x`:
/// `Ĝ(x', x, H) = ℓ(x' − prox_{r/ℓ}(x' − (∇f(x) + H(x'−x))/ℓ))`.
pub fn subproblem_residual(
    x_next: &DVector<f64>,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    curvature: &dyn Curvature,
    reg: &Regularizer,
    scale: CompositeGradientScale,
) -> Result<DVector<f64>> {
    if x_next.len() != x.len() || grad.len() != x.len() || curvature.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: x_next.len().max(grad.len()).max(curvature.dim()) });
    }
    let model_grad = grad + curvature.matvec(&(x_next - x));
    Ok(prox_gradient_map(reg, x_next, &model_grad, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessian::DenseCurvature;
    use crate::losses::QuadraticLoss;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    // brute-force 1-D minimization of ½(z − v)² + τ|z| on a fine grid
    fn grid_soft_threshold(vi: f64, tau: f64) -> f64 {
        let (lo, hi, n) = (-10.0, 10.0, 2_000_001);
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|k| lo + k as f64 * h)
            .map(|z| (z, 0.5 * (z - vi).powi(2) + tau * z.abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0
    }

    fn shifted_problem(lipschitz: f64) -> CompositeProblem {
        // ½(x−2)² = ½x² − 2x + const
        let q = QuadraticLoss::new(DMatrix::identity(1, 1), v(&[2.0])).unwrap();
        CompositeProblem::new(Arc::new(q), Regularizer::l1(1.0).unwrap(), lipschitz).unwrap()
    }

    #[test]
    fn l1_prox_matches_grid_oracle() {
        let input = v(&[3.0, -0.5, 1.0]);
        let expected: Vec<f64> = input.iter().map(|&vi| grid_soft_threshold(vi, 1.0)).collect();
        assert!(expected.iter().zip([2.0, 0.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-5));
        let out = prox_apply(&Regularizer::l1(1.0).unwrap(), &input, 1.0);
        assert_eq!(out, v(&[2.0, 0.0, 0.0]));
    }

    #[test]
    fn zero_prox_is_identity() {
        let input = v(&[1.5, -3.0, 1e300]);
        assert_eq!(prox_apply(&Regularizer::Zero, &input, 0.7), input);
    }

    #[test]
    fn box_prox_clamps() {
        let reg = Regularizer::uniform_box(3, 0.0, 1.0).unwrap();
        assert_eq!(prox_apply(&reg, &v(&[-2.0, 0.5, 7.0]), 3.0), v(&[0.0, 0.5, 1.0]));
    }

    #[test]
    fn threshold_tie_maps_to_zero() {
        assert_eq!(soft_threshold(0.25, 0.25), 0.0);
        assert_eq!(soft_threshold(-0.25, 0.25), 0.0);
    }

    #[test]
    fn composite_gradient_without_regularizer_is_gradient() {
        let q = QuadraticLoss::new(DMatrix::from_diagonal(&v(&[1.0, 3.0])), v(&[1.0, -1.0])).unwrap();
        let p = CompositeProblem::new(Arc::new(q), Regularizer::Zero, 3.3).unwrap();
        let x = v(&[0.4, 2.0]);
        let g = composite_gradient(&p, &x, CompositeGradientScale::of(&p)).unwrap();
        let grad = p.smooth.gradient(&x);
        assert!((g - grad).norm() < 1e-14);
    }

    #[test]
    fn composite_gradient_scalar_example() {
        let p = shifted_problem(1.0);
        let g = composite_gradient(&p, &v(&[0.0]), CompositeGradientScale::of(&p)).unwrap();
        assert_eq!(g, v(&[-1.0]));
        // the optimum x* = 1 is a fixed point
        let g = composite_gradient(&p, &v(&[1.0]), CompositeGradientScale::of(&p)).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn residual_at_anchor_equals_composite_gradient() {
        let p = shifted_problem(1.0);
        let x = v(&[0.0]);
        let grad = p.smooth.gradient(&x);
        let h = DenseCurvature(DMatrix::identity(1, 1));
        let scale = CompositeGradientScale::of(&p);
        let r = subproblem_residual(&x, &x, &grad, &h, &p.reg, scale).unwrap();
        assert_eq!(r, v(&[-1.0]));
        assert_eq!(r, composite_gradient(&p, &x, scale).unwrap());
    }

    #[test]
    fn residual_without_regularizer_is_model_gradient() {
        let h = DenseCurvature(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        let x = v(&[1.0, 1.0]);
        let xn = v(&[0.0, 3.0]);
        let grad = v(&[0.3, -0.2]);
        let scale = CompositeGradientScale::new(5.0).unwrap();
        let r = subproblem_residual(&xn, &x, &grad, &h, &Regularizer::Zero, scale).unwrap();
        let expected = &grad + &h.0 * (&xn - &x);
        assert!((r - expected).norm() < 1e-14);
    }

    #[test]
    fn residual_vanishes_at_exact_model_minimizer() {
        // model gradient −2 + z with r = |z| → minimizer z = 1
        let h = DenseCurvature(DMatrix::identity(1, 1));
        let r =
            subproblem_residual(&v(&[1.0]), &v(&[0.0]), &v(&[-2.0]), &h, &Regularizer::l1(1.0).unwrap(), CompositeGradientScale::new(1.0).unwrap())
                .unwrap();
        assert!(r.norm() <= 1e-10);
    }
}
