//! Proximal Shamanskii solvers for `min F(x) = f(x) + r(x)`.
//!
//! The smooth part `f` is supplied through [`SmoothOracle`]; `r` is one of the
//! [`Regularizer`] variants with a closed-form proximal map. The curvature model
//! is refreshed every `n` outer iterations (exact Hessian or L-BFGS) and reused
//! in between, and each step solves a proximal Newton subproblem with an
//! iterative inner solver.
//!
//! ```
//! use std::sync::Arc;
//! use nalgebra::{DMatrix, DVector};
//! use shamanskii::{solve_generic, CompositeProblem, QuadraticLoss, Regularizer, SolverConfig};
//!
//! let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
//! let f = QuadraticLoss::new(q, DVector::from_vec(vec![-1.0, 2.0])).unwrap();
//! let problem = CompositeProblem::new(Arc::new(f), Regularizer::l1(0.1).unwrap(), 4.0).unwrap();
//! let out = solve_generic(&problem, &DVector::zeros(2), &SolverConfig::default()).unwrap();
//! assert!(out.status.converged());
//! ```

// `!(x > 0.0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiments;
pub mod hessian;
pub mod linalg;
pub mod losses;
pub mod problem;
pub mod prox;
pub mod solver;
pub mod subproblem;
pub mod synth;

pub use error::{Error, Result};
pub use hessian::{HessianModel, RefreshSchedule};
pub use losses::{LogisticLoss, PoissonLoss, QuadraticLoss};
pub use problem::{eval_objective, CompositeProblem, Regularizer, SmoothOracle};
pub use prox::{composite_gradient, CompositeGradientScale};
pub use solver::{
    format_float, solve_baseline, solve_generic, solve_inexact, BaselineVariant, EtaSchedule, HessianMode, LineSearchConfig, SolveOutput,
    SolveStatus, SolverConfig, StopRuleConfig, Trace, TraceRecord,
};
pub use subproblem::InnerSolver;
