//! Builds the problem instance and starting point described by a config.

use std::sync::Arc;

use nalgebra::DVector;
use shamanskii::data::{read_libsvm, Dataset, ParseOptions};
use shamanskii::synth::{logistic_dataset, poisson_dataset, quadratic, random_point};
use shamanskii::{CompositeProblem, LogisticLoss, PoissonLoss, QuadraticLoss, Regularizer, SmoothOracle};

use crate::config::{LossKind, ProblemSpec, RegSpec, Source, StartSpec};
use crate::error::Result;

pub struct Instance {
    pub problem: CompositeProblem,
    pub x0: DVector<f64>,
}

fn load(spec: &ProblemSpec) -> Result<Option<Dataset>> {
    Ok(match &spec.source {
        Source::File { path, features, binary_labels, scale } => {
            let mut data = read_libsvm(path, ParseOptions { features: *features, binary_labels: *binary_labels })?;
            if *scale {
                data.scale_max_abs();
            }
            Some(data)
        }
        Source::Synthetic(design) => match spec.loss {
            LossKind::Logistic => Some(logistic_dataset(design)?.0),
            LossKind::Poisson => Some(poisson_dataset(design)?.0),
            LossKind::Quadratic => None,
        },
    })
}

fn smooth(spec: &ProblemSpec) -> Result<Arc<dyn SmoothOracle>> {
    let data = load(spec)?;
    Ok(match (spec.loss, data) {
        (LossKind::Logistic, Some(d)) => Arc::new(LogisticLoss::new(d)?),
        (LossKind::Poisson, Some(d)) => Arc::new(PoissonLoss::new(d)?),
        // least squares (1/2n)‖Wx − y‖² up to a constant
        (LossKind::Quadratic, Some(d)) => {
            let w = d.to_dense();
            let n = d.samples() as f64;
            let y = DVector::from_column_slice(d.labels());
            Arc::new(QuadraticLoss::new(w.tr_mul(&w) / n, w.tr_mul(&y) / n)?)
        }
        (_, None) => {
            let Source::Synthetic(design) = &spec.source else { unreachable!("file sources always load data") };
            let (q, b) = quadratic(design.features, design.top_eigenvalue, design.condition, design.seed)?;
            Arc::new(QuadraticLoss::new(q, b)?)
        }
    })
}

pub fn build(spec: &ProblemSpec) -> Result<Instance> {
    let f = smooth(spec)?;
    let dim = f.dim();
    let reg = match spec.reg {
        RegSpec::Zero => Regularizer::Zero,
        RegSpec::L1(mu) => Regularizer::l1(mu)?,
        RegSpec::Box(lo, hi) => Regularizer::uniform_box(dim, lo, hi)?,
    };
    let x0 = match spec.start {
        StartSpec::Zeros => DVector::zeros(dim),
        // offset the stream so the start is not correlated with the data
        StartSpec::Random { radius } => random_point(dim, radius, spec.seed.wrapping_add(1)),
    };
    let problem = match spec.lipschitz {
        Some(l) => CompositeProblem::new(f, reg, l)?,
        None => CompositeProblem::with_estimated_lipschitz(f, reg, &x0)?,
    };
    Ok(Instance { problem, x0 })
}
