//! Empirical order of convergence and runtime audits over solver traces.

use std::fmt::Write as _;

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hessian::{hessian_error, HessianModel};
use crate::problem::CompositeProblem;
use crate::prox::{composite_gradient, CompositeGradientScale};
use crate::solver::{format_float as ff, EtaSchedule, SolveStatus, StopRuleConfig, Trace};

/// Errors outside `(lo, hi)` are ignored when estimating orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ValidityWindow {
    fn default() -> Self {
        Self { lo: 1e-14, hi: 1.0 }
    }
}

impl ValidityWindow {
    pub fn contains(&self, e: f64) -> bool {
        e > self.lo && e < self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub errors: Vec<f64>,
    /// `p_t = log e_{t+1} / log e_t`, `None` where either error is outside the window.
    pub exponents: Vec<Option<f64>>,
    /// First iteration of the cycle used for `p̂`.
    pub cycle_start: usize,
    /// `Π p_t` over that cycle; compare with `n + 1`.
    pub cycle_product: f64,
    /// Geometric mean of the cycle's exponents.
    pub order: f64,
    pub period: usize,
}

/// `(n+1)^{1/n}`, or `(n(γ−1)+1)^{1/n}` for `γ ∈ (1, 2)` with a constant forcing term.
pub fn predicted_order(n: usize, gamma: Option<f64>) -> f64 {
    let nf = n as f64;
    match gamma {
        Some(g) if g > 1.0 && g < 2.0 => (nf * (g - 1.0) + 1.0).powf(1.0 / nf),
        _ => (nf + 1.0).powf(1.0 / nf),
    }
}

pub fn errors_to(iterates: &[DVector<f64>], x_ref: &DVector<f64>) -> Vec<f64> {
    iterates.iter().map(|x| (x - x_ref).norm()).collect()
}

pub fn estimate_order(iterates: &[DVector<f64>], x_ref: &DVector<f64>, n: usize) -> Result<OrderEstimate> {
    estimate_order_from_errors(&errors_to(iterates, x_ref), n, ValidityWindow::default())
}

/// Order over the last refresh-aligned cycle `[kn, kn+n)` whose exponents are all valid.
pub fn estimate_order_from_errors(errors: &[f64], n: usize, window: ValidityWindow) -> Result<OrderEstimate> {
    if n == 0 {
        return Err(Error::InvalidConfig("refresh period must be >= 1".into()));
    }
    let exponents: Vec<Option<f64>> =
        errors.windows(2).map(|w| (window.contains(w[0]) && window.contains(w[1])).then(|| w[1].ln() / w[0].ln())).collect();
    let cycles = exponents.len() / n;
    let start = (0..cycles).rev().map(|k| k * n).find(|&s| exponents[s..s + n].iter().all(Option::is_some)).ok_or_else(|| {
        let valid = errors.iter().filter(|&&e| window.contains(e)).count();
        Error::InsufficientData(format!(
            "no complete refresh cycle of length {n} with errors in ({:e}, {:e}); {valid} valid iterates",
            window.lo, window.hi
        ))
    })?;
    let log_sum: f64 = exponents[start..start + n].iter().map(|p| p.expect("checked").ln()).sum();
    Ok(OrderEstimate {
        errors: errors.to_vec(),
        exponents,
        cycle_start: start,
        cycle_product: log_sum.exp(),
        order: (log_sum / n as f64).exp(),
        period: n,
    })
}

/// `e_{t+1}/e_t` over consecutive errors that both lie in the window.
pub fn contraction_ratios(errors: &[f64], window: ValidityWindow) -> Vec<f64> {
    errors.windows(2).filter(|w| window.contains(w[0]) && window.contains(w[1])).map(|w| w[1] / w[0]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentAudit {
    pub checked: usize,
    pub violations: usize,
    /// Largest `F_{t+1} − F_t − (α/4)λ_t` seen; negative means every step had slack.
    pub worst_margin: f64,
    pub nonnegative_lambda: usize,
    pub curvature_checked: usize,
    /// Steps where `λ_t > −m̂‖Δx_t‖²`.
    pub curvature_violations: usize,
}

/// Checks `F(x_{t+1}) − F(x_t) ≤ (α/4)λ_t + 1e−10·(1+|F(x_t)|)` for each step.
pub fn audit_descent(trace: &Trace, m_hat: Option<f64>) -> DescentAudit {
    let mut audit = DescentAudit {
        checked: 0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        nonnegative_lambda: 0,
        curvature_checked: 0,
        curvature_violations: 0,
    };
    for w in trace.records.windows(2) {
        let (r, next) = (&w[0], &w[1]);
        if !r.has_step() {
            continue;
        }
        audit.checked += 1;
        let margin = next.f - r.f - 0.25 * r.alpha * r.lambda;
        audit.worst_margin = audit.worst_margin.max(margin);
        if margin > 1e-10 * (1.0 + r.f.abs()) {
            audit.violations += 1;
        }
        if !(r.lambda < 0.0) {
            audit.nonnegative_lambda += 1;
        }
        if let Some(m) = m_hat {
            audit.curvature_checked += 1;
            if r.lambda > -m * r.norm_dx * r.norm_dx + 1e-10 * (1.0 + r.f.abs()) {
                audit.curvature_violations += 1;
            }
        }
    }
    audit
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichAudit {
    pub checked: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Smallest `‖G‖ − (m/2)e` over the samples.
    pub lower_slack: f64,
    /// Smallest `2ℓe − ‖G‖` over the samples.
    pub upper_slack: f64,
}

/// `(m/2)‖x − x_ref‖ ≤ ‖G(x)‖ ≤ 2ℓ‖x − x_ref‖` at every sample.
pub fn audit_sandwich(problem: &CompositeProblem, x_ref: &DVector<f64>, samples: &[DVector<f64>], m: f64) -> Result<SandwichAudit> {
    let scale = CompositeGradientScale::of(problem);
    let ell = scale.value();
    let mut audit = SandwichAudit { checked: 0, lower_violations: 0, upper_violations: 0, lower_slack: f64::INFINITY, upper_slack: f64::INFINITY };
    for x in samples {
        let e = (x - x_ref).norm();
        let g = composite_gradient(problem, x, scale)?.norm();
        let lower = g - 0.5 * m * e;
        let upper = 2.0 * ell * e - g;
        audit.checked += 1;
        audit.lower_slack = audit.lower_slack.min(lower);
        audit.upper_slack = audit.upper_slack.min(upper);
        if lower < 0.0 {
            audit.lower_violations += 1;
        }
        if upper < 0.0 {
            audit.upper_violations += 1;
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingVerdict {
    Decayed,
    NotDecayed,
    ScheduleConstant,
    Indeterminate,
}

impl ForcingVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ForcingVerdict::Decayed => "decayed",
            ForcingVerdict::NotDecayed => "not_decayed",
            ForcingVerdict::ScheduleConstant => "schedule_constant",
            ForcingVerdict::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingAudit {
    pub verdict: ForcingVerdict,
    pub final_eta: f64,
    pub tail_max: f64,
}

pub const FORCING_DECAY_THRESHOLD: f64 = 1e-3;

/// Decay of the adaptive forcing term: maximum of the last three `η_t` below `1e−3`.
pub fn audit_forcing_decay(trace: &Trace, rule: &StopRuleConfig, status: SolveStatus) -> ForcingAudit {
    let etas: Vec<f64> = trace.iter().filter(|r| r.has_step()).map(|r| r.eta).collect();
    let final_eta = etas.last().copied().unwrap_or(f64::NAN);
    let tail = &etas[etas.len().saturating_sub(3)..];
    let tail_max = tail.iter().cloned().fold(f64::NAN, f64::max);
    let verdict = match rule {
        StopRuleConfig::Forcing { schedule: EtaSchedule::Adaptive, .. } => {
            if !status.converged() || tail.len() < 3 {
                ForcingVerdict::Indeterminate
            } else if tail_max <= FORCING_DECAY_THRESHOLD {
                ForcingVerdict::Decayed
            } else {
                ForcingVerdict::NotDecayed
            }
        }
        _ => ForcingVerdict::ScheduleConstant,
    };
    ForcingAudit { verdict, final_eta, tail_max }
}

/// Largest dimension at which the Hessian error probe densifies operators.
pub const HESSIAN_PROBE_MAX_DIM: usize = 500;

/// `‖H_{t'} − ∇²f(x_{t'})‖₂` at each refresh point, in model order.
pub fn audit_hessian_error(problem: &CompositeProblem, iterates: &[DVector<f64>], models: &[HessianModel]) -> Result<Vec<(usize, f64)>> {
    if problem.dim() > HESSIAN_PROBE_MAX_DIM {
        return Err(Error::Unsupported(format!("Hessian error probe skipped: dimension {} exceeds {HESSIAN_PROBE_MAX_DIM}", problem.dim())));
    }
    models
        .iter()
        .map(|m| {
            let t = m.refresh_iteration;
            let x = iterates.get(t).ok_or_else(|| Error::InvalidConfig(format!("no iterate recorded for refresh at t={t}")))?;
            Ok((t, hessian_error(problem, x, m)))
        })
        .collect()
}

/// `m̂ = λ_min(∇²f(x_ref))`, the curvature floor used by the descent audit.
pub fn curvature_floor(problem: &CompositeProblem, x_ref: &DVector<f64>) -> Result<f64> {
    if problem.dim() > HESSIAN_PROBE_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "curvature floor needs a dense Hessian; dimension {} exceeds {HESSIAN_PROBE_MAX_DIM}",
            problem.dim()
        )));
    }
    Ok(SymmetricEigen::new(problem.smooth.hessian(x_ref)).eigenvalues.min())
}

/// Combined report; absent fragments print as `na`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub descent: Option<DescentAudit>,
    pub sandwich: Option<SandwichAudit>,
    pub forcing: Option<ForcingAudit>,
    pub hessian_error: Option<Vec<(usize, f64)>>,
    pub order: Option<OrderEstimate>,
    pub predicted_order: Option<f64>,
    pub notes: Vec<String>,
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "na".to_string(), |v| v.to_string())
}

impl AuditReport {
    /// `key=value` lines in a fixed order.
    pub fn to_key_values(&self) -> String {
        let d = self.descent.as_ref();
        let s = self.sandwich.as_ref();
        let f = self.forcing.as_ref();
        let o = self.order.as_ref();
        let pairs: Vec<(&str, String)> = vec![
            ("descent_checked", opt(d.map(|d| d.checked))),
            ("descent_violations", opt(d.map(|d| d.violations))),
            ("descent_worst_margin", opt(d.map(|d| ff(d.worst_margin)))),
            ("descent_nonnegative_lambda", opt(d.map(|d| d.nonnegative_lambda))),
            ("descent_curvature_violations", opt(d.filter(|d| d.curvature_checked > 0).map(|d| d.curvature_violations))),
            ("sandwich_checked", opt(s.map(|s| s.checked))),
            ("sandwich_lower_violations", opt(s.map(|s| s.lower_violations))),
            ("sandwich_upper_violations", opt(s.map(|s| s.upper_violations))),
            ("forcing_verdict", opt(f.map(|f| f.verdict.as_str()))),
            ("forcing_final_eta", opt(f.map(|f| ff(f.final_eta)))),
            ("forcing_tail_max", opt(f.map(|f| ff(f.tail_max)))),
            ("hessian_error_points", opt(self.hessian_error.as_ref().map(|h| h.len()))),
            ("hessian_error_max", opt(self.hessian_error.as_ref().and_then(|h| h.iter().map(|p| p.1).reduce(f64::max).map(ff)))),
            ("hessian_error_last", opt(self.hessian_error.as_ref().and_then(|h| h.last().map(|p| ff(p.1))))),
            ("order_estimate", opt(o.map(|o| ff(o.order)))),
            ("order_cycle_product", opt(o.map(|o| ff(o.cycle_product)))),
            ("order_predicted", opt(self.predicted_order.map(ff))),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k}={v}").expect("writing to a String");
        }
        for n in &self.notes {
            writeln!(out, "note={n}").expect("writing to a String");
        }
        out
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(d) = &self.descent {
            writeln!(out, "descent: {} violations over {} steps (worst margin {:e})", d.violations, d.checked, d.worst_margin).unwrap();
        }
        if let Some(s) = &self.sandwich {
            writeln!(out, "sandwich: {} lower / {} upper violations over {} samples", s.lower_violations, s.upper_violations, s.checked).unwrap();
        }
        if let Some(f) = &self.forcing {
            writeln!(out, "forcing: {} (final eta {:e}, last-3 max {:e})", f.verdict.as_str(), f.final_eta, f.tail_max).unwrap();
        }
        if let Some(h) = &self.hessian_error {
            for (t, e) in h {
                writeln!(out, "hessian error at t={t}: {e:e}").unwrap();
            }
        }
        if let Some(o) = &self.order {
            writeln!(out, "order: {:.4} (cycle product {:.4}, period {})", o.order, o.cycle_product, o.period).unwrap();
        }
        for n in &self.notes {
            writeln!(out, "note: {n}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::QuadraticLoss;
    use crate::problem::Regularizer;
    use crate::solver::{solve_generic, SolverConfig, TraceRecord};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn power_sequence(e0: f64, p: f64, len: usize) -> Vec<f64> {
        let mut e = vec![e0];
        for _ in 1..len {
            let last = *e.last().unwrap();
            e.push(last.powf(p));
        }
        e
    }

    #[test]
    fn recovers_synthetic_orders() {
        for p in [1.2, 1.442, 2.0, 3.0] {
            let e = power_sequence(0.5, p, 12);
            let est = estimate_order_from_errors(&e, 1, ValidityWindow::default()).unwrap();
            assert!((est.order - p).abs() < 1e-6, "p={p}: {}", est.order);
        }
    }

    #[test]
    fn squared_sequence_from_tenth() {
        let est = estimate_order_from_errors(&power_sequence(0.1, 2.0, 6), 1, ValidityWindow::default()).unwrap();
        assert!((est.order - 2.0).abs() < 1e-6);
    }

    #[test]
    fn cycle_product_for_shamanskii_pattern() {
        // one quadratic step then linear-in-exponent steps: product n+1 over a cycle of n=3
        let mut e = vec![0.5_f64];
        let mut pattern = [2.0, 1.25, 1.2].iter().cycle();
        for _ in 0..6 {
            let last = *e.last().unwrap();
            e.push(last.powf(*pattern.next().unwrap()));
        }
        let est = estimate_order_from_errors(&e, 3, ValidityWindow { lo: 1e-300, hi: 1.0 }).unwrap();
        assert_eq!(est.cycle_start % 3, 0);
        assert!((est.cycle_product - 3.0).abs() < 1e-9);
        assert!((est.order - 3.0_f64.powf(1.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn too_few_iterates_is_an_error() {
        let err = estimate_order_from_errors(&[0.5, 1e-20], 1, ValidityWindow::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        assert!(estimate_order_from_errors(&[0.5, 0.25, 0.1], 3, ValidityWindow::default()).is_err());
    }

    #[test]
    fn predicted_orders() {
        assert!((predicted_order(1, None) - 2.0).abs() < 1e-15);
        assert!((predicted_order(2, None) - 3f64.sqrt()).abs() < 1e-15);
        assert!((predicted_order(3, None) - 4f64.cbrt()).abs() < 1e-15);
        assert!((predicted_order(2, Some(1.5)) - 2f64.sqrt()).abs() < 1e-15);
        assert!((predicted_order(2, Some(2.0)) - 3f64.sqrt()).abs() < 1e-15);
    }

    fn step(t: usize, f: f64, alpha: f64, lambda: f64) -> TraceRecord {
        let mut r = TraceRecord::terminal(t, f, 1.0, 0, 0.0);
        r.alpha = alpha;
        r.lambda = lambda;
        r.norm_dx = 1.0;
        r
    }

    #[test]
    fn fabricated_increase_is_flagged() {
        let mut trace = Trace::default();
        trace.push(step(0, 1.0, 1.0, -1.0));
        trace.push(step(1, 0.7, 1.0, -0.4));
        trace.push(TraceRecord::terminal(2, 0.9, 0.1, 0, 0.0));
        let a = audit_descent(&trace, None);
        assert_eq!(a.checked, 2);
        assert_eq!(a.violations, 1);
        assert!(a.worst_margin > 0.0);
    }

    #[test]
    fn generic_run_has_no_descent_violations() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 9.0]));
        let f = QuadraticLoss::new(q, DVector::from_vec(vec![1.0, -1.0, 2.0])).unwrap();
        let p = CompositeProblem::new(Arc::new(f), Regularizer::l1(0.5).unwrap(), 9.0).unwrap();
        let out = solve_generic(&p, &DVector::from_element(3, 4.0), &SolverConfig::default()).unwrap();
        let a = audit_descent(&out.trace, Some(1.0));
        assert_eq!(a.violations, 0);
        assert_eq!(a.nonnegative_lambda, 0);
        assert_eq!(audit_descent(&out.trace, Some(1.0)), a);
    }

    #[test]
    fn sandwich_on_smooth_quadratic() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let f = QuadraticLoss::new(q, DVector::zeros(2)).unwrap();
        let p = CompositeProblem::new(Arc::new(f), Regularizer::Zero, 4.0).unwrap();
        let x_ref = DVector::zeros(2);
        let samples: Vec<_> = (0..50).map(|k| DVector::from_vec(vec![(k as f64).cos(), (k as f64 * 0.7).sin()])).chain([x_ref.clone()]).collect();
        let a = audit_sandwich(&p, &x_ref, &samples, 1.0).unwrap();
        assert_eq!((a.lower_violations, a.upper_violations), (0, 0));
        assert_eq!(a.checked, 51);
    }

    #[test]
    fn forcing_verdicts() {
        let adaptive = StopRuleConfig::Forcing { gamma: 1.0, eta_bar: 0.1, schedule: EtaSchedule::Adaptive };
        let constant = StopRuleConfig::Forcing { gamma: 1.5, eta_bar: 0.1, schedule: EtaSchedule::Constant };
        let mut trace = Trace::default();
        for (t, eta) in [0.1, 1e-2, 1e-4].into_iter().enumerate() {
            let mut r = step(t, 1.0, 1.0, -1.0);
            r.eta = eta;
            trace.push(r);
        }
        assert_eq!(audit_forcing_decay(&trace, &adaptive, SolveStatus::Converged).verdict, ForcingVerdict::NotDecayed);
        for (t, eta) in [(3, 1e-6), (4, 1e-9)] {
            let mut r = step(t, 1.0, 1.0, -1.0);
            r.eta = eta;
            trace.push(r);
        }
        let a = audit_forcing_decay(&trace, &adaptive, SolveStatus::Converged);
        assert_eq!(a.verdict, ForcingVerdict::Decayed);
        assert_eq!(a.tail_max, 1e-4);
        assert_eq!(a.final_eta, 1e-9);
        assert_eq!(audit_forcing_decay(&trace, &constant, SolveStatus::Converged).verdict, ForcingVerdict::ScheduleConstant);
        assert_eq!(audit_forcing_decay(&trace, &adaptive, SolveStatus::MaxIterations).verdict, ForcingVerdict::Indeterminate);
    }

    #[test]
    fn exact_models_have_zero_hessian_error() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = QuadraticLoss::new(q, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let p = CompositeProblem::new(Arc::new(f), Regularizer::l1(0.1).unwrap(), 3.0).unwrap();
        let out = solve_generic(&p, &DVector::from_element(2, 3.0), &SolverConfig::default()).unwrap();
        let errs = audit_hessian_error(&p, &out.iterates, &out.models).unwrap();
        assert!(!errs.is_empty());
        assert!(errs.iter().all(|&(_, e)| e <= 1e-10));
    }

    #[test]
    fn report_schema_is_stable() {
        let empty = AuditReport::default().to_key_values();
        let full = AuditReport {
            descent: Some(DescentAudit {
                checked: 1,
                violations: 0,
                worst_margin: -1.0,
                nonnegative_lambda: 0,
                curvature_checked: 0,
                curvature_violations: 0,
            }),
            predicted_order: Some(2.0),
            ..Default::default()
        }
        .to_key_values();
        let keys = |s: &str| s.lines().map(|l| l.split('=').next().unwrap().to_string()).collect::<Vec<_>>();
        assert_eq!(keys(&empty), keys(&full));
    }

    proptest! {
        #[test]
        fn order_recovery_is_exact_for_power_sequences(p in 1.1f64..3.5, e0 in 0.05f64..0.9) {
            let e = power_sequence(e0, p, 40);
            let est = estimate_order_from_errors(&e, 1, ValidityWindow::default()).unwrap();
            prop_assert!((est.order - p).abs() < 1e-6);
        }
    }
}
