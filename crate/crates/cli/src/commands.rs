use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use shamanskii::analysis::{
    audit_descent, audit_forcing_decay, audit_hessian_error, audit_sandwich, curvature_floor, estimate_order, predicted_order, AuditReport,
    HESSIAN_PROBE_MAX_DIM,
};
use shamanskii::experiments::{
    best_objective, method_comparison, order_sweep, reference_solution, run_all, run_one, stopping_rule_study, stopping_study_base, Method,
    OrderCase, RunResult, RunSpec,
};
use shamanskii::{format_float as ff, BaselineVariant, CompositeProblem, EtaSchedule, SolveOutput, SolveStatus, SolverConfig, StopRuleConfig};

use crate::config::{self, Config, MethodKind, ProblemSpec};
use crate::error::{CliError, Result};
use crate::setup::{self, Instance};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
}

struct Prepared {
    config: Config,
    label: String,
    seed: u64,
    instance: Instance,
}

fn prepare(opts: &Options, command: &str) -> Result<Prepared> {
    let mut config = match &opts.config {
        Some(path) => Config::read(path)?,
        None => Config::default(),
    };
    if let Some(seed) = opts.seed {
        config.set("seed", seed.to_string());
    }
    let spec = ProblemSpec::from_config(&config)?;
    let instance = setup::build(&spec)?;
    fs::create_dir_all(&opts.out).map_err(|e| io_err(&opts.out, e))?;
    let label = config.str("label").unwrap_or(command).to_string();
    Ok(Prepared { label, seed: spec.seed, instance, config })
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn exit_code(status: SolveStatus) -> u8 {
    if status.converged() {
        0
    } else {
        2
    }
}

/// 1 if any run errored, else 2 if any stopped short of the tolerance.
fn batch_code(runs: &[&RunResult]) -> u8 {
    runs.iter()
        .map(|r| match &r.output {
            Ok(out) => exit_code(out.status),
            Err(_) => 1,
        })
        .fold(0, |acc, c| if acc == 1 || c == 1 { 1 } else { acc.max(c) })
}

/// Key-value summary; every value is copied from the last trace row.
fn summary(label: &str, seed: u64, spec: &RunSpec, out: &SolveOutput) -> String {
    let last = out.trace.last().expect("traces always end with a terminal row");
    format!(
        "label={label}\nseed={seed}\nstatus={}\niterations={}\nF={}\nnormG={}\nhess_evals={}\nwall_s={}\ntol_g={}\nsettings={}\n",
        out.status.as_str(),
        last.t,
        ff(last.f),
        ff(last.norm_g),
        last.hess_evals,
        ff(last.wall_s),
        ff(out.tol_g),
        spec.describe()
    )
}

fn write_run(dir: &Path, prefix: &str, label: &str, seed: u64, run: &RunResult) -> Result<()> {
    if let Ok(out) = &run.output {
        write(&dir.join(format!("{prefix}trace.csv")), &out.trace.to_csv())?;
        write(&dir.join(format!("{prefix}summary.txt")), &summary(label, seed, &run.spec, out))?;
    }
    Ok(())
}

fn newton_type(method: Method) -> bool {
    matches!(method, Method::Generic | Method::Inexact)
}

fn refresh_period(spec: &RunSpec) -> usize {
    if newton_type(spec.method) {
        spec.config.refresh.period().unwrap_or(1)
    } else {
        1
    }
}

/// Order the theory predicts for the run's settings, if it predicts one.
fn predicted_for(spec: &RunSpec) -> Option<f64> {
    if !newton_type(spec.method) {
        return None;
    }
    let n = spec.config.refresh.period()?;
    match spec.config.stop_rule {
        StopRuleConfig::FixedTolerance(_) => Some(predicted_order(n, None)),
        StopRuleConfig::Forcing { gamma, schedule: EtaSchedule::Constant, .. } if gamma > 1.0 => Some(predicted_order(n, Some(gamma))),
        StopRuleConfig::Forcing { gamma, .. } if gamma >= 2.0 => Some(predicted_order(n, None)),
        _ => None,
    }
}

fn reference_budget(cfg: &SolverConfig) -> usize {
    10 * cfg.max_iters.max(50)
}

fn audit(problem: &CompositeProblem, x0: &DVector<f64>, spec: &RunSpec, out: &SolveOutput, with_reference: bool) -> AuditReport {
    let mut report = AuditReport::default();
    let small = problem.dim() <= HESSIAN_PROBE_MAX_DIM;
    let x_ref = if with_reference {
        match reference_solution(problem, x0, reference_budget(&spec.config)) {
            Ok(r) if r.status.converged() => Some(r.x),
            Ok(r) => {
                report.notes.push(format!("reference run ended with status {}", r.status.as_str()));
                None
            }
            Err(e) => {
                report.notes.push(format!("reference run failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    let m_hat = if small { curvature_floor(problem, x_ref.as_ref().unwrap_or(&out.x)).ok() } else { None };

    if newton_type(spec.method) {
        report.descent = Some(audit_descent(&out.trace, m_hat));
        if matches!(spec.config.stop_rule, StopRuleConfig::Forcing { .. }) {
            report.forcing = Some(audit_forcing_decay(&out.trace, &spec.config.stop_rule, out.status));
        }
        match audit_hessian_error(problem, &out.iterates, &out.models) {
            Ok(h) => report.hessian_error = Some(h),
            Err(e) => report.notes.push(e.to_string()),
        }
    } else {
        report.notes.push("descent and forcing audits apply to Newton-type runs only".into());
    }

    if let Some(x_ref) = &x_ref {
        match estimate_order(&out.iterates, x_ref, refresh_period(spec)) {
            Ok(o) => report.order = Some(o),
            Err(e) => report.notes.push(format!("order: {e}")),
        }
        report.predicted_order = predicted_for(spec);
        if let Some(m) = m_hat.filter(|m| *m > 0.0) {
            let near: Vec<DVector<f64>> = out.iterates.iter().filter(|x| (*x - x_ref).norm() <= 0.1).cloned().collect();
            match audit_sandwich(problem, x_ref, &near, m) {
                Ok(s) => report.sandwich = Some(s),
                Err(e) => report.notes.push(format!("sandwich: {e}")),
            }
        }
    }
    report
}

pub fn solve(opts: &Options) -> Result<u8> {
    let p = prepare(opts, "solve")?;
    let cfg = config::solver_config(&p.config, SolverConfig::default())?;
    let method = match config::method(&p.config)? {
        MethodKind::Generic => Method::Generic,
        MethodKind::Inexact => Method::Inexact,
        MethodKind::Ista => Method::Baseline(BaselineVariant::Ista),
        MethodKind::Fista => Method::Baseline(BaselineVariant::Fista),
    };
    let spec = RunSpec::new(p.label.clone(), method, cfg);
    let run = run_one(&p.instance.problem, &p.instance.x0, &spec);
    let out = match &run.output {
        Ok(out) => out,
        Err(e) => return Err(e.clone().into()),
    };
    write_run(&opts.out, "", &p.label, p.seed, &run)?;
    let with_reference = p.config.bool("reference")?.unwrap_or(true);
    let report = audit(&p.instance.problem, &p.instance.x0, &spec, out, with_reference);
    write(&opts.out.join("audit.txt"), &format!("label={}\nseed={}\n{}", p.label, p.seed, report.to_key_values()))?;
    if !opts.quiet {
        print!("{}", summary(&p.label, p.seed, &spec, out));
        print!("{}", report.to_text());
    }
    Ok(exit_code(out.status))
}

/// Reference run for `F_best`; a failure only loses the reference point.
fn reference_for(problem: &CompositeProblem, x0: &DVector<f64>, cfg: &SolverConfig, quiet: bool) -> Option<SolveOutput> {
    match reference_solution(problem, x0, reference_budget(cfg)) {
        Ok(r) if r.status.converged() => Some(r),
        Ok(r) => {
            if !quiet {
                eprintln!("warning: reference run ended with status {}", r.status.as_str());
            }
            None
        }
        Err(e) => {
            if !quiet {
                eprintln!("warning: reference run failed: {e}");
            }
            None
        }
    }
}

fn series(runs: &[&RunResult], f_best: f64) -> String {
    let mut s = String::from("label,t,wall_s,F,subopt\n");
    for r in runs {
        if let Ok(out) = &r.output {
            for rec in out.trace.iter() {
                writeln!(s, "{},{},{},{},{}", r.spec.label, rec.t, ff(rec.wall_s), ff(rec.f), ff(rec.f - f_best)).expect("writing to a String");
            }
        }
    }
    s
}

fn report_errors(runs: &[&RunResult]) {
    for r in runs {
        if let Err(e) = &r.output {
            eprintln!("error: {}: {e}", r.spec.label);
        }
    }
}

pub fn bench(opts: &Options) -> Result<u8> {
    let p = prepare(opts, "bench")?;
    let base = config::solver_config(&p.config, stopping_study_base())?;
    let mut specs = stopping_rule_study(&base);
    if let Some(wanted) = p.config.list("bench_variants") {
        if let Some(bad) = wanted.iter().find(|w| !specs.iter().any(|s| &s.label == *w)) {
            let known: Vec<&str> = specs.iter().map(|s| s.label.as_str()).collect();
            return Err(CliError::Invalid(format!("unknown bench variant `{bad}` (known: {})", known.join(", "))));
        }
        specs.retain(|s| wanted.contains(&s.label));
    }
    let (problem, x0) = (&p.instance.problem, &p.instance.x0);
    let results = run_all(problem, x0, &specs);
    let reference = reference_for(problem, x0, &base, opts.quiet);
    let runs: Vec<&RunResult> = results.iter().collect();
    let f_best = best_objective(&results, reference.as_ref().and_then(|r| r.trace.last().map(|l| l.f)));

    let mut table = String::from("label,method,seed,status,iterations,cumulative_inner,hess_evals,final_F,final_normG,tail_order,elapsed_s\n");
    for r in &runs {
        write_run(&opts.out, &format!("{}.", r.spec.label), &r.spec.label, p.seed, r)?;
        let row = match &r.output {
            Ok(out) => {
                let last = out.trace.last().expect("terminal row");
                let order = reference
                    .as_ref()
                    .and_then(|x| estimate_order(&out.iterates, &x.x, refresh_period(&r.spec)).ok())
                    .map_or_else(|| "na".to_string(), |o| ff(o.order));
                format!(
                    "{},{},{},{},{},{},{},{},{},{order},{}",
                    r.spec.label,
                    r.spec.method.as_str(),
                    p.seed,
                    out.status.as_str(),
                    last.t,
                    out.trace.cumulative_inner(),
                    last.hess_evals,
                    ff(last.f),
                    ff(last.norm_g),
                    ff(r.elapsed.as_secs_f64())
                )
            }
            Err(_) => format!("{},{},{},error,na,na,na,na,na,na,{}", r.spec.label, r.spec.method.as_str(), p.seed, ff(r.elapsed.as_secs_f64())),
        };
        table.push_str(&row);
        table.push('\n');
    }
    write(&opts.out.join("bench.csv"), &table)?;
    write(&opts.out.join("series.csv"), &series(&runs, f_best))?;
    report_errors(&runs);
    if !opts.quiet {
        print!("{table}");
    }
    Ok(batch_code(&runs))
}

fn parse_cases(c: &Config) -> Result<Vec<OrderCase>> {
    let bad = |key: &str, v: &str, what: &str| CliError::Invalid(format!("`{key}` entry `{v}`: expected {what}"));
    let ns: Vec<usize> = match c.list("order_n") {
        Some(list) => {
            list.iter().map(|v| v.parse().ok().filter(|n| *n >= 1).ok_or_else(|| bad("order_n", v, "a period >= 1"))).collect::<Result<_>>()?
        }
        None => vec![1, 2, 3],
    };
    let gammas = c.list("order_gamma").unwrap_or_else(|| vec!["exact".into()]);
    let schedule = match c.str("order_schedule") {
        None | Some("constant") => EtaSchedule::Constant,
        Some("adaptive") => EtaSchedule::Adaptive,
        Some(v) => return Err(bad("order_schedule", v, "constant or adaptive")),
    };
    let mut cases = Vec::new();
    for &n in &ns {
        for g in &gammas {
            cases.push(if g == "exact" {
                OrderCase::Exact { n }
            } else {
                let gamma = g.parse().ok().filter(|g: &f64| *g >= 1.0).ok_or_else(|| bad("order_gamma", g, "`exact` or a number >= 1"))?;
                OrderCase::Forcing { n, gamma, schedule }
            });
        }
    }
    Ok(cases)
}

fn gamma_label(case: &OrderCase) -> (String, &'static str) {
    match case {
        OrderCase::Exact { .. } => ("exact".into(), "na"),
        OrderCase::Forcing { gamma, schedule, .. } => (gamma.to_string(), if *schedule == EtaSchedule::Adaptive { "adaptive" } else { "constant" }),
    }
}

pub fn order(opts: &Options) -> Result<u8> {
    let p = prepare(opts, "order")?;
    let base = config::solver_config(&p.config, SolverConfig { max_iters: 200, ..SolverConfig::default() })?;
    let cases = parse_cases(&p.config)?;
    let (problem, x0) = (&p.instance.problem, &p.instance.x0);
    let reference = reference_solution(problem, x0, reference_budget(&base))?;
    if !reference.status.converged() {
        return Err(shamanskii::Error::InsufficientData(format!("reference run ended with status {}", reference.status.as_str())).into());
    }
    let rows = order_sweep(problem, x0, &reference.x, &cases, &base);

    let mut table = String::from("label,seed,n,gamma,schedule,predicted,measured,cycle_product,status,iterations\n");
    for row in &rows {
        let r = &row.run;
        write_run(&opts.out, &format!("{}.", r.spec.label), &r.spec.label, p.seed, r)?;
        let (gamma, schedule) = gamma_label(&row.case);
        let (measured, product) = match &row.estimate {
            Ok(e) => (ff(e.order), ff(e.cycle_product)),
            Err(_) => ("indeterminate".into(), "na".into()),
        };
        let (status, iters) = match &r.output {
            Ok(out) => (out.status.as_str(), out.iterations().to_string()),
            Err(_) => ("error", "na".into()),
        };
        writeln!(
            table,
            "{},{},{},{gamma},{schedule},{},{measured},{product},{status},{iters}",
            r.spec.label,
            p.seed,
            row.case.period(),
            ff(row.predicted)
        )
        .expect("writing to a String");
    }
    write(&opts.out.join("order.csv"), &table)?;
    let runs: Vec<&RunResult> = rows.iter().map(|r| &r.run).collect();
    report_errors(&runs);
    if !opts.quiet {
        println!("{:<32} {:>9} {:>13}", "case", "predicted", "measured");
        for row in &rows {
            let measured = row.estimate.as_ref().map_or_else(|_| "indeterminate".to_string(), |e| format!("{:.3}", e.order));
            println!("{:<32} {:>9.3} {:>13}", row.run.spec.label, row.predicted, measured);
        }
    }
    Ok(batch_code(&runs))
}

pub fn compare(opts: &Options) -> Result<u8> {
    let p = prepare(opts, "compare")?;
    let base = config::solver_config(&p.config, SolverConfig::default())?;
    let specs = method_comparison(&base);
    let (problem, x0) = (&p.instance.problem, &p.instance.x0);
    let results = run_all(problem, x0, &specs);
    let reference = reference_for(problem, x0, &base, opts.quiet);
    let runs: Vec<&RunResult> = results.iter().collect();
    let f_best = best_objective(&results, reference.as_ref().and_then(|r| r.trace.last().map(|l| l.f)));

    let mut table = String::from("label,method,seed,status,iterations,hess_evals,final_F,final_subopt,elapsed_s,settings\n");
    for r in &runs {
        write_run(&opts.out, &format!("{}.", r.spec.label), &r.spec.label, p.seed, r)?;
        let row = match &r.output {
            Ok(out) => {
                let last = out.trace.last().expect("terminal row");
                format!(
                    "{},{},{},{},{},{},{},{},{},\"{}\"",
                    r.spec.label,
                    r.spec.method.as_str(),
                    p.seed,
                    out.status.as_str(),
                    last.t,
                    last.hess_evals,
                    ff(last.f),
                    ff(last.f - f_best),
                    ff(r.elapsed.as_secs_f64()),
                    r.spec.describe()
                )
            }
            Err(_) => format!(
                "{},{},{},error,na,na,na,na,{},\"{}\"",
                r.spec.label,
                r.spec.method.as_str(),
                p.seed,
                ff(r.elapsed.as_secs_f64()),
                r.spec.describe()
            ),
        };
        table.push_str(&row);
        table.push('\n');
    }
    write(&opts.out.join("compare.csv"), &table)?;
    write(&opts.out.join("series.csv"), &series(&runs, f_best))?;
    report_errors(&runs);
    if !opts.quiet {
        print!("{table}");
    }
    Ok(batch_code(&runs))
}
