//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use shamanskii::synth::DesignSpec;
use shamanskii::{EtaSchedule, HessianMode, InnerSolver, LineSearchConfig, RefreshSchedule, SolverConfig, StopRuleConfig};

use crate::error::{CliError, Result};

/// Every key the front-end understands. Anything else is rejected so typos
/// do not silently fall back to defaults.
pub const KNOWN_KEYS: &[&str] = &[
    "label",
    "seed",
    "loss",
    "data",
    "features",
    "binary_labels",
    "scale",
    "samples",
    "condition",
    "top_eigenvalue",
    "signal",
    "reg",
    "mu",
    "box_lo",
    "box_hi",
    "lipschitz",
    "x0",
    "x0_radius",
    "method",
    "refresh",
    "hessian",
    "memory",
    "stop_rule",
    "inner_tol",
    "gamma",
    "eta_bar",
    "eta_schedule",
    "inner_max",
    "inner_cap",
    "inner_solver",
    "line_search",
    "ls_beta",
    "ls_budget",
    "tol_g",
    "max_iters",
    "time_budget",
    "eta_min",
    "wall_clock",
    "reference",
    "bench_variants",
    "order_n",
    "order_gamma",
    "order_schedule",
];

const SYNTHETIC_KEYS: &[&str] = &["samples", "condition", "top_eigenvalue", "signal"];

/// Raw key-value pairs with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) =
                content.split_once('=').ok_or_else(|| CliError::Config { line, message: format!("expected `key = value`, got `{content}`") })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config { line, message: format!("unknown key `{key}`") });
            }
            if entries.insert(key.clone(), (value.trim().to_string(), line)).is_some() {
                return Err(CliError::Config { line, message: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), 0));
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn bad(&self, key: &str, expected: &str) -> CliError {
        let (value, line) = &self.entries[key];
        CliError::Config { line: *line, message: format!("`{key}` expects {expected}, got `{value}`") }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.bad(key, expected)),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.parsed(key, "a number")
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key, "a nonnegative integer")
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.parsed(key, "a nonnegative integer")
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.str(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(_) => Err(self.bad(key, "true or false")),
        }
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.str(key).map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    fn choice<'a>(&self, key: &str, options: &[&'a str]) -> Result<Option<&'a str>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => options.iter().find(|o| **o == v).copied().map(Some).ok_or_else(|| self.bad(key, &options.join(" | "))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Poisson,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File { path: PathBuf, features: Option<usize>, binary_labels: bool, scale: bool },
    Synthetic(DesignSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegSpec {
    Zero,
    L1(f64),
    Box(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartSpec {
    Zeros,
    Random { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub loss: LossKind,
    pub source: Source,
    pub reg: RegSpec,
    pub lipschitz: Option<f64>,
    pub start: StartSpec,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn from_config(c: &Config) -> Result<Self> {
        let seed = c.u64("seed")?.unwrap_or(DesignSpec::logistic_fixture().seed);
        let loss = match c.choice("loss", &["logistic", "poisson", "quadratic"])? {
            None | Some("logistic") => LossKind::Logistic,
            Some("poisson") => LossKind::Poisson,
            _ => LossKind::Quadratic,
        };
        let source = match c.str("data") {
            Some(path) => {
                if let Some(k) = SYNTHETIC_KEYS.iter().find(|k| c.has(k)) {
                    let line = c.entries[*k].1;
                    return Err(CliError::Config { line, message: format!("`{k}` configures a synthetic problem but `data` is also set") });
                }
                let scale = matches!(c.choice("scale", &["none", "max_abs"])?, Some("max_abs"));
                Source::File {
                    path: PathBuf::from(path),
                    features: c.usize("features")?,
                    binary_labels: c.bool("binary_labels")?.unwrap_or(false),
                    scale,
                }
            }
            None => {
                let mut spec = DesignSpec::logistic_fixture();
                spec.seed = seed;
                if let Some(v) = c.usize("samples")? {
                    spec.samples = v;
                }
                if let Some(v) = c.usize("features")? {
                    spec.features = v;
                }
                if let Some(v) = c.f64("condition")? {
                    spec.condition = v;
                }
                if let Some(v) = c.f64("top_eigenvalue")? {
                    spec.top_eigenvalue = v;
                }
                if let Some(v) = c.f64("signal")? {
                    spec.signal = v;
                }
                Source::Synthetic(spec)
            }
        };
        let reg = match c.choice("reg", &["zero", "l1", "box"])? {
            Some("zero") => RegSpec::Zero,
            Some("box") => RegSpec::Box(c.f64("box_lo")?.unwrap_or(-1.0), c.f64("box_hi")?.unwrap_or(1.0)),
            _ => RegSpec::L1(c.f64("mu")?.unwrap_or(1e-3)),
        };
        let lipschitz = match c.str("lipschitz") {
            None | Some("auto") => None,
            Some(_) => c.f64("lipschitz")?,
        };
        let start = match c.choice("x0", &["zeros", "random"])? {
            Some("random") => StartSpec::Random { radius: c.f64("x0_radius")?.unwrap_or(1.0) },
            _ => StartSpec::Zeros,
        };
        Ok(Self { loss, source, reg, lipschitz, start, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Generic,
    Inexact,
    Ista,
    Fista,
}

pub fn method(c: &Config) -> Result<MethodKind> {
    Ok(match c.choice("method", &["generic", "inexact", "ista", "fista"])? {
        None | Some("generic") => MethodKind::Generic,
        Some("inexact") => MethodKind::Inexact,
        Some("ista") => MethodKind::Ista,
        _ => MethodKind::Fista,
    })
}

/// Applies the solver keys present in `c` on top of `base`.
pub fn solver_config(c: &Config, base: SolverConfig) -> Result<SolverConfig> {
    let mut cfg = base;
    if let Some(v) = c.str("refresh") {
        cfg.refresh = match v {
            "inf" | "never" => RefreshSchedule::Never,
            _ => {
                let n = c.usize("refresh")?.ok_or_else(|| c.bad("refresh", "a period or `inf`"))?;
                RefreshSchedule::every(n).map_err(|_| c.bad("refresh", "a period >= 1 or `inf`"))?
            }
        };
    }
    match c.choice("hessian", &["exact", "lbfgs"])? {
        Some("exact") => cfg.hessian = HessianMode::Exact,
        Some(_) => cfg.hessian = HessianMode::Lbfgs { memory: c.usize("memory")?.unwrap_or(shamanskii::hessian::DEFAULT_MEMORY) },
        None => {
            if let (HessianMode::Lbfgs { .. }, Some(m)) = (cfg.hessian, c.usize("memory")?) {
                cfg.hessian = HessianMode::Lbfgs { memory: m };
            }
        }
    }
    let schedule = match c.choice("eta_schedule", &["adaptive", "constant"])? {
        Some("constant") => Some(EtaSchedule::Constant),
        Some(_) => Some(EtaSchedule::Adaptive),
        None => None,
    };
    cfg.stop_rule = match c.choice("stop_rule", &["fixed", "forcing", "max_inner"])? {
        Some("fixed") => StopRuleConfig::FixedTolerance(c.f64("inner_tol")?.unwrap_or(1e-10)),
        Some("max_inner") => StopRuleConfig::MaxInnerIters(c.usize("inner_max")?.unwrap_or(5)),
        Some(_) => StopRuleConfig::Forcing {
            gamma: c.f64("gamma")?.unwrap_or(1.0),
            eta_bar: c.f64("eta_bar")?.unwrap_or(shamanskii::solver::DEFAULT_ETA_BAR),
            schedule: schedule.unwrap_or(EtaSchedule::Adaptive),
        },
        None => match cfg.stop_rule {
            StopRuleConfig::Forcing { gamma, eta_bar, schedule: s } => StopRuleConfig::Forcing {
                gamma: c.f64("gamma")?.unwrap_or(gamma),
                eta_bar: c.f64("eta_bar")?.unwrap_or(eta_bar),
                schedule: schedule.unwrap_or(s),
            },
            StopRuleConfig::FixedTolerance(eps) => StopRuleConfig::FixedTolerance(c.f64("inner_tol")?.unwrap_or(eps)),
            StopRuleConfig::MaxInnerIters(k) => StopRuleConfig::MaxInnerIters(c.usize("inner_max")?.unwrap_or(k)),
        },
    };
    if let Some(v) = c.usize("inner_cap")? {
        cfg.inner_cap = v;
    }
    match c.choice("inner_solver", &["spectral", "fista"])? {
        Some("spectral") => cfg.inner_solver = InnerSolver::Spectral,
        Some(_) => cfg.inner_solver = InnerSolver::Fista,
        None => {}
    }
    let (beta, budget) = match cfg.line_search {
        LineSearchConfig::Backtracking { beta, budget } => (beta, budget),
        LineSearchConfig::UnitStep => (0.5, 50),
    };
    let beta = c.f64("ls_beta")?.unwrap_or(beta);
    let budget = c.usize("ls_budget")?.unwrap_or(budget);
    cfg.line_search = match c.choice("line_search", &["backtracking", "unit"])? {
        Some("unit") => LineSearchConfig::UnitStep,
        Some(_) => LineSearchConfig::Backtracking { beta, budget },
        None => match cfg.line_search {
            LineSearchConfig::UnitStep => LineSearchConfig::UnitStep,
            LineSearchConfig::Backtracking { .. } => LineSearchConfig::Backtracking { beta, budget },
        },
    };
    match c.str("tol_g") {
        Some("auto") => cfg.tol_g = None,
        Some(_) => cfg.tol_g = c.f64("tol_g")?,
        None => {}
    }
    if let Some(v) = c.usize("max_iters")? {
        cfg.max_iters = v;
    }
    if let Some(v) = c.f64("time_budget")? {
        cfg.time_budget = Some(Duration::try_from_secs_f64(v).map_err(|_| c.bad("time_budget", "a nonnegative number of seconds"))?);
    }
    if let Some(v) = c.f64("eta_min")? {
        cfg.eta_min = v;
    }
    if let Some(v) = c.bool("wall_clock")? {
        cfg.wall_clock = v;
    }
    cfg.validate()?;
    Ok(cfg)
}
