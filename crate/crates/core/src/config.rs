//! Plain `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, lists are comma separated.
//! Filter radii are given in element widths; the Helmholtz length is derived
//! as `R / (2 sqrt 3)`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::driver::OptimizationConfig;
use crate::error::{Error, Result};
use crate::filtering::{helmholtz_length_from_radius, FilterConfig, ProjectionConfig};
use crate::interpolation::{MaterialSet, Scheme, DEFAULT_DELTA, DEFAULT_NORM_ORDER, DEFAULT_PENALIZATION};
use crate::problem::{Geometry, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    Sensitivity,
    Pde,
}

impl FilterKind {
    pub fn tag(self) -> &'static str {
        match self {
            FilterKind::Sensitivity => "sensitivity",
            FilterKind::Pde => "pde",
        }
    }
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sensitivity" => Ok(FilterKind::Sensitivity),
            "pde" | "helmholtz" => Ok(FilterKind::Pde),
            other => Err(format!("unknown filter `{other}` (expected sensitivity or pde)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: Geometry,
    pub nelx: usize,
    pub nely: usize,
    pub width: f64,
    pub height: f64,
    pub load: f64,
    pub poisson: f64,
    pub scheme: Scheme,
    pub moduli: Vec<f64>,
    pub e_void: f64,
    pub p: f64,
    pub n: f64,
    pub delta: f64,
    pub filter: FilterKind,
    /// In element widths.
    pub filter_radius: f64,
    pub beta_initial: f64,
    pub beta_period: usize,
    pub beta_max: f64,
    pub volfrac: Vec<f64>,
    pub max_iters: usize,
    pub tol_change: f64,
    pub output: Option<PathBuf>,
    pub vtk: bool,
}

/// Every recognised key, in serialization order.
pub const KEYS: [&str; 23] = [
    "problem", "nelx", "nely", "width", "height", "load", "poisson", "scheme", "moduli", "e_void",
    "p", "n", "delta", "filter", "filter_radius", "beta_initial", "beta_period", "beta_max",
    "volfrac", "max_iters", "tol_change", "output", "vtk",
];

const REQUIRED: [&str; 2] = ["moduli", "volfrac"];

impl Default for RunConfig {
    /// Benchmark mesh and solver defaults; `moduli` and `volfrac` are empty
    /// and must be supplied.
    fn default() -> Self {
        let projection = ProjectionConfig::default();
        Self {
            problem: Geometry::Cantilever,
            nelx: 200,
            nely: 100,
            width: 2.0,
            height: 1.0,
            load: 0.1,
            poisson: 0.3,
            scheme: Scheme::PnormMapping,
            moduli: Vec::new(),
            e_void: 1e-9,
            p: DEFAULT_NORM_ORDER,
            n: DEFAULT_PENALIZATION,
            delta: DEFAULT_DELTA,
            filter: FilterKind::Sensitivity,
            filter_radius: 1.5,
            beta_initial: projection.beta_initial,
            beta_period: projection.doubling_period,
            beta_max: projection.beta_max,
            volfrac: Vec::new(),
            max_iters: 200,
            tol_change: 0.01,
            output: None,
            vtk: false,
        }
    }
}

fn parse_scalar<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse `{value}` as {}", std::any::type_name::<T>()))
}

fn at_least(value: &str, min: f64, what: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse_scalar(value)?;
    if v >= min && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what} must be >= {min}, got {v}"))
    }
}

fn positive(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse_scalar(value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

fn count(value: &str) -> std::result::Result<usize, String> {
    match parse_scalar(value)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|v| parse_scalar(v.trim())).collect()
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("cannot parse `{other}` as a boolean")),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line: Some(line),
                    key: content.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) && KEYS.contains(&key) {
                return Err(Error::Config {
                    line: Some(line),
                    key: key.into(),
                    message: "duplicate key".into(),
                });
            }
            cfg.set(key, value).map_err(|message| Error::Config {
                line: Some(line),
                key: key.into(),
                message,
            })?;
        }
        if let Some(key) = REQUIRED.iter().find(|k| !seen.contains(**k)) {
            return Err(Error::Config {
                line: None,
                key: key.to_string(),
                message: "missing required key".into(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Assigns one key from its textual value without validating the
    /// whole configuration.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "problem" => self.problem = value.parse()?,
            "nelx" => self.nelx = count(value)?,
            "nely" => self.nely = count(value)?,
            "width" => self.width = positive(value)?,
            "height" => self.height = positive(value)?,
            "load" => self.load = parse_scalar(value)?,
            "poisson" => self.poisson = parse_scalar(value)?,
            "scheme" => self.scheme = value.parse()?,
            "moduli" => self.moduli = parse_list(value)?,
            "e_void" => self.e_void = positive(value)?,
            "p" => self.p = at_least(value, 1.0, "norm order")?,
            "n" => self.n = at_least(value, 1.0, "penalization")?,
            "delta" => self.delta = positive(value)?,
            "filter" => self.filter = value.parse()?,
            "filter_radius" => self.filter_radius = positive(value)?,
            "beta_initial" => self.beta_initial = positive(value)?,
            "beta_period" => self.beta_period = count(value)?,
            "beta_max" => self.beta_max = positive(value)?,
            "volfrac" => self.volfrac = parse_list(value)?,
            "max_iters" => self.max_iters = count(value)?,
            "tol_change" => self.tol_change = parse_scalar(value)?,
            "output" => self.output = (!value.is_empty()).then(|| PathBuf::from(value)),
            "vtk" => self.vtk = parse_bool(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Copy with one key replaced, validated as a whole.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.set(key, value).map_err(|message| Error::Config {
            line: None,
            key: key.into(),
            message,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything the derived problem and optimization settings
    /// check, reported against the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, e: Error| Error::Config {
            line: None,
            key: key.into(),
            message: e.to_string(),
        };
        if self.volfrac.len() != self.moduli.len() {
            return Err(Error::Config {
                line: None,
                key: "volfrac".into(),
                message: format!("{} values for {} materials", self.volfrac.len(), self.moduli.len()),
            });
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return Err(Error::Config {
                line: None,
                key: "poisson".into(),
                message: format!("{} outside (-1, 0.5)", self.poisson),
            });
        }
        self.problem_spec().validate().map_err(|e| bad("problem", e))?;
        self.materials().map_err(|e| bad("moduli", e))?;
        self.filter_config().validate().map_err(|e| bad("filter_radius", e))?;
        self.projection().validate().map_err(|e| bad("beta_initial", e))?;
        let opt = self.optimization_config()?;
        opt.validate().map_err(|e| bad("volfrac", e))
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            geometry: self.problem,
            width: self.width,
            height: self.height,
            nelx: self.nelx,
            nely: self.nely,
            load: self.load,
            poisson: self.poisson,
        }
    }

    pub fn materials(&self) -> Result<MaterialSet> {
        MaterialSet::with_params(self.moduli.clone(), self.e_void, self.n, self.p, self.delta)
    }

    pub fn filter_config(&self) -> FilterConfig {
        let radius = self.filter_radius * self.width / self.nelx.max(1) as f64;
        match self.filter {
            FilterKind::Sensitivity => FilterConfig::Sensitivity { radius },
            FilterKind::Pde => FilterConfig::Pde {
                length: helmholtz_length_from_radius(radius),
            },
        }
    }

    pub fn projection(&self) -> ProjectionConfig {
        ProjectionConfig {
            beta_initial: self.beta_initial,
            doubling_period: self.beta_period,
            beta_max: self.beta_max,
        }
    }

    pub fn optimization_config(&self) -> Result<OptimizationConfig> {
        let mut cfg = OptimizationConfig::new(
            self.materials()?,
            self.scheme,
            self.filter_config(),
            self.volfrac.clone(),
        );
        cfg.projection = self.projection();
        cfg.max_iterations = self.max_iters;
        cfg.change_tolerance = self.tol_change;
        Ok(cfg)
    }

    /// Canonical text form: every key once, in [`KEYS`] order. Parsing it
    /// gives back an identical configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "problem" => self.problem.tag().to_string(),
                "nelx" => self.nelx.to_string(),
                "nely" => self.nely.to_string(),
                "width" => self.width.to_string(),
                "height" => self.height.to_string(),
                "load" => self.load.to_string(),
                "poisson" => self.poisson.to_string(),
                "scheme" => self.scheme.tag().to_string(),
                "moduli" => join(&self.moduli),
                "e_void" => self.e_void.to_string(),
                "p" => self.p.to_string(),
                "n" => self.n.to_string(),
                "delta" => self.delta.to_string(),
                "filter" => self.filter.tag().to_string(),
                "filter_radius" => self.filter_radius.to_string(),
                "beta_initial" => self.beta_initial.to_string(),
                "beta_period" => self.beta_period.to_string(),
                "beta_max" => self.beta_max.to_string(),
                "volfrac" => join(&self.volfrac),
                "max_iters" => self.max_iters.to_string(),
                "tol_change" => self.tol_change.to_string(),
                "output" => match &self.output {
                    Some(p) => p.display().to_string(),
                    None => continue,
                },
                "vtk" => self.vtk.to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
