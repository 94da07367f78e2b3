//! Run configuration: a TOML file and command-line overrides merged into one
//! validated [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rates::RateFunction;

pub const MAX_QUERY_TIMES: usize = 10_000;
pub const DEFAULT_BENCH_TIMES: [f64; 7] = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0];
pub const DEFAULT_REPS: usize = 5;
pub const DEFAULT_EULER_DT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    BirthDeath,
    SirCohort,
    PureBirth,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BirthDeath => "birth-death",
            ModelKind::SirCohort => "sir-cohort",
            ModelKind::PureBirth => "pure-birth",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "birth-death" => Ok(ModelKind::BirthDeath),
            "sir-cohort" => Ok(ModelKind::SirCohort),
            "pure-birth" => Ok(ModelKind::PureBirth),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected birth-death, sir-cohort or pure-birth)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    WeiNorman,
    Rk45,
    Euler,
    Oracle,
    All,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::WeiNorman => "wei-norman",
            Method::Rk45 => "rk45",
            Method::Euler => "euler",
            Method::Oracle => "oracle",
            Method::All => "all",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wei-norman" => Ok(Method::WeiNorman),
            "rk45" => Ok(Method::Rk45),
            "euler" => Ok(Method::Euler),
            "oracle" => Ok(Method::Oracle),
            "all" => Ok(Method::All),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected wei-norman, rk45, euler, oracle or all)"
            ))),
        }
    }
}

/// Model-specific rates and state-space size.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    BirthDeath {
        b: RateFunction,
        d: RateFunction,
        n_max: usize,
    },
    SirCohort {
        lambda: RateFunction,
        gamma: RateFunction,
        n: usize,
    },
    PureBirth {
        a: RateFunction,
        b: RateFunction,
        m: usize,
    },
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::BirthDeath { .. } => ModelKind::BirthDeath,
            ModelParams::SirCohort { .. } => ModelKind::SirCohort,
            ModelParams::PureBirth { .. } => ModelKind::PureBirth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub times: Vec<f64>,
    pub method: Method,
    /// Tolerance for the exponential action and the reference integrator.
    pub tol: f64,
    pub euler_dt: f64,
    pub reps: usize,
    pub out: Option<PathBuf>,
    pub curves_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn model(&self) -> ModelKind {
        self.params.kind()
    }
}

/// File layout; every key is optional so that flags can fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    method: Option<String>,
    times: Option<Vec<f64>>,
    tol: Option<f64>,
    dt: Option<f64>,
    reps: Option<usize>,
    out: Option<PathBuf>,
    curves_out: Option<PathBuf>,
    b: Option<String>,
    d: Option<String>,
    n_max: Option<usize>,
    lambda: Option<String>,
    gamma: Option<String>,
    #[serde(rename = "N")]
    n: Option<usize>,
    a: Option<String>,
    m: Option<usize>,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub method: Option<String>,
    pub times: Option<String>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub curves_out: Option<PathBuf>,
    pub reps: Option<usize>,
    /// `key=value` pairs using the file's key names.
    pub params: Vec<String>,
}

/// Which subcommand is being configured; it only changes defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Solve,
    Verify,
    Bench,
}

pub fn load(path: Option<&Path>, overrides: &Overrides, purpose: Purpose) -> Result<RunConfig> {
    let mut file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_file(&text)?
        }
        None => FileConfig::default(),
    };
    apply_overrides(&mut file, overrides)?;
    resolve(file, purpose)
}

/// Parses a TOML configuration with no command-line overrides.
pub fn from_toml(text: &str, purpose: Purpose) -> Result<RunConfig> {
    resolve(parse_file(text)?, purpose)
}

fn parse_file(text: &str) -> Result<FileConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
}

fn apply_overrides(file: &mut FileConfig, o: &Overrides) -> Result<()> {
    if let Some(m) = &o.model {
        file.model = Some(m.clone());
    }
    if let Some(m) = &o.method {
        file.method = Some(m.clone());
    }
    if let Some(t) = &o.times {
        file.times = Some(parse_times(t)?);
    }
    if o.tol.is_some() {
        file.tol = o.tol;
    }
    if o.out.is_some() {
        file.out = o.out.clone();
    }
    if o.curves_out.is_some() {
        file.curves_out = o.curves_out.clone();
    }
    if o.reps.is_some() {
        file.reps = o.reps;
    }
    for kv in &o.params {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("parameter `{kv}` is not of the form key=value")))?;
        let (key, value) = (key.trim(), value.trim().to_string());
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}` needs a nonnegative integer, got `{v}`")))
        };
        let float = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}` needs a number, got `{v}`")))
        };
        match key {
            "b" => file.b = Some(value),
            "d" => file.d = Some(value),
            "lambda" => file.lambda = Some(value),
            "gamma" => file.gamma = Some(value),
            "a" => file.a = Some(value),
            "n_max" => file.n_max = Some(int(&value)?),
            "N" => file.n = Some(int(&value)?),
            "m" => file.m = Some(int(&value)?),
            "dt" => file.dt = Some(float(&value)?),
            other => return Err(Error::Config(format!("unknown parameter `{other}`"))),
        }
    }
    Ok(())
}

/// Comma-separated list of times.
pub fn parse_times(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse time `{}`", x.trim())))
        })
        .collect()
}

fn rate(key: &str, value: Option<String>, default: &str) -> Result<RateFunction> {
    value
        .as_deref()
        .unwrap_or(default)
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: {e}")))
}

fn resolve(file: FileConfig, purpose: Purpose) -> Result<RunConfig> {
    let model: ModelKind = file
        .model
        .as_deref()
        .ok_or_else(|| Error::Config("no model given (use --model or `model = ...`)".into()))?
        .parse()?;
    let method = match &file.method {
        Some(m) => m.parse()?,
        None if purpose == Purpose::Bench => Method::All,
        None => Method::WeiNorman,
    };
    let stray: Vec<&str> = [
        ("b", file.b.is_some() && model == ModelKind::SirCohort),
        ("d", file.d.is_some() && model != ModelKind::BirthDeath),
        ("n_max", file.n_max.is_some() && model != ModelKind::BirthDeath),
        ("lambda", file.lambda.is_some() && model != ModelKind::SirCohort),
        ("gamma", file.gamma.is_some() && model != ModelKind::SirCohort),
        ("N", file.n.is_some() && model != ModelKind::SirCohort),
        ("a", file.a.is_some() && model != ModelKind::PureBirth),
        ("m", file.m.is_some() && model != ModelKind::PureBirth),
    ]
    .into_iter()
    .filter(|(_, bad)| *bad)
    .map(|(k, _)| k)
    .collect();
    if !stray.is_empty() {
        return Err(Error::Config(format!(
            "keys {} do not apply to model {model}",
            stray.join(", ")
        )));
    }
    let params = match model {
        ModelKind::BirthDeath => ModelParams::BirthDeath {
            b: rate("b", file.b, "constant:1")?,
            d: rate("d", file.d, "constant:1")?,
            n_max: file.n_max.unwrap_or(30),
        },
        ModelKind::SirCohort => ModelParams::SirCohort {
            lambda: rate("lambda", file.lambda, "constant:0.2")?,
            gamma: rate("gamma", file.gamma, "constant:0.3")?,
            n: file.n.unwrap_or(20),
        },
        ModelKind::PureBirth => ModelParams::PureBirth {
            a: rate("a", file.a, "constant:1")?,
            b: rate("b", file.b, "rational")?,
            m: file.m.unwrap_or(100),
        },
    };
    match &params {
        ModelParams::BirthDeath { n_max, .. } if *n_max < 2 => {
            return Err(Error::Config(format!("n_max must be at least 2, got {n_max}")))
        }
        ModelParams::SirCohort { n, .. } if *n < 1 => return Err(Error::Config("N must be at least 1".into())),
        ModelParams::PureBirth { m, .. } if *m < 2 => {
            return Err(Error::Config(format!("m must be at least 2, got {m}")))
        }
        _ => {}
    }
    let times = file.times.unwrap_or_else(|| match purpose {
        Purpose::Bench => DEFAULT_BENCH_TIMES.to_vec(),
        _ => vec![1.0],
    });
    validate_times(&times)?;
    let tol = file.tol.unwrap_or(crate::expm::DEFAULT_EXPM_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("tol must lie in (0, 1), got {tol}")));
    }
    let euler_dt = file.dt.unwrap_or(DEFAULT_EULER_DT);
    if !(euler_dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {euler_dt}")));
    }
    let reps = file.reps.unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    Ok(RunConfig {
        params,
        times,
        method,
        tol,
        euler_dt,
        reps,
        out: file.out,
        curves_out: file.curves_out,
    })
}

pub fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Config("at least one query time is required".into()));
    }
    if times.len() > MAX_QUERY_TIMES {
        return Err(Error::Config(format!(
            "{} query times exceed the limit of {MAX_QUERY_TIMES}",
            times.len()
        )));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Config(format!("query time {t} is not a finite nonnegative number")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("query times must be sorted".into()));
    }
    Ok(())
}

/// `key=value` pairs describing the model, for report headers.
pub fn describe(params: &ModelParams) -> BTreeMap<&'static str, String> {
    let mut out = BTreeMap::new();
    match params {
        ModelParams::BirthDeath { b, d, n_max } => {
            out.insert("b", b.to_string());
            out.insert("d", d.to_string());
            out.insert("n_max", n_max.to_string());
        }
        ModelParams::SirCohort { lambda, gamma, n } => {
            out.insert("lambda", lambda.to_string());
            out.insert("gamma", gamma.to_string());
            out.insert("N", n.to_string());
        }
        ModelParams::PureBirth { a, b, m } => {
            out.insert("a", a.to_string());
            out.insert("b", b.to_string());
            out.insert("m", m.to_string());
        }
    }
    out
}
