//! The `wei-norman` command-line front end: `solve`, `verify` and `bench`.

pub mod bench;
pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::expm::{KrylovExpm, KrylovOptions};
use crate::factorization::WeiNormanFactorization;
use crate::models::pure_birth::DEFAULT_MARGIN;
use crate::models::AlgebraReport;
use crate::ode::{euler_solve, rk45_solve_at, GeneratorFamily, OdeOptions, ProbabilityVector, TimeGenerator};
use crate::{BirthDeathModel, CohortModel, PureBirthModel};

pub use bench::{cmd_bench, BenchOutput, BenchRecord};
pub use config::{Method, ModelKind, ModelParams, Overrides, Purpose, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Sample points for the exponential-adjoint identities of the cohort model.
pub const EXP_AD_POINTS: [f64; 3] = [0.3, 1.0, 2.0];
pub const EXP_AD_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "wei-norman", version, about = "Transient distributions of time-inhomogeneous Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the distribution at each query time as CSV.
    Solve(CommonArgs),
    /// Check the algebraic identities behind the selected model's factorization.
    Verify(CommonArgs),
    /// Time the factorized solver against direct integration.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML file with model, rates, sizes and times.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// birth-death, sir-cohort or pure-birth.
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated, sorted query times.
    #[arg(long)]
    pub times: Option<String>,
    /// wei-norman, rk45, euler, oracle or all.
    #[arg(long)]
    pub method: Option<String>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tolerance of the exponential action.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Model parameter override such as `b=exp:1,0.1` or `m=50`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Repetitions per cell; the minimum wall time is reported.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Where to write the pure-birth `f_i(t)` curves.
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            model: self.model.clone(),
            method: self.method.clone(),
            times: self.times.clone(),
            tol: self.tol,
            out: self.out.clone(),
            params: self.params.clone(),
            ..Overrides::default()
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Solve(args) => load(&args, Purpose::Solve).and_then(|cfg| {
            let csv = cmd_solve(&cfg)?;
            emit(cfg.out.as_deref(), &csv)?;
            Ok(EXIT_OK)
        }),
        Command::Verify(args) => load(&args, Purpose::Verify).and_then(|cfg| {
            let report = cmd_verify(&cfg)?;
            emit(cfg.out.as_deref(), &format!("{report}\n"))?;
            match report.first_failure() {
                None => Ok(EXIT_OK),
                Some(check) => {
                    eprintln!(
                        "verification failed: {} (residual {:e}, tolerance {:e})",
                        check.name, check.residual, check.tol
                    );
                    Ok(EXIT_VERIFY_FAILED)
                }
            }
        }),
        Command::Bench(args) => {
            let mut overrides = args.common.overrides();
            overrides.reps = args.reps;
            overrides.curves_out = args.curves_out.clone();
            config::load(args.common.config.as_deref(), &overrides, Purpose::Bench).and_then(|cfg| {
                let output = cmd_bench(&cfg)?;
                for failure in &output.failures {
                    eprintln!("{failure}");
                }
                emit(cfg.out.as_deref(), &output.records_csv())?;
                if let (Some(path), Some(_)) = (&cfg.curves_out, &output.curves) {
                    emit(Some(path), &output.curves_csv())?;
                }
                Ok(EXIT_OK)
            })
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::RateParse { .. } => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn load(args: &CommonArgs, purpose: Purpose) -> Result<RunConfig> {
    config::load(args.config.as_deref(), &args.overrides(), purpose)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

enum Inner {
    BirthDeath(BirthDeathModel),
    SirCohort(CohortModel),
    PureBirth(PureBirthModel),
}

/// One of the three models behind a uniform solve interface.
pub struct SolverModel {
    inner: Inner,
    family: GeneratorFamily,
    factorization: Option<WeiNormanFactorization>,
    krylov: KrylovExpm,
}

impl SolverModel {
    /// Builds the model with the exponential action held to `tol`.
    pub fn build(params: &ModelParams, tol: f64) -> Result<Self> {
        let inner = match params {
            ModelParams::BirthDeath { b, d, n_max } => Inner::BirthDeath(BirthDeathModel::build(b.clone(), d.clone(), *n_max)?),
            ModelParams::SirCohort { lambda, gamma, n } => {
                Inner::SirCohort(CohortModel::build(lambda.clone(), gamma.clone(), *n)?)
            }
            ModelParams::PureBirth { a, b, m } => {
                let model = PureBirthModel::build(a.clone(), b.clone(), *m)?;
                let opts = KrylovOptions {
                    tol,
                    ..*model.krylov_options()
                };
                Inner::PureBirth(model.with_krylov(opts))
            }
        };
        let (family, factorization) = match &inner {
            Inner::BirthDeath(m) => (m.family()?, Some(m.factorization()?)),
            Inner::SirCohort(m) => (m.family()?, Some(m.bounded_factorization()?)),
            Inner::PureBirth(m) => (m.family()?, None),
        };
        let krylov = KrylovExpm::new(KrylovOptions {
            tol,
            ..KrylovOptions::default()
        })?;
        Ok(Self {
            inner,
            family,
            factorization,
            krylov,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.inner {
            Inner::BirthDeath(_) => ModelKind::BirthDeath,
            Inner::SirCohort(_) => ModelKind::SirCohort,
            Inner::PureBirth(_) => ModelKind::PureBirth,
        }
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn family(&self) -> &GeneratorFamily {
        &self.family
    }

    pub fn overflow_index(&self) -> Option<usize> {
        match &self.inner {
            Inner::BirthDeath(m) => Some(m.overflow_index()),
            Inner::SirCohort(_) => None,
            Inner::PureBirth(m) => Some(m.overflow_index()),
        }
    }

    /// Allowed deviation of the total mass from one.
    pub fn tol_sum(&self) -> f64 {
        match self.inner {
            Inner::PureBirth(_) => crate::models::pure_birth::SUM_TOL,
            _ => 1e-9,
        }
    }

    /// Empty population for birth-death and pure-birth; the fully
    /// susceptible cohort `|N, 0>` for the epidemic.
    pub fn initial(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        let start = match &self.inner {
            Inner::SirCohort(m) => {
                let n = m.space().cohort_size();
                m.space().index(n, 0).expect("the fully susceptible state exists")
            }
            _ => 0,
        };
        v[start] = 1.0;
        v
    }

    /// `n`, `overflow`, or `S:I`.
    pub fn state_label(&self, index: usize) -> String {
        match &self.inner {
            Inner::SirCohort(m) => match m.space().state(index) {
                Some((s, i)) => format!("{s}:{i}"),
                None => index.to_string(),
            },
            _ if Some(index) == self.overflow_index() => "overflow".to_string(),
            _ => index.to_string(),
        }
    }

    pub fn has_oracle(&self) -> bool {
        !matches!(self.inner, Inner::PureBirth(_))
    }

    /// Distribution at `t` from [`initial`](Self::initial) by the product of
    /// exponentials, with the Krylov matrix-vector count.
    pub fn wei_norman(&self, t: f64) -> Result<(Vec<f64>, usize)> {
        match (&self.inner, &self.factorization) {
            (Inner::PureBirth(m), _) => {
                let sol = m.solve_delta0(t)?;
                Ok((sol.distribution.into_values(), sol.matvecs))
            }
            (_, Some(u)) => {
                let out = u.apply(t, &self.initial(), &self.krylov)?;
                Ok((out.vector, out.matvecs))
            }
            (_, None) => unreachable!("factorization is built for every model except pure birth"),
        }
    }

    /// Closed-form distribution at `t`.
    pub fn oracle(&self, t: f64) -> Result<Vec<f64>> {
        match &self.inner {
            Inner::BirthDeath(m) => Ok(m.poisson_solution(t)?.into_values()),
            Inner::SirCohort(m) => Ok(m.multinomial_solution(t)?.into_values()),
            Inner::PureBirth(_) => Err(Error::Config("pure-birth has no closed-form oracle".into())),
        }
    }

    /// `f_1..f_m` at `t`; `None` for models without such curves.
    pub fn pure_birth_f(&self, t: f64) -> Option<Result<Vec<f64>>> {
        match &self.inner {
            Inner::PureBirth(m) => Some(m.coefficients(t).map(|c| c.f)),
            _ => None,
        }
    }

    pub fn verify(&self) -> Result<AlgebraReport> {
        match &self.inner {
            Inner::BirthDeath(m) => m.verify_algebra(),
            Inner::SirCohort(m) => m.verify_tables(&EXP_AD_POINTS, EXP_AD_TOL),
            Inner::PureBirth(m) => m.verify_commutation(DEFAULT_MARGIN),
        }
    }

    fn checked(&self, values: Vec<f64>) -> Result<Vec<f64>> {
        Ok(ProbabilityVector::new(values, self.overflow_index(), self.tol_sum())?.into_values())
    }
}

/// Distributions at each query time by one method.
pub fn solve_with(model: &SolverModel, method: Method, times: &[f64], euler_dt: f64) -> Result<Vec<Vec<f64>>> {
    let p0 = model.initial();
    let raw: Vec<Vec<f64>> = match method {
        Method::WeiNorman => times
            .iter()
            .map(|&t| model.wei_norman(t).map(|(v, _)| v))
            .collect::<Result<_>>()?,
        Method::Rk45 => rk45_solve_at(model.family(), &p0, 0.0, times, OdeOptions::default())?
            .into_iter()
            .map(|(v, _)| v)
            .collect(),
        Method::Euler => {
            let mut out = Vec::with_capacity(times.len());
            let (mut t_prev, mut p) = (0.0, p0);
            for &t in times {
                p = euler_solve(model.family(), &p, t_prev, t, euler_dt)?.values;
                t_prev = t;
                out.push(p.clone());
            }
            out
        }
        Method::Oracle => times.iter().map(|&t| model.oracle(t)).collect::<Result<_>>()?,
        Method::All => unreachable!("`all` is expanded by the caller"),
    };
    raw.into_iter().map(|v| model.checked(v)).collect()
}

fn expand(method: Method, model: &SolverModel) -> Result<Vec<Method>> {
    match method {
        Method::All => {
            let mut list = vec![Method::WeiNorman, Method::Rk45, Method::Euler];
            if model.has_oracle() {
                list.push(Method::Oracle);
            }
            Ok(list)
        }
        Method::Oracle if !model.has_oracle() => Err(Error::Config(format!(
            "method `oracle` is not available for {}",
            model.kind()
        ))),
        m => Ok(vec![m]),
    }
}

/// Distribution CSV: `t,state,p`, or `method,t,state,p` for `all`. Rows are
/// time-major with states in index order.
pub fn cmd_solve(cfg: &RunConfig) -> Result<String> {
    let model = SolverModel::build(&cfg.params, cfg.tol)?;
    let methods = expand(cfg.method, &model)?;
    let tagged = cfg.method == Method::All;
    let mut csv = String::from(if tagged { "method,t,state,p\n" } else { "t,state,p\n" });
    for method in methods {
        let solutions = solve_with(&model, method, &cfg.times, cfg.euler_dt)?;
        for (t, p) in cfg.times.iter().zip(&solutions) {
            for (idx, value) in p.iter().enumerate() {
                if tagged {
                    write!(csv, "{method},").expect("writing to a String cannot fail");
                }
                writeln!(csv, "{t},{},{value}", model.state_label(idx)).expect("writing to a String cannot fail");
            }
        }
    }
    Ok(csv)
}

/// Runs every algebraic identity check for the configured model.
pub fn cmd_verify(cfg: &RunConfig) -> Result<AlgebraReport> {
    SolverModel::build(&cfg.params, cfg.tol)?.verify()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::from_toml;

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "wei-norman",
            "bench",
            "--model",
            "pure-birth",
            "--times",
            "1,2",
            "--reps",
            "2",
            "--param",
            "m=10",
        ])
        .unwrap();
        match cli.command {
            Command::Bench(args) => {
                assert_eq!(args.reps, Some(2));
                assert_eq!(args.common.params, vec!["m=10".to_string()]);
            }
            other => panic!("parsed as {other:?}"),
        }
    }

    #[test]
    fn labels() {
        let bd = from_toml("model = \"birth-death\"\nn_max = 5", Purpose::Solve).unwrap();
        let m = SolverModel::build(&bd.params, 1e-10).unwrap();
        assert_eq!(m.state_label(0), "0");
        assert_eq!(m.state_label(4), "overflow");
        let sir = from_toml("model = \"sir-cohort\"\nN = 2", Purpose::Solve).unwrap();
        let m = SolverModel::build(&sir.params, 1e-10).unwrap();
        let labels: Vec<String> = (0..m.dim()).map(|i| m.state_label(i)).collect();
        assert_eq!(labels, ["2:0", "1:0", "1:1", "0:0", "0:1", "0:2"]);
        assert_eq!(m.initial()[0], 1.0);
    }

    #[test]
    fn oracle_unavailable_for_pure_birth() {
        let cfg = from_toml("model = \"pure-birth\"\nm = 5\nmethod = \"oracle\"", Purpose::Solve).unwrap();
        assert!(matches!(cmd_solve(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::TooManySteps(3)), EXIT_SOLVER);
    }
}
