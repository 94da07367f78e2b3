//! Wall-time comparison of the factorized solver with direct integration
//! across model times.

use std::fmt::Write as _;
use std::time::Instant;

use crate::cli::config::{Method, RunConfig};
use crate::cli::SolverModel;
use crate::error::Result;
use crate::ode::{euler_solve, linf_distance, rk45_solve, OdeOptions};

/// Integrator settings for the pure-birth reference distribution.
pub const REFERENCE_RTOL: f64 = 1e-12;
pub const REFERENCE_ATOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub model: String,
    pub method: Method,
    pub t: f64,
    /// Minimum over the repetitions; NaN when the method failed.
    pub wall_seconds: f64,
    pub linf_vs_ref: f64,
    /// Krylov matrix-vector products, right-hand-side evaluations or Euler
    /// steps, depending on the method.
    pub work_units: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutput {
    pub records: Vec<BenchRecord>,
    /// `(t, i, f_i(t))` for pure birth.
    pub curves: Option<Vec<(f64, usize, f64)>>,
    /// One message per failed cell.
    pub failures: Vec<String>,
}

impl BenchOutput {
    pub fn records_csv(&self) -> String {
        let mut csv = String::from("model,method,t,wall_seconds,linf_vs_ref,work_units\n");
        for r in &self.records {
            writeln!(
                csv,
                "{},{},{},{:e},{:e},{}",
                r.model, r.method, r.t, r.wall_seconds, r.linf_vs_ref, r.work_units
            )
            .expect("writing to a String cannot fail");
        }
        csv
    }

    pub fn curves_csv(&self) -> String {
        let mut csv = String::from("t,i,f\n");
        for (t, i, f) in self.curves.iter().flatten() {
            writeln!(csv, "{t},{i},{f}").expect("writing to a String cannot fail");
        }
        csv
    }

    pub fn record(&self, method: Method, t: f64) -> Option<&BenchRecord> {
        self.records.iter().find(|r| r.method == method && r.t == t)
    }
}

/// Methods timed for a configured method: the factorized solver and rk45
/// always, plus the configured one.
pub fn bench_methods(method: Method, has_oracle: bool) -> Vec<Method> {
    let mut list = vec![Method::WeiNorman, Method::Rk45];
    match method {
        Method::All => {
            list.push(Method::Euler);
            if has_oracle {
                list.push(Method::Oracle);
            }
        }
        Method::Euler => list.push(Method::Euler),
        Method::Oracle if has_oracle => list.push(Method::Oracle),
        _ => {}
    }
    list
}

/// Times each method at each configured time, sequentially on the calling
/// thread. Model assembly and the reference solution are outside the timers.
/// A failing cell is recorded with NaN timings and the run continues.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchOutput> {
    let model = SolverModel::build(&cfg.params, cfg.tol)?;
    let methods = bench_methods(cfg.method, model.has_oracle());
    let p0 = model.initial();
    let name = model.kind().to_string();
    let mut out = BenchOutput::default();

    for &t in &cfg.times {
        let reference = if model.has_oracle() {
            model.oracle(t)
        } else {
            let opts = OdeOptions::with_tolerances(REFERENCE_RTOL, REFERENCE_ATOL);
            rk45_solve(model.family(), &p0, 0.0, t, opts).map(|o| o.values)
        };
        for &method in &methods {
            let cell = reference.as_ref().map_err(|e| e.to_string()).and_then(|reference| {
                time_cell(&model, method, t, cfg, &p0)
                    .map(|(secs, p, work)| (secs, p, work, reference))
                    .map_err(|e| e.to_string())
            });
            let record = match cell {
                Ok((wall_seconds, p, work_units, reference)) => BenchRecord {
                    model: name.clone(),
                    method,
                    t,
                    wall_seconds,
                    linf_vs_ref: linf_distance(&p, reference)?,
                    work_units,
                },
                Err(msg) => {
                    out.failures.push(format!("{name} {method} t={t}: {msg}"));
                    BenchRecord {
                        model: name.clone(),
                        method,
                        t,
                        wall_seconds: f64::NAN,
                        linf_vs_ref: f64::NAN,
                        work_units: 0,
                    }
                }
            };
            out.records.push(record);
        }
    }

    if let Some(Ok(_)) = model.pure_birth_f(0.0) {
        let mut curves = Vec::new();
        for &t in &cfg.times {
            match model.pure_birth_f(t).expect("pure-birth model has curves") {
                Ok(f) => curves.extend(f.into_iter().enumerate().map(|(i, fi)| (t, i + 1, fi))),
                Err(e) => out.failures.push(format!("{name} f_i t={t}: {e}")),
            }
        }
        out.curves = Some(curves);
    }
    Ok(out)
}

/// Minimum wall time over the repetitions, with the last solution and its
/// work count.
fn time_cell(model: &SolverModel, method: Method, t: f64, cfg: &RunConfig, p0: &[f64]) -> Result<(f64, Vec<f64>, usize)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..cfg.reps {
        let start = Instant::now();
        let (p, work) = match method {
            Method::WeiNorman => model.wei_norman(t)?,
            Method::Rk45 => {
                let o = rk45_solve(model.family(), p0, 0.0, t, OdeOptions::default())?;
                (o.values, o.stats.rhs_evals)
            }
            Method::Euler => {
                let o = euler_solve(model.family(), p0, 0.0, t, cfg.euler_dt)?;
                (o.values, o.stats.accepted_steps)
            }
            Method::Oracle => (model.oracle(t)?, 0),
            Method::All => unreachable!("bench methods are expanded"),
        };
        best = best.min(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
        last = Some((p, work));
    }
    let (p, work) = last.expect("at least one repetition");
    Ok((best, p, work))
}
