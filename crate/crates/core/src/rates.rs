//! Parametric nonnegative rate functions of time.
//!
//! Every variant has a closed-form antiderivative on `[0, t]` and reports its
//! jump discontinuities so that quadrature can split there. The canonical
//! text form (used by the CLI) is:
//!
//! | variant     | text                                  |
//! |-------------|---------------------------------------|
//! | constant    | `constant:1.0`                        |
//! | exponential | `exp:<base>,<growth>`                 |
//! | rational    | `rational` or `rational:<c>` (c/(1+t)) |
//! | square wave | `square:<low>,<high>,<period>,<duty>` |
//! | piecewise   | `piecewise:<t1>,<t2>;<f0>;<f1>;<f2>`  |
//!
//! A square wave is high on the centred window
//! `[kP + (1-duty)P/2, kP + (1+duty)P/2)` of each period and low elsewhere.
//! Piecewise sub-functions are evaluated at absolute time and may not nest.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Constant(f64),
    /// `base * e^{growth t}`
    Exponential { base: f64, growth: f64 },
    /// `scale / (1 + t)`
    Rational { scale: f64 },
    SquareWave { low: f64, high: f64, period: f64, duty: f64 },
    /// `pieces[j]` applies on `[breakpoints[j-1], breakpoints[j])`.
    Piecewise { breakpoints: Vec<f64>, pieces: Vec<RateFunction> },
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

impl RateFunction {
    pub fn constant(c: f64) -> Result<Self> {
        check_nonneg("constant rate", c)?;
        Ok(Self::Constant(c))
    }

    pub fn exponential(base: f64, growth: f64) -> Result<Self> {
        check_nonneg("exponential base", base)?;
        if !growth.is_finite() {
            return Err(Error::InvalidArgument(format!("growth rate must be finite, got {growth}")));
        }
        Ok(Self::Exponential { base, growth })
    }

    pub fn rational(scale: f64) -> Result<Self> {
        check_nonneg("rational scale", scale)?;
        Ok(Self::Rational { scale })
    }

    pub fn square_wave(low: f64, high: f64, period: f64, duty: f64) -> Result<Self> {
        check_nonneg("square-wave low level", low)?;
        check_nonneg("square-wave high level", high)?;
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
        }
        if !(0.0..=1.0).contains(&duty) {
            return Err(Error::InvalidArgument(format!("duty must lie in [0, 1], got {duty}")));
        }
        Ok(Self::SquareWave { low, high, period, duty })
    }

    pub fn piecewise(breakpoints: Vec<f64>, pieces: Vec<RateFunction>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        if breakpoints.iter().any(|b| !(b.is_finite() && *b > 0.0)) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("breakpoints must be positive and strictly increasing".into()));
        }
        if pieces.iter().any(|p| matches!(p, Self::Piecewise { .. })) {
            return Err(Error::InvalidArgument("piecewise functions may not nest".into()));
        }
        Ok(Self::Piecewise { breakpoints, pieces })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Exponential { base, growth } => base * (growth * t).exp(),
            Self::Rational { scale } => scale / (1.0 + t),
            Self::SquareWave { low, high, period, duty } => {
                let phase = t.rem_euclid(*period);
                let (on, off) = square_window(*period, *duty);
                if phase >= on && phase < off {
                    *high
                } else {
                    *low
                }
            }
            Self::Piecewise { breakpoints, pieces } => {
                let j = breakpoints.partition_point(|&b| b <= t);
                pieces[j].eval(t)
            }
        }
    }

    /// Jump discontinuities strictly inside `(a, b)`, sorted.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Self::Constant(_) | Self::Exponential { .. } | Self::Rational { .. } => Vec::new(),
            Self::SquareWave { low, high, period, duty } => {
                if low == high || *duty <= 0.0 || *duty >= 1.0 || b <= a {
                    return Vec::new();
                }
                let (on, off) = square_window(*period, *duty);
                let mut out = Vec::new();
                let mut k = (a / period).floor() - 1.0;
                loop {
                    let base = k * period;
                    if base + on >= b {
                        break;
                    }
                    for edge in [base + on, base + off] {
                        if edge > a && edge < b {
                            out.push(edge);
                        }
                    }
                    k += 1.0;
                }
                out
            }
            Self::Piecewise { breakpoints, pieces } => {
                let mut out = Vec::new();
                let mut lo = f64::NEG_INFINITY;
                for (j, piece) in pieces.iter().enumerate() {
                    let hi = breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
                    let (sa, sb) = (a.max(lo), b.min(hi));
                    if sa < sb {
                        out.extend(piece.breakpoints_in(sa, sb));
                    }
                    if hi > a && hi < b {
                        out.push(hi);
                    }
                    lo = hi;
                }
                out.sort_by(f64::total_cmp);
                out.dedup();
                out
            }
        }
    }

    /// `int_0^t f(u) du` in closed form.
    pub fn antiderivative(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => c * t,
            Self::Exponential { base, growth } => {
                if *growth == 0.0 {
                    base * t
                } else {
                    base * (growth * t).exp_m1() / growth
                }
            }
            Self::Rational { scale } => scale * t.ln_1p(),
            Self::SquareWave { low, high, period, duty } => {
                let (on, off) = square_window(*period, *duty);
                let cycles = (t / period).floor();
                let phase = t - cycles * period;
                let high_time = cycles * (off - on) + (phase.min(off) - on).max(0.0);
                low * t + (high - low) * high_time
            }
            Self::Piecewise { breakpoints, pieces } => {
                let mut total = 0.0;
                let mut lo = 0.0;
                for (j, piece) in pieces.iter().enumerate() {
                    let hi = breakpoints.get(j).copied().unwrap_or(f64::INFINITY).min(t);
                    if hi > lo {
                        total += piece.antiderivative(hi) - piece.antiderivative(lo);
                    }
                    lo = lo.max(hi);
                    if lo >= t {
                        break;
                    }
                }
                total
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Self::Constant(c) => *c == 0.0,
            Self::Exponential { base, .. } => *base == 0.0,
            Self::Rational { scale } => *scale == 0.0,
            Self::SquareWave { low, high, duty, .. } => *low == 0.0 && (*high == 0.0 || *duty == 0.0),
            Self::Piecewise { pieces, .. } => pieces.iter().all(Self::is_identically_zero),
        }
    }
}

fn square_window(period: f64, duty: f64) -> (f64, f64) {
    (0.5 * period * (1.0 - duty), 0.5 * period * (1.0 + duty))
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "constant:{c}"),
            Self::Exponential { base, growth } => write!(f, "exp:{base},{growth}"),
            Self::Rational { scale } => {
                if *scale == 1.0 {
                    write!(f, "rational")
                } else {
                    write!(f, "rational:{scale}")
                }
            }
            Self::SquareWave { low, high, period, duty } => write!(f, "square:{low},{high},{period},{duty}"),
            Self::Piecewise { breakpoints, pieces } => {
                let bps: Vec<String> = breakpoints.iter().map(f64::to_string).collect();
                write!(f, "piecewise:{}", bps.join(","))?;
                for p in pieces {
                    write!(f, ";{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for RateFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let input = s.trim();
        let err = |reason: &str| Error::RateParse {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let (kind, args) = match input.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (input, None),
        };
        let numbers = |a: Option<&str>, n: usize| -> Result<Vec<f64>> {
            let a = a.ok_or_else(|| err(&format!("expected {n} comma-separated numbers")))?;
            let vals: Vec<f64> = a
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(&e.to_string()))?;
            if vals.len() != n {
                return Err(err(&format!("expected {n} numbers, got {}", vals.len())));
            }
            Ok(vals)
        };
        let wrap = |r: Result<Self>| r.map_err(|e| err(&e.to_string()));
        match kind {
            "constant" => wrap(Self::constant(numbers(args, 1)?[0])),
            "exp" => {
                let v = numbers(args, 2)?;
                wrap(Self::exponential(v[0], v[1]))
            }
            "rational" => match args {
                None => wrap(Self::rational(1.0)),
                Some(_) => wrap(Self::rational(numbers(args, 1)?[0])),
            },
            "square" => {
                let v = numbers(args, 4)?;
                wrap(Self::square_wave(v[0], v[1], v[2], v[3]))
            }
            "piecewise" => {
                let a = args.ok_or_else(|| err("missing breakpoints and pieces"))?;
                let mut parts = a.split(';');
                let bps = parts.next().unwrap_or("").trim();
                let breakpoints: Vec<f64> = if bps.is_empty() {
                    Vec::new()
                } else {
                    bps.split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| err(&e.to_string()))?
                };
                let pieces: Vec<RateFunction> = parts.map(str::parse).collect::<Result<_>>()?;
                wrap(Self::piecewise(breakpoints, pieces))
            }
            other => Err(err(&format!("unknown rate kind `{other}`"))),
        }
    }
}
