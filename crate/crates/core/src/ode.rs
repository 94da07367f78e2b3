//! Direct integration of the forward equation `dp/dt = H(t) p`: an adaptive
//! Dormand-Prince 4(5) integrator and fixed-step explicit Euler.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rates::RateFunction;
use crate::sparse::SparseGenerator;

/// Componentwise floor below which a probability entry counts as negative.
pub const NEGATIVE_FLOOR: f64 = -1e-12;

/// A distribution over a (possibly truncated) state space. When the space is
/// truncated, `overflow_index` names the component that holds the probability
/// of having left the tracked range.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    overflow_index: Option<usize>,
    tol_sum: f64,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>, overflow_index: Option<usize>, tol_sum: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty probability vector".into()));
        }
        if let Some(k) = overflow_index {
            if k >= values.len() {
                return Err(Error::InvalidArgument(format!(
                    "overflow index {k} outside vector of length {}",
                    values.len()
                )));
            }
        }
        if !(tol_sum >= 0.0) {
            return Err(Error::InvalidArgument(format!("sum tolerance must be nonnegative, got {tol_sum}")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= NEGATIVE_FLOOR)) {
            return Err(Error::InvalidArgument(format!("component {i} is {v:e}, not a probability")));
        }
        let total: f64 = values.iter().sum();
        if (1.0 - total).abs() > tol_sum {
            return Err(Error::InvalidArgument(format!(
                "components sum to {total}, off by more than {tol_sum:e}"
            )));
        }
        Ok(Self {
            values,
            overflow_index,
            tol_sum,
        })
    }

    /// Point mass on state `k`.
    pub fn delta(len: usize, k: usize, overflow_index: Option<usize>) -> Result<Self> {
        if k >= len {
            return Err(Error::InvalidArgument(format!("state {k} outside vector of length {len}")));
        }
        let mut values = vec![0.0; len];
        values[k] = 1.0;
        Self::new(values, overflow_index, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn overflow_index(&self) -> Option<usize> {
        self.overflow_index
    }

    pub fn tol_sum(&self) -> f64 {
        self.tol_sum
    }

    pub fn overflow_mass(&self) -> f64 {
        self.overflow_index.map_or(0.0, |k| self.values[k])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn linf_distance(&self, other: &[f64]) -> Result<f64> {
        linf_distance(&self.values, other)
    }
}

pub fn linf_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// A time-dependent generator `H(t)` seen only through its action on vectors.
pub trait TimeGenerator: Send + Sync {
    fn dim(&self) -> usize;

    /// `y = H(t) x`.
    fn apply(&self, t: f64, x: &[f64], y: &mut [f64]);
}

/// `H(t) = sum_i r_i(t) H_i` with every `H_i` scattered onto one merged
/// sparsity pattern, so each evaluation only rescales and sums weights.
#[derive(Debug, Clone)]
pub struct GeneratorFamily {
    dim: usize,
    rates: Vec<RateFunction>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    // weights[k * terms + i] is the entry of H_i at pattern position k
    weights: Vec<f64>,
}

impl GeneratorFamily {
    pub fn new(dim: usize, terms: Vec<(RateFunction, SparseGenerator)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("generator family needs at least one term".into()));
        }
        let n = terms.len();
        let mut pattern: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for (i, (_, h)) in terms.iter().enumerate() {
            if h.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: h.dim(),
                });
            }
            for (r, c, v) in h.triplets() {
                pattern.entry((r, c)).or_insert_with(|| vec![0.0; n])[i] = v;
            }
        }
        let mut row_ptr = vec![0; dim + 1];
        let mut col_idx = Vec::with_capacity(pattern.len());
        let mut weights = Vec::with_capacity(pattern.len() * n);
        for ((r, c), w) in pattern {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            weights.extend(w);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            dim,
            rates: terms.into_iter().map(|(r, _)| r).collect(),
            row_ptr,
            col_idx,
            weights,
        })
    }

    pub fn rates(&self) -> &[RateFunction] {
        &self.rates
    }

    /// The assembled matrix `H(t)`.
    pub fn at(&self, t: f64) -> SparseGenerator {
        let r: Vec<f64> = self.rates.iter().map(|f| f.eval(t)).collect();
        let n = r.len();
        let triplets = (0..self.dim).flat_map(|row| {
            (self.row_ptr[row]..self.row_ptr[row + 1]).map(move |k| (row, k))
        });
        let triplets: Vec<(usize, usize, f64)> = triplets
            .map(|(row, k)| {
                let v = self.weights[k * n..(k + 1) * n].iter().zip(&r).map(|(w, ri)| w * ri).sum();
                (row, self.col_idx[k], v)
            })
            .collect();
        SparseGenerator::from_triplets(self.dim, triplets).expect("pattern indices are in range")
    }
}

impl TimeGenerator for GeneratorFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, t: f64, x: &[f64], y: &mut [f64]) {
        let n = self.rates.len();
        let mut buf = [0.0f64; 8];
        let heap: Vec<f64>;
        let r: &[f64] = if n <= buf.len() {
            for (ri, f) in buf.iter_mut().zip(&self.rates) {
                *ri = f.eval(t);
            }
            &buf[..n]
        } else {
            heap = self.rates.iter().map(|f| f.eval(t)).collect();
            &heap
        };
        for (row, out) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0.0;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                let w = &self.weights[k * n..(k + 1) * n];
                let coeff: f64 = w.iter().zip(r).map(|(a, b)| a * b).sum();
                acc += coeff * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }
}

/// Adapts a closure `t -> H(t)` into a [`TimeGenerator`]; the matrix is rebuilt
/// at every evaluation.
pub struct FnGenerator<F> {
    dim: usize,
    f: F,
}

impl<F> FnGenerator<F>
where
    F: Fn(f64) -> SparseGenerator + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> TimeGenerator for FnGenerator<F>
where
    F: Fn(f64) -> SparseGenerator + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, t: f64, x: &[f64], y: &mut [f64]) {
        (self.f)(t).matvec_into(x, y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: None,
            max_steps: 50_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOutput {
    pub values: Vec<f64>,
    pub stats: OdeStats,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn check_problem(h: &dyn TimeGenerator, p0: &[f64], t0: f64, t_end: f64) -> Result<()> {
    if p0.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: p0.len(),
        });
    }
    if !(t_end >= t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "integration interval [{t0}, {t_end}] is not a finite forward interval"
        )));
    }
    Ok(())
}

/// Adaptive Dormand-Prince 4(5) integration of `dp/dt = H(t) p` from `t0` to
/// `t_end`, with the usual mixed error norm `atol + rtol * |p_i|` and FSAL.
pub fn rk45_solve(h: &dyn TimeGenerator, p0: &[f64], t0: f64, t_end: f64, opts: OdeOptions) -> Result<OdeOutput> {
    let (values, stats) = rk45_solve_at(h, p0, t0, &[t_end], opts)?
        .pop()
        .expect("one output per requested time");
    Ok(OdeOutput { values, stats })
}

/// As [`rk45_solve`], stopping exactly at each of the sorted `times` and
/// returning the state and cumulative statistics there.
pub fn rk45_solve_at(
    h: &dyn TimeGenerator,
    p0: &[f64],
    t0: f64,
    times: &[f64],
    opts: OdeOptions,
) -> Result<Vec<(Vec<f64>, OdeStats)>> {
    let last = times.last().copied().unwrap_or(t0);
    check_problem(h, p0, t0, last)?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidArgument("output times must be sorted and not before t0".into()));
    }
    if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need rtol > 0 and atol >= 0 (got {}, {})",
            opts.rtol, opts.atol
        )));
    }
    let n = p0.len();
    let mut y = p0.to_vec();
    let mut t = t0;
    let mut stats = OdeStats::default();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    h.apply(t, &y, &mut k[0]);
    stats.rhs_evals += 1;

    let mut step = match opts.initial_step {
        Some(s) if s > 0.0 => s,
        _ => initial_step(&y, &k[0], opts),
    };
    let mut results = Vec::with_capacity(times.len());
    let mut rejected_last = false;
    for &target in times {
        while t < target {
            if stats.accepted_steps + stats.rejected_steps >= opts.max_steps {
                return Err(Error::TooManySteps(opts.max_steps));
            }
            let mut hh = step.min(target - t);
            // avoid leaving a sliver step before the target
            if target - (t + hh) < 1e-12 * hh.max(target.abs() * f64::EPSILON) {
                hh = target - t;
            }
            if hh <= 16.0 * f64::EPSILON * t.abs().max(1.0) && t + hh < target {
                return Err(Error::StepSizeUnderflow { t, h: hh });
            }
            let [k1, k2, k3, k4, k5, k6, k7] = &mut k;
            for i in 0..n {
                stage[i] = y[i] + hh * A21 * k1[i];
            }
            h.apply(t + C2 * hh, &stage, k2);
            for i in 0..n {
                stage[i] = y[i] + hh * (A31 * k1[i] + A32 * k2[i]);
            }
            h.apply(t + C3 * hh, &stage, k3);
            for i in 0..n {
                stage[i] = y[i] + hh * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            h.apply(t + C4 * hh, &stage, k4);
            for i in 0..n {
                stage[i] = y[i] + hh * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            h.apply(t + C5 * hh, &stage, k5);
            for i in 0..n {
                stage[i] = y[i] + hh * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_next = if hh == target - t { target } else { t + hh };
            h.apply(t_next, &stage, k6);
            for i in 0..n {
                y_new[i] = y[i] + hh * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            h.apply(t_next, &y_new, k7);
            stats.rhs_evals += 6;

            let mut err = 0.0;
            for i in 0..n {
                let e = hh * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / n as f64).sqrt();
            if err <= 1.0 {
                stats.accepted_steps += 1;
                t = t_next;
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(k1, k7);
                let mut factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if rejected_last {
                    factor = factor.min(1.0);
                }
                rejected_last = false;
                // only grow from a full step, not from one clipped at a target
                step = if hh < step { step.max(hh * factor) } else { hh * factor };
            } else {
                stats.rejected_steps += 1;
                rejected_last = true;
                step = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        results.push((y.clone(), stats));
    }
    Ok(results)
}

fn initial_step(y: &[f64], f0: &[f64], opts: OdeOptions) -> f64 {
    let n = y.len() as f64;
    let (mut d0, mut d1) = (0.0, 0.0);
    for (yi, fi) in y.iter().zip(f0) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

/// Fixed-step explicit Euler `p <- p + dt H(t) p`; the final step is shortened
/// to land on `t_end`.
pub fn euler_solve(h: &dyn TimeGenerator, p0: &[f64], t0: f64, t_end: f64, dt: f64) -> Result<OdeOutput> {
    check_problem(h, p0, t0, t_end)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("Euler step must be positive, got {dt}")));
    }
    let n = p0.len();
    let mut y = p0.to_vec();
    let mut dy = vec![0.0; n];
    let span = t_end - t0;
    let full = (span / dt).floor() as usize;
    let remainder = span - full as f64 * dt;
    let mut stats = OdeStats::default();
    let mut advance = |t: f64, step: f64, y: &mut Vec<f64>| {
        h.apply(t, y, &mut dy);
        for i in 0..n {
            y[i] += step * dy[i];
        }
        stats.accepted_steps += 1;
        stats.rhs_evals += 1;
    };
    for s in 0..full {
        advance(t0 + s as f64 * dt, dt, &mut y);
    }
    if remainder > 1e-12 * dt {
        advance(t0 + full as f64 * dt, remainder, &mut y);
    }
    Ok(OdeOutput { values: y, stats })
}
