//! Adaptive Gauss-Kronrod (G7/K15) quadrature split at known discontinuities,
//! plus the cumulative and weighted integrals of rate functions that feed the
//! factorization coefficients.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::rates::RateFunction;

/// Absolute-or-relative error target: a component converges once its error
/// estimate is below `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-10 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Result<Self> {
        if !(abs >= 0.0 && rel >= 0.0 && (abs > 0.0 || rel > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "quadrature tolerance needs abs >= 0, rel >= 0, one positive (got {abs}, {rel})"
            )));
        }
        Ok(Self { abs, rel })
    }

    pub fn absolute(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }

    fn allowed(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_SUBDIVISIONS: usize = 20_000;

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    splittable: bool,
}

/// One G7/K15 panel for a vector-valued integrand, QUADPACK error scaling.
fn gk15(f: &impl Fn(f64, &mut [f64]), dim: usize, a: f64, b: f64, fvals: &mut [Vec<f64>; 15]) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    f(centre, &mut fvals[0]);
    for j in 0..7 {
        let dx = half * XGK[j];
        let (lo, hi) = fvals.split_at_mut(1 + 2 * j + 1);
        f(centre - dx, &mut lo[1 + 2 * j]);
        f(centre + dx, &mut hi[0]);
    }
    let mut value = vec![0.0; dim];
    let mut error = vec![0.0; dim];
    for c in 0..dim {
        let fc = fvals[0][c];
        let mut resk = WGK[7] * fc;
        let mut resg = WG[3] * fc;
        let mut resabs = (WGK[7] * fc).abs();
        for j in 0..7 {
            let (f1, f2) = (fvals[1 + 2 * j][c], fvals[2 + 2 * j][c]);
            resk += WGK[j] * (f1 + f2);
            resabs += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                resg += WG[j / 2] * (f1 + f2);
            }
        }
        let mean = 0.5 * resk;
        let mut resasc = WGK[7] * (fc - mean).abs();
        for j in 0..7 {
            resasc += WGK[j] * ((fvals[1 + 2 * j][c] - mean).abs() + (fvals[2 + 2 * j][c] - mean).abs());
        }
        let (resk, resabs, resasc) = (resk * half.abs(), resabs * half.abs(), resasc * half.abs());
        let mut err = ((resk - resg * half.abs()) * 1.0).abs();
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        value[c] = resk * half.signum();
        error[c] = err;
    }
    let width = b - a;
    Panel {
        a,
        b,
        value,
        error,
        splittable: width > 1e-13 * a.abs().max(b.abs()).max(1e-300) && width > 0.0,
    }
}

/// Integrates a vector-valued `f` over `[a, b]`, splitting at `breakpoints`
/// first and then bisecting the panel with the worst normalized error until
/// every component meets `tol`.
pub fn integrate_vec(
    f: impl Fn(f64, &mut [f64]),
    dim: usize,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Vec<f64>> {
    if !(a <= b) {
        return Err(Error::InvalidArgument(format!("integration bounds must satisfy a <= b (got {a}, {b})")));
    }
    if a == b || dim == 0 {
        return Ok(vec![0.0; dim]);
    }
    let mut edges: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges.insert(0, a);
    edges.push(b);

    let mut fvals: [Vec<f64>; 15] = std::array::from_fn(|_| vec![0.0; dim]);
    let panels: Vec<Panel> = edges.windows(2).map(|w| gk15(&f, dim, w[0], w[1], &mut fvals)).collect();
    let mut totals = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    for p in &panels {
        accumulate(&mut totals, &mut errors, p, 1.0);
    }
    let mut heap: BinaryHeap<Ranked> = panels
        .iter()
        .enumerate()
        .filter(|(_, p)| p.splittable)
        .map(|(i, p)| Ranked(score(p, &totals, tol), i))
        .collect();
    let mut live: Vec<Option<Panel>> = panels.into_iter().map(Some).collect();
    let mut splits = 0;
    loop {
        let allowed: Vec<f64> = totals.iter().map(|&v| tol.allowed(v)).collect();
        if errors.iter().zip(&allowed).all(|(e, al)| e <= al) {
            // re-sum from scratch so that cancellation in the running sums
            // cannot fake convergence
            totals.iter_mut().for_each(|x| *x = 0.0);
            errors.iter_mut().for_each(|x| *x = 0.0);
            for p in live.iter().flatten() {
                accumulate(&mut totals, &mut errors, p, 1.0);
            }
            if errors.iter().zip(&totals).all(|(e, v)| *e <= tol.allowed(*v)) {
                return Ok(totals);
            }
        }
        let estimate = errors.iter().zip(&allowed).map(|(e, al)| e - al).fold(f64::NEG_INFINITY, f64::max);
        let Some(Ranked(_, i)) = heap.pop() else {
            return Err(Error::QuadratureNotConverged { a, b, estimate });
        };
        if splits >= MAX_SUBDIVISIONS {
            return Err(Error::QuadratureNotConverged { a, b, estimate });
        }
        splits += 1;
        let p = live[i].take().expect("heap entries refer to live panels");
        accumulate(&mut totals, &mut errors, &p, -1.0);
        let mid = 0.5 * (p.a + p.b);
        for half in [gk15(&f, dim, p.a, mid, &mut fvals), gk15(&f, dim, mid, p.b, &mut fvals)] {
            accumulate(&mut totals, &mut errors, &half, 1.0);
            if half.splittable {
                heap.push(Ranked(score(&half, &totals, tol), live.len()));
            }
            live.push(Some(half));
        }
    }
}

fn accumulate(totals: &mut [f64], errors: &mut [f64], p: &Panel, sign: f64) {
    for c in 0..totals.len() {
        totals[c] += sign * p.value[c];
        errors[c] += sign * p.error[c];
    }
}

/// Worst component error of a panel relative to the current error budget.
fn score(p: &Panel, totals: &[f64], tol: Tolerance) -> f64 {
    p.error
        .iter()
        .zip(totals)
        .map(|(e, v)| {
            let al = tol.allowed(*v);
            if al > 0.0 {
                e / al
            } else if *e > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

struct Ranked(f64, usize);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Scalar form of [`integrate_vec`].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breakpoints: &[f64], tol: Tolerance) -> Result<f64> {
    let v = integrate_vec(|u, out: &mut [f64]| out[0] = f(u), 1, a, b, breakpoints, tol)?;
    Ok(v[0])
}

/// `t -> int_0^t f(u) du`.
///
/// The default constructor uses the rate's closed-form antiderivative. The
/// [`CumulativeIntegral::numeric`] form integrates by quadrature instead and
/// caches a monotone grid of `(t, value)` pairs so that later queries only
/// integrate from the nearest cached point below them.
#[derive(Debug)]
pub struct CumulativeIntegral {
    source: RateFunction,
    tol: Tolerance,
    cache: Option<Mutex<Vec<(f64, f64)>>>,
}

impl Clone for CumulativeIntegral {
    fn clone(&self) -> Self {
        Self {
            source: self.source.clone(),
            tol: self.tol,
            cache: self
                .cache
                .as_ref()
                .map(|c| Mutex::new(c.lock().unwrap_or_else(|e| e.into_inner()).clone())),
        }
    }
}

impl CumulativeIntegral {
    pub fn new(source: RateFunction, tol: Tolerance) -> Self {
        Self {
            source,
            tol,
            cache: None,
        }
    }

    pub fn numeric(source: RateFunction, tol: Tolerance) -> Self {
        Self {
            source,
            tol,
            cache: Some(Mutex::new(vec![(0.0, 0.0)])),
        }
    }

    pub fn source(&self) -> &RateFunction {
        &self.source
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("cumulative integral needs t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let Some(cache) = &self.cache else {
            return Ok(self.source.antiderivative(t));
        };
        let mut grid = cache.lock().unwrap_or_else(|e| e.into_inner());
        let idx = grid.partition_point(|&(s, _)| s <= t);
        let (t0, v0) = grid[idx - 1];
        if t0 == t {
            return Ok(v0);
        }
        let increment = integrate(|u| self.source.eval(u), t0, t, &self.source.breakpoints_in(t0, t), self.tol)?;
        let v = v0 + increment;
        grid.insert(idx, (t, v));
        Ok(v)
    }

    /// Number of cached grid points (including the origin); zero for the
    /// closed-form variant.
    pub fn cached_points(&self) -> usize {
        self.cache
            .as_ref()
            .map_or(0, |c| c.lock().unwrap_or_else(|e| e.into_inner()).len())
    }
}

/// `int_0^t a(u) weight(u, t) du`, split at the discontinuities of `a`.
pub fn weighted_integral(a: &RateFunction, weight: impl Fn(f64, f64) -> f64, t: f64, tol: Tolerance) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("upper limit must be nonnegative, got {t}")));
    }
    integrate(
        |u| {
            let r = a.eval(u);
            if r == 0.0 {
                0.0
            } else {
                r * weight(u, t)
            }
        },
        0.0,
        t,
        &a.breakpoints_in(0.0, t),
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_integrand() {
        assert_eq!(integrate(|_| 0.0, 0.0, 5.0, &[], Tolerance::default()).unwrap(), 0.0);
    }

    #[test]
    fn reciprocal_gives_log() {
        for &t in &[0.5, 3.0, 100.0] {
            let v = integrate(|u| 1.0 / (1.0 + u), 0.0, t, &[], Tolerance::default()).unwrap();
            assert!((v - (1.0f64 + t).ln()).abs() < 1e-10 * (1.0f64 + t).ln());
        }
    }

    #[test]
    fn square_wave_area_with_breakpoints() {
        let sq = RateFunction::square_wave(0.0, 1.0, 2.0, 0.5).unwrap();
        let v = integrate(|u| sq.eval(u), 0.0, 3.0, &sq.breakpoints_in(0.0, 3.0), Tolerance::default()).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn fast_square_wave_is_exact_to_tol() {
        // 1000 periods on [0, 10]
        let sq = RateFunction::square_wave(0.0, 1.0, 0.01, 0.5).unwrap();
        let bps = sq.breakpoints_in(0.0, 10.0);
        assert_eq!(bps.len(), 2000);
        let v = integrate(|u| sq.eval(u), 0.0, 10.0, &bps, Tolerance::default()).unwrap();
        assert!((v - 5.0).abs() < 1e-10);
    }

    #[test]
    fn non_convergence_is_reported() {
        // oscillation far below the resolution the subdivision budget allows
        let r = integrate(|u| (1e9 * u).sin().signum(), 0.0, 1.0, &[], Tolerance::absolute(1e-14));
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }

    #[test]
    fn bad_bounds() {
        assert!(integrate(|u| u, 1.0, 0.0, &[], Tolerance::default()).is_err());
    }

    #[test]
    fn cumulative_constant() {
        let c = CumulativeIntegral::numeric(RateFunction::Constant(2.5), Tolerance::default());
        assert!((c.value(4.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(c.value(0.0).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_rational_and_exponential_numeric() {
        let r = CumulativeIntegral::numeric(RateFunction::rational(1.0).unwrap(), Tolerance::default());
        let e = CumulativeIntegral::numeric(RateFunction::exponential(0.1, 0.2).unwrap(), Tolerance::default());
        for &t in &[0.3, 1.0, 7.5, 20.0] {
            assert!((r.value(t).unwrap() - (1.0f64 + t).ln()).abs() < 1e-10);
            let expected = 0.1 / 0.2 * ((0.2 * t).exp() - 1.0);
            assert!((e.value(t).unwrap() - expected).abs() < 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn cumulative_cache_grows_and_is_reused() {
        let r = CumulativeIntegral::numeric(RateFunction::rational(1.0).unwrap(), Tolerance::default());
        let a = r.value(2.0).unwrap();
        assert_eq!(r.cached_points(), 2);
        assert_eq!(r.value(2.0).unwrap(), a);
        assert_eq!(r.cached_points(), 2);
        r.value(1.0).unwrap();
        r.value(3.0).unwrap();
        assert_eq!(r.cached_points(), 4);
    }

    #[test]
    fn closed_form_and_numeric_agree_for_piecewise() {
        let f: RateFunction = "piecewise:0.7,2.2;exp:1,0.3;square:0.2,1.5,0.3,0.4;rational:2".parse().unwrap();
        let exact = CumulativeIntegral::new(f.clone(), Tolerance::default());
        let numeric = CumulativeIntegral::numeric(f, Tolerance::default());
        for &t in &[0.5, 1.0, 2.2, 4.0] {
            assert!((exact.value(t).unwrap() - numeric.value(t).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_integral_cases() {
        let tol = Tolerance::default();
        let one = RateFunction::Constant(1.0);
        let t = 3.0;
        // weight 1 -> cumulative
        let w1 = weighted_integral(&RateFunction::rational(1.0).unwrap(), |_, _| 1.0, t, tol).unwrap();
        assert!((w1 - 4f64.ln()).abs() < 1e-10);
        // constant b with exponential decay weight
        let (b, d) = (2.0, 0.7);
        let w2 = weighted_integral(&RateFunction::Constant(b), |u, t| (-d * (t - u)).exp(), t, tol).unwrap();
        assert!((w2 - b / d * (1.0 - (-d * t).exp())).abs() < 1e-10);
        // second pure-birth coefficient under b = 1/(1+t)
        let w3 = weighted_integral(&one, |u, t| 1.0 - (1.0 + u) / (1.0 + t), t, tol).unwrap();
        assert!((w3 - t * t / (2.0 * (1.0 + t))).abs() < 1e-10);
    }

    #[test]
    fn cumulative_derivative_matches_rate() {
        let tol = Tolerance::new(0.0, 1e-13).unwrap();
        for f in [
            RateFunction::rational(1.0).unwrap(),
            RateFunction::exponential(0.3, 0.4).unwrap(),
            RateFunction::square_wave(0.5, 2.0, 1.0, 0.3).unwrap(),
        ] {
            let c = CumulativeIntegral::numeric(f.clone(), tol);
            for &t in &[0.2, 1.1, 3.9] {
                let h = 1e-4;
                let fd = (c.value(t + h).unwrap() - c.value(t - h).unwrap()) / (2.0 * h);
                assert!((fd - f.eval(t)).abs() <= 1e-6 * f.eval(t), "{f} at {t}");
            }
        }
    }

    proptest! {
        #[test]
        fn additive_over_subintervals(split in 0.01..4.99f64, scale in 0.1..3.0f64) {
            let tol = Tolerance::default();
            let f = |u: f64| scale * (u.sin() + 1.5) / (1.0 + u);
            let whole = integrate(f, 0.0, 5.0, &[], tol).unwrap();
            let parts = integrate(f, 0.0, split, &[], tol).unwrap() + integrate(f, split, 5.0, &[], tol).unwrap();
            let bound = 2.0 * tol.allowed(whole);
            prop_assert!((whole - parts).abs() <= bound);
        }
    }
}
