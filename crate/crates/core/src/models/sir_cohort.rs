//! A surveillance cohort of `N` individuals exposed to an epidemic with force
//! of infection `lambda(t)` and recovery rate `gamma(t)`.
//!
//! Kets `|S, I>` count susceptibles and infectives; the rest have recovered.
//! The operators
//!
//! ```text
//! S|S,I> = S|S,I>          I|S,I> = I|S,I>
//! D|S,I> = S|S-1,I>        rho|S,I> = I|S,I-1>      tau|S,I> = S|S-1,I+1>
//! ```
//!
//! span a closed algebra (`D` is needed only for closure) and the forward
//! equation is `d|p>/dt = (gamma (rho - I) + lambda (tau - S)) |p>`. Its
//! solution is the product `e^{g1 D} e^{g2 tau} e^{g3 S} e^{g4 rho} e^{g5 I}`
//! with
//!
//! ```text
//! g1 = e^L (1 - e^-L - pi2)   g2 = e^L pi2   g3 = -L   g4 = e^G - 1   g5 = -G
//! pi2(t) = int_0^t lambda(u) e^{-L(u)} e^{G(u) - G(t)} du
//! ```
//!
//! where `L` and `G` are the cumulative infection and recovery hazards.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::factorization::{Coefficients, Factor, WeiNormanFactorization};
use crate::lie::{exp_ad, structure_constants, verify_jacobi, BasisElement, LieBasis};
use crate::models::AlgebraReport;
use crate::ode::{rk45_solve, GeneratorFamily, OdeOptions, ProbabilityVector};
use crate::quadrature::{weighted_integral, Tolerance};
use crate::rates::RateFunction;
use crate::sparse::SparseGenerator;

/// Flat indexing of `{(S, I) : S + I <= N}` with `S` descending in the outer
/// loop and `I` ascending in the inner one, so `|N, 0>` is state 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CohortStateSpace {
    n: usize,
}

impl CohortStateSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("cohort size must be at least 1".into()));
        }
        Ok(Self { n })
    }

    pub fn cohort_size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        (self.n + 1) * (self.n + 2) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, s: usize, i: usize) -> Option<usize> {
        if s + i > self.n {
            return None;
        }
        let k = self.n - s;
        Some(k * (k + 1) / 2 + i)
    }

    pub fn state(&self, index: usize) -> Option<(usize, usize)> {
        if index >= self.len() {
            return None;
        }
        // largest k with k(k+1)/2 <= index
        let mut k = (((8 * index + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
        while (k + 1) * (k + 2) / 2 <= index {
            k += 1;
        }
        while k * (k + 1) / 2 > index {
            k -= 1;
        }
        Some((self.n - k, index - k * (k + 1) / 2))
    }

    pub fn states(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.n).rev().flat_map(move |s| (0..=self.n - s).map(move |i| (s, i)))
    }
}

/// Operator labels in factor order.
pub const LABELS: [&str; 5] = ["Delta", "tau", "S", "rho", "I"];
const DELTA: usize = 0;
const TAU: usize = 1;
const SUS: usize = 2;
const RHO: usize = 3;
const INF: usize = 4;

#[derive(Debug, Clone)]
pub struct CohortModel {
    lambda: RateFunction,
    gamma: RateFunction,
    space: CohortStateSpace,
    // indexed by DELTA, TAU, SUS, RHO, INF
    ops: [SparseGenerator; 5],
    tol: Tolerance,
}

impl CohortModel {
    pub fn build(lambda: RateFunction, gamma: RateFunction, n: usize) -> Result<Self> {
        let space = CohortStateSpace::new(n)?;
        let dim = space.len();
        let mut trip: [Vec<(usize, usize, f64)>; 5] = Default::default();
        for (s, i) in space.states() {
            let col = space.index(s, i).expect("enumerated state");
            let (sf, inf) = (s as f64, i as f64);
            trip[SUS].push((col, col, sf));
            trip[INF].push((col, col, inf));
            if s > 0 {
                trip[DELTA].push((space.index(s - 1, i).expect("in range"), col, sf));
                trip[TAU].push((space.index(s - 1, i + 1).expect("in range"), col, sf));
            }
            if i > 0 {
                trip[RHO].push((space.index(s, i - 1).expect("in range"), col, inf));
            }
        }
        let [d, t, s, r, i] = trip.map(|x| SparseGenerator::from_triplets(dim, x));
        Ok(Self {
            lambda,
            gamma,
            space,
            ops: [d?, t?, s?, r?, i?],
            tol: Tolerance::default(),
        })
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn lambda(&self) -> &RateFunction {
        &self.lambda
    }

    pub fn gamma(&self) -> &RateFunction {
        &self.gamma
    }

    pub fn space(&self) -> &CohortStateSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn susceptible(&self) -> &SparseGenerator {
        &self.ops[SUS]
    }

    pub fn infective(&self) -> &SparseGenerator {
        &self.ops[INF]
    }

    pub fn depletion(&self) -> &SparseGenerator {
        &self.ops[DELTA]
    }

    pub fn recovery(&self) -> &SparseGenerator {
        &self.ops[RHO]
    }

    pub fn infection(&self) -> &SparseGenerator {
        &self.ops[TAU]
    }

    /// The five operators in factor order `Delta, tau, S, rho, I`.
    pub fn operators(&self) -> &[SparseGenerator; 5] {
        &self.ops
    }

    /// The state space is finite, so brackets are exact on all of it.
    pub fn lie_basis(&self) -> Result<LieBasis> {
        let elements = LABELS
            .iter()
            .zip(&self.ops)
            .map(|(l, m)| BasisElement::new(*l, m.clone()))
            .collect();
        structure_constants(elements, self.dim(), 0.0)
    }

    /// `H(t) = gamma(t)(rho - I) + lambda(t)(tau - S)`.
    pub fn family(&self) -> Result<GeneratorFamily> {
        let recover = self.ops[RHO].add_scaled(1.0, &self.ops[INF], -1.0)?;
        let infect = self.ops[TAU].add_scaled(1.0, &self.ops[SUS], -1.0)?;
        GeneratorFamily::new(self.dim(), vec![(self.gamma.clone(), recover), (self.lambda.clone(), infect)])
    }

    pub fn generator(&self, t: f64) -> Result<SparseGenerator> {
        Ok(self.family()?.at(t))
    }

    /// Compares every bracket with the bracket table and every `e^{x ad X} Y`
    /// with its closed form at each `x` in `xs`.
    #[allow(clippy::needless_range_loop)]
    pub fn verify_tables(&self, xs: &[f64], exp_ad_tol: f64) -> Result<AlgebraReport> {
        let basis = self.lie_basis()?;
        let mut report = AlgebraReport::default();
        for a in 0..5 {
            for b in 0..5 {
                let mut got = if a == b { vec![] } else { basis.bracket(a, b).to_vec() };
                got.sort_by_key(|&(k, _)| k);
                let want = bracket_table(a, b);
                let residual = if got == want { 0.0 } else { 1.0 };
                report.push(format!("[{}, {}]", LABELS[a], LABELS[b]), residual, 0.0);
            }
        }
        for a in 0..5 {
            for b in 0..5 {
                let mut worst = 0.0f64;
                for &x in xs {
                    let got = exp_ad(&self.ops[a], x, &self.ops[b], 1e-15)?;
                    let terms: Vec<(f64, &SparseGenerator)> =
                        exp_ad_table(a, b, x).into_iter().map(|(k, c)| (c, &self.ops[k])).collect();
                    let want = SparseGenerator::linear_combination(self.dim(), &terms)?;
                    worst = worst.max(got.add_scaled(1.0, &want, -1.0)?.max_abs());
                }
                report.push(format!("exp(x ad {}) {}", LABELS[a], LABELS[b]), worst, exp_ad_tol);
            }
        }
        let jacobi = verify_jacobi(&basis, 0.0)?;
        report.push(
            format!("Jacobi identity ({} triples)", jacobi.triples_checked),
            jacobi.max_residual,
            0.0,
        );
        Ok(report)
    }

    /// `[g1, ..., g5]` at time `t`.
    pub fn coefficients(&self, t: f64) -> Result<[f64; 5]> {
        self.coefficient_source().at(t).map(|c| c.g)
    }

    /// Per-individual probabilities `(pi1, pi2)` of being susceptible and
    /// infective at `t`, from the closed-form integrals.
    pub fn pi(&self, t: f64) -> Result<(f64, f64)> {
        self.coefficient_source().at(t).map(|c| (c.pi1, c.pi2))
    }

    /// `(pi1, pi2)` by integrating `d/dt (pi1, pi2) = [[-lambda, 0], [lambda, -gamma]] (pi1, pi2)`.
    pub fn pi_ode(&self, t: f64, rtol: f64) -> Result<(f64, f64)> {
        let infect = SparseGenerator::from_triplets(2, [(0, 0, -1.0), (1, 0, 1.0)])?;
        let recover = SparseGenerator::from_triplets(2, [(1, 1, -1.0)])?;
        let family = GeneratorFamily::new(2, vec![(self.lambda.clone(), infect), (self.gamma.clone(), recover)])?;
        let opts = OdeOptions::with_tolerances(rtol, rtol * 1e-3);
        let out = rk45_solve(&family, &[1.0, 0.0], 0.0, t, opts)?;
        Ok((out.values[0], out.values[1]))
    }

    pub fn factorization(&self) -> Result<WeiNormanFactorization> {
        let factors = LABELS.iter().zip(&self.ops).map(|(l, m)| Factor::matrix(*l, m.clone())).collect();
        WeiNormanFactorization::new(self.dim(), factors, Arc::new(self.coefficient_source()))
    }

    /// The same propagator ordered `S, D, tau, I, rho`:
    ///
    /// ```text
    /// e^{-L S} e^{(1 - pi1 - pi2) D} e^{pi2 tau} e^{-G I} e^{(1 - e^-G) rho}
    /// ```
    ///
    /// Moving the diagonal factors to the left conjugates `D`, `tau` and `rho`
    /// by `e^{-L}` and `e^{-G}`, which turns the exponentially large
    /// coefficients of [`factorization`](Self::factorization) into
    /// probabilities. The large coefficients there multiply components that
    /// the diagonal factors have already shrunk, so once `L` or `G` reaches a
    /// few units the original order loses digits to cancellation and this one
    /// does not.
    pub fn bounded_factorization(&self) -> Result<WeiNormanFactorization> {
        let factors = BOUNDED_ORDER
            .iter()
            .map(|&k| Factor::matrix(LABELS[k], self.ops[k].clone()))
            .collect();
        WeiNormanFactorization::new(self.dim(), factors, Arc::new(BoundedCoefficients(self.coefficient_source())))
    }

    /// Closed-form distribution for the initial state `|N, 0>`: each individual
    /// independently susceptible, infective or recovered with probabilities
    /// `pi1`, `pi2`, `1 - pi1 - pi2`.
    pub fn multinomial_solution(&self, t: f64) -> Result<ProbabilityVector> {
        let (pi1, pi2) = self.pi(t)?;
        let pi3 = (1.0 - pi1 - pi2).max(0.0);
        let n = self.space.cohort_size();
        let log_fact = log_factorials(n);
        let log_term = |p: f64, k: usize| if k == 0 { 0.0 } else { k as f64 * p.ln() };
        let values = self
            .space
            .states()
            .map(|(s, i)| {
                let r = n - s - i;
                let lp = log_fact[n] - log_fact[s] - log_fact[i] - log_fact[r]
                    + log_term(pi1, s)
                    + log_term(pi2, i)
                    + log_term(pi3, r);
                lp.exp()
            })
            .collect();
        ProbabilityVector::new(values, None, 1e-10)
    }

    fn coefficient_source(&self) -> CohortCoefficients {
        CohortCoefficients {
            lambda: self.lambda.clone(),
            gamma: self.gamma.clone(),
            tol: self.tol,
        }
    }
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `[X_a, X_b]` as `(element, coefficient)` pairs sorted by element.
pub fn bracket_table(a: usize, b: usize) -> Vec<(usize, f64)> {
    match (a, b) {
        (SUS, DELTA) => vec![(DELTA, -1.0)],
        (SUS, TAU) => vec![(TAU, -1.0)],
        (INF, RHO) => vec![(RHO, -1.0)],
        (INF, TAU) => vec![(TAU, 1.0)],
        (DELTA, SUS) => vec![(DELTA, 1.0)],
        (RHO, INF) => vec![(RHO, 1.0)],
        (RHO, TAU) => vec![(DELTA, 1.0)],
        (TAU, SUS) => vec![(TAU, 1.0)],
        (TAU, INF) => vec![(TAU, -1.0)],
        (TAU, RHO) => vec![(DELTA, -1.0)],
        _ => vec![],
    }
}

/// `e^{x ad X_a} X_b` as `(element, coefficient)` pairs.
pub fn exp_ad_table(a: usize, b: usize, x: f64) -> Vec<(usize, f64)> {
    match (a, b) {
        (SUS, DELTA) | (SUS, TAU) | (INF, RHO) => vec![(b, (-x).exp())],
        (INF, TAU) => vec![(b, x.exp())],
        (DELTA, SUS) => vec![(SUS, 1.0), (DELTA, x)],
        (RHO, INF) => vec![(INF, 1.0), (RHO, x)],
        (RHO, TAU) => vec![(TAU, 1.0), (DELTA, x)],
        (TAU, SUS) => vec![(SUS, 1.0), (TAU, x)],
        (TAU, INF) => vec![(INF, 1.0), (TAU, -x)],
        (TAU, RHO) => vec![(RHO, 1.0), (DELTA, -x)],
        _ => vec![(b, 1.0)],
    }
}

struct CohortCoefficients {
    lambda: RateFunction,
    gamma: RateFunction,
    tol: Tolerance,
}

struct CohortValues {
    g: [f64; 5],
    pi1: f64,
    pi2: f64,
}

impl CohortCoefficients {
    fn at(&self, t: f64) -> Result<CohortValues> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(CohortValues {
                g: [0.0; 5],
                pi1: 1.0,
                pi2: 0.0,
            });
        }
        let big_l = self.lambda.antiderivative(t);
        let big_g = self.gamma.antiderivative(t);
        let (lambda, gamma) = (&self.lambda, &self.gamma);
        let pi2 = weighted_integral(
            lambda,
            |u, _| (gamma.antiderivative(u) - big_g - lambda.antiderivative(u)).exp(),
            t,
            self.tol,
        )?;
        // 1 - e^{-L}, accurate for small L
        let infected = -(-big_l).exp_m1();
        let scale = big_l.exp();
        Ok(CohortValues {
            g: [scale * (infected - pi2), scale * pi2, -big_l, big_g.exp_m1(), -big_g],
            pi1: (-big_l).exp(),
            pi2,
        })
    }
}

const BOUNDED_ORDER: [usize; 5] = [SUS, DELTA, TAU, INF, RHO];

struct BoundedCoefficients(CohortCoefficients);

impl Coefficients for BoundedCoefficients {
    fn count(&self) -> usize {
        5
    }

    fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        let v = self.0.at(t)?;
        let [_, _, minus_l, _, minus_g] = v.g;
        Ok(vec![minus_l, -minus_l.exp_m1() - v.pi2, v.pi2, minus_g, -minus_g.exp_m1()])
    }
}

impl Coefficients for CohortCoefficients {
    fn count(&self) -> usize {
        5
    }

    fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.at(t)?.g.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(lambda: f64, gamma: f64, n: usize) -> CohortModel {
        CohortModel::build(RateFunction::Constant(lambda), RateFunction::Constant(gamma), n).unwrap()
    }

    fn ket(space: &CohortStateSpace, s: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; space.len()];
        v[space.index(s, i).unwrap()] = 1.0;
        v
    }

    #[test]
    fn state_space_is_a_bijection() {
        for n in 1..8 {
            let sp = CohortStateSpace::new(n).unwrap();
            let states: Vec<_> = sp.states().collect();
            assert_eq!(states.len(), sp.len());
            for (idx, &(s, i)) in states.iter().enumerate() {
                assert_eq!(sp.index(s, i), Some(idx));
                assert_eq!(sp.state(idx), Some((s, i)));
            }
            assert_eq!(sp.index(n, 1), None);
            assert_eq!(sp.state(sp.len()), None);
        }
    }

    #[test]
    fn operator_actions() {
        let m = model(1.0, 1.0, 5);
        let sp = *m.space();
        let v = ket(&sp, 3, 2);
        let s = m.susceptible().matvec(&v).unwrap();
        assert_eq!(s, ket(&sp, 3, 2).iter().map(|x| 3.0 * x).collect::<Vec<_>>());
        let t = m.infection().matvec(&v).unwrap();
        assert_eq!(t, ket(&sp, 2, 3).iter().map(|x| 3.0 * x).collect::<Vec<_>>());
        assert!(m.recovery().matvec(&ket(&sp, 3, 0)).unwrap().iter().all(|&x| x == 0.0));
        let d = m.depletion().matvec(&v).unwrap();
        assert_eq!(d, ket(&sp, 2, 2).iter().map(|x| 3.0 * x).collect::<Vec<_>>());
    }

    #[test]
    fn generator_diagonal_and_columns() {
        let m = CohortModel::build(RateFunction::exponential(0.1, 0.2).unwrap(), RateFunction::Constant(0.3), 4).unwrap();
        let t = 1.3;
        let h = m.generator(t).unwrap();
        h.check_markov_generator(1e-14).unwrap();
        let (l, g) = (m.lambda().eval(t), m.gamma().eval(t));
        for (s, i) in m.space().states() {
            let k = m.space().index(s, i).unwrap();
            assert!((h.get(k, k) + l * s as f64 + g * i as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_rates_give_zero_generator() {
        assert!(model(0.0, 0.0, 3).generator(2.0).unwrap().is_zero());
    }

    #[test]
    fn single_individual_chain() {
        let m = model(0.7, 0.4, 1);
        let h = m.generator(0.0).unwrap();
        let sp = m.space();
        let (s10, s01, s00) = (sp.index(1, 0).unwrap(), sp.index(0, 1).unwrap(), sp.index(0, 0).unwrap());
        assert_eq!(h.get(s01, s10), 0.7);
        assert_eq!(h.get(s00, s01), 0.4);
        assert_eq!(h.get(s10, s10), -0.7);
        assert_eq!(h.get(s01, s01), -0.4);
        assert_eq!(h.nnz(), 4);
    }

    #[test]
    fn tables_hold_for_small_cohort() {
        let report = model(1.0, 1.0, 4).verify_tables(&[0.3, 1.0, 2.0], 1e-12).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.len(), 51);
    }

    #[test]
    fn coefficients_at_origin() {
        assert_eq!(model(0.2, 0.3, 3).coefficients(0.0).unwrap(), [0.0; 5]);
    }

    #[test]
    fn no_recovery() {
        let lam = 0.4;
        let m = model(lam, 0.0, 3);
        for &t in &[0.5, 2.0] {
            let (pi1, pi2) = m.pi(t).unwrap();
            assert!((pi2 - (1.0 - (-lam * t).exp())).abs() < 1e-12);
            assert!((pi1 - (-lam * t).exp()).abs() < 1e-15);
            assert!(m.coefficients(t).unwrap()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn constant_rates_pi2() {
        let (lam, gam) = (0.2, 0.3);
        let m = model(lam, gam, 3);
        for &t in &[1.0, 2.0, 5.0] {
            let exact = lam * ((-lam * t).exp() - (-gam * t).exp()) / (gam - lam);
            assert!((m.pi(t).unwrap().1 - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_ode_against_closed_forms() {
        let m = model(0.5, 0.0, 2);
        assert_eq!(m.pi_ode(0.0, 1e-10).unwrap(), (1.0, 0.0));
        let (p1, p2) = m.pi_ode(3.0, 1e-11).unwrap();
        assert!((p1 - (-1.5f64).exp()).abs() < 1e-9);
        assert!((p2 - (1.0 - (-1.5f64).exp())).abs() < 1e-9);
        let e = CohortModel::build(RateFunction::exponential(0.1, 0.2).unwrap(), RateFunction::Constant(0.3), 2).unwrap();
        let t = 4.0;
        let (p1, _) = e.pi_ode(t, 1e-11).unwrap();
        assert!((p1 - (-(0.1 / 0.2) * ((0.2 * t).exp() - 1.0)).exp()).abs() < 1e-9);
    }

    #[test]
    fn binomial_case() {
        let m = model(0.6, 0.2, 1);
        let t = 1.7;
        let (pi1, pi2) = m.pi(t).unwrap();
        let p = m.multinomial_solution(t).unwrap();
        let sp = m.space();
        assert!((p.values()[sp.index(1, 0).unwrap()] - pi1).abs() < 1e-15);
        assert!((p.values()[sp.index(0, 1).unwrap()] - pi2).abs() < 1e-15);
        assert!((p.values()[sp.index(0, 0).unwrap()] - (1.0 - pi1 - pi2)).abs() < 1e-15);
    }

    #[test]
    fn multinomial_normalization_and_mean() {
        let m = model(0.2, 0.3, 25);
        let t = 2.0;
        let p = m.multinomial_solution(t).unwrap();
        assert!((p.total() - 1.0).abs() < 1e-12);
        let mean_s: f64 = m.space().states().zip(p.values()).map(|((s, _), v)| s as f64 * v).sum();
        assert!((mean_s - 25.0 * m.pi(t).unwrap().0).abs() < 1e-10);
        let at_zero = m.multinomial_solution(0.0).unwrap();
        assert_eq!(at_zero.values()[0], 1.0);
    }

    #[test]
    fn bounded_order_survives_large_hazards() {
        let m = model(1.8, 0.05, 8);
        let krylov = crate::expm::KrylovExpm::default();
        let v = ket(m.space(), 8, 0);
        let t = 6.0;
        let oracle = m.multinomial_solution(t).unwrap();
        let bounded = m.bounded_factorization().unwrap().apply(t, &v, &krylov).unwrap();
        assert!(bounded.coefficients.iter().all(|g| g.abs() <= t * 1.8));
        assert!(oracle.linf_distance(&bounded.vector).unwrap() < 1e-12);
        let original = m.factorization().unwrap().apply(t, &v, &krylov).unwrap();
        assert!(original.coefficients[1] > 1e4);
    }

    #[test]
    fn orders_agree_for_moderate_hazards() {
        let m = model(0.3, 0.4, 6);
        let krylov = crate::expm::KrylovExpm::default();
        let v = ket(m.space(), 4, 1);
        for t in [0.5, 2.0] {
            let a = m.factorization().unwrap().apply(t, &v, &krylov).unwrap().vector;
            let b = m.bounded_factorization().unwrap().apply(t, &v, &krylov).unwrap().vector;
            assert!(crate::ode::linf_distance(&a, &b).unwrap() < 1e-11);
        }
    }
}
