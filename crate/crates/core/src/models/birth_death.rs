//! Immigration-death process: arrivals at rate `b(t)`, each individual leaves
//! at rate `d(t)`.
//!
//! The forward equation is `dp/dt = (b(t)(R - 1) + d(t)(L - M)) p` with the
//! raising operator `R e_k = e_{k+1}`, the lowering operator `L e_k = k e_{k-1}`
//! and the number operator `M e_k = k e_k`. The span of `{1, R, L, M}` is closed
//! (`[L,R] = 1`, `[M,R] = R`, `[L,M] = L`), which gives the product form
//!
//! ```text
//! p(t) = e^{g1} e^{g2 R} e^{g3 L} e^{g4 M} p(0)
//! g4 = -D,  g3 = e^D - 1,  g2 = int_0^t b(u) e^{D(u) - D(t)} du,  g1 = -g2
//! ```
//!
//! with `D(t) = int_0^t d`. Starting from zero individuals the distribution is
//! Poisson with mean `g2(t)`.
//!
//! States are `0..n_max`; the last one is an overflow state that absorbs
//! arrivals, so every column of the truncated generator sums to zero.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::factorization::{Coefficients, Factor, WeiNormanFactorization};
use crate::lie::{structure_constants, verify_jacobi, BasisElement, LieBasis};
use crate::models::AlgebraReport;
use crate::ode::{GeneratorFamily, ProbabilityVector};
use crate::quadrature::{weighted_integral, Tolerance};
use crate::rates::RateFunction;
use crate::sparse::SparseGenerator;

/// Rows and columns within this many of the truncation edge are excluded from
/// bracket checks.
pub const TRUNCATION_MARGIN: usize = 4;

#[derive(Debug, Clone)]
pub struct BirthDeathModel {
    b: RateFunction,
    d: RateFunction,
    n_max: usize,
    identity: SparseGenerator,
    raise: SparseGenerator,
    lower: SparseGenerator,
    number: SparseGenerator,
    tol: Tolerance,
}

impl BirthDeathModel {
    pub fn build(b: RateFunction, d: RateFunction, n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidArgument(format!("n_max must be at least 2, got {n_max}")));
        }
        let last = n_max - 1;
        let raise = SparseGenerator::from_triplets(n_max, (0..n_max).map(|k| ((k + 1).min(last), k, 1.0)))?;
        let lower = SparseGenerator::from_triplets(n_max, (1..n_max).map(|k| (k - 1, k, k as f64)))?;
        let number = SparseGenerator::diagonal(&(0..n_max).map(|k| k as f64).collect::<Vec<_>>());
        Ok(Self {
            b,
            d,
            n_max,
            identity: SparseGenerator::identity(n_max),
            raise,
            lower,
            number,
            tol: Tolerance::default(),
        })
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn b(&self) -> &RateFunction {
        &self.b
    }

    pub fn d(&self) -> &RateFunction {
        &self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max
    }

    pub fn overflow_index(&self) -> usize {
        self.n_max - 1
    }

    pub fn identity(&self) -> &SparseGenerator {
        &self.identity
    }

    pub fn raise(&self) -> &SparseGenerator {
        &self.raise
    }

    pub fn lower(&self) -> &SparseGenerator {
        &self.lower
    }

    pub fn number(&self) -> &SparseGenerator {
        &self.number
    }

    /// `{1, R, L, M}` with exact structure constants on the block that stays
    /// [`TRUNCATION_MARGIN`] away from the edge.
    pub fn lie_basis(&self) -> Result<LieBasis> {
        if self.n_max <= TRUNCATION_MARGIN + 1 {
            return Err(Error::InvalidArgument(format!(
                "n_max = {} leaves no interior block for bracket checks",
                self.n_max
            )));
        }
        structure_constants(
            vec![
                BasisElement::new("1", self.identity.clone()),
                BasisElement::new("R", self.raise.clone()),
                BasisElement::new("L", self.lower.clone()),
                BasisElement::new("M", self.number.clone()),
            ],
            self.n_max - TRUNCATION_MARGIN,
            0.0,
        )
    }

    /// Checks the full bracket table of `{1, R, L, M}` and the Jacobi identity.
    pub fn verify_algebra(&self) -> Result<AlgebraReport> {
        let basis = self.lie_basis()?;
        let labels = ["1", "R", "L", "M"];
        // expected [X_i, X_j] for i < j as (coefficient, element)
        let expected = |i: usize, j: usize| -> Vec<(usize, f64)> {
            match (labels[i], labels[j]) {
                ("R", "L") => vec![(0, -1.0)],
                ("R", "M") => vec![(1, -1.0)],
                ("L", "M") => vec![(2, 1.0)],
                _ => vec![],
            }
        };
        let mut report = AlgebraReport::default();
        for i in 0..4 {
            for j in i + 1..4 {
                let mut got = basis.bracket(i, j).to_vec();
                got.sort_by_key(|&(k, _)| k);
                let want = expected(i, j);
                let residual = if got == want { 0.0 } else { 1.0 };
                report.push(format!("[{}, {}]", labels[i], labels[j]), residual, 0.0);
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

    /// `H(t) = b(t)(R - 1) + d(t)(L - M)` as a rate-weighted family.
    pub fn family(&self) -> Result<GeneratorFamily> {
        let birth = self.raise.add_scaled(1.0, &self.identity, -1.0)?;
        let death = self.lower.add_scaled(1.0, &self.number, -1.0)?;
        GeneratorFamily::new(self.n_max, vec![(self.b.clone(), birth), (self.d.clone(), death)])
    }

    pub fn generator(&self, t: f64) -> Result<SparseGenerator> {
        Ok(self.family()?.at(t))
    }

    /// `[g1, g2, g3, g4]` at time `t`.
    pub fn coefficients(&self, t: f64) -> Result<[f64; 4]> {
        BirthDeathCoefficients {
            b: self.b.clone(),
            d: self.d.clone(),
            tol: self.tol,
        }
        .at(t)
    }

    pub fn factorization(&self) -> Result<WeiNormanFactorization> {
        WeiNormanFactorization::new(
            self.n_max,
            vec![
                Factor::identity("1"),
                Factor::matrix("R", self.raise.clone()),
                Factor::matrix("L", self.lower.clone()),
                Factor::matrix("M", self.number.clone()),
            ],
            Arc::new(BirthDeathCoefficients {
                b: self.b.clone(),
                d: self.d.clone(),
                tol: self.tol,
            }),
        )
    }

    /// Mean population at `t` when starting from zero.
    pub fn mean(&self, t: f64) -> Result<f64> {
        Ok(self.coefficients(t)?[1])
    }

    /// Closed-form distribution for `N(0) = 0`: Poisson with mean `g2(t)`,
    /// with the tail beyond the tracked states in the overflow component.
    pub fn poisson_solution(&self, t: f64) -> Result<ProbabilityVector> {
        let mean = self.mean(t)?;
        let mut values = poisson_pmf(mean, self.n_max - 1);
        let tracked: f64 = values.iter().sum();
        values.push((1.0 - tracked).max(0.0));
        ProbabilityVector::new(values, Some(self.overflow_index()), 1e-12)
    }

    /// Probability generating function `G(s, t) = exp((s - 1) g2(t))` for
    /// `N(0) = 0`.
    pub fn pgf(&self, s: f64, t: f64) -> Result<f64> {
        if !(s.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("PGF argument must satisfy |s| <= 1, got {s}")));
        }
        Ok(((s - 1.0) * self.mean(t)?).exp())
    }
}

/// `e^{-mean} mean^n / n!` for `n < count`, by the stable recurrence.
pub fn poisson_pmf(mean: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut p = (-mean).exp();
    for n in 0..count {
        if n > 0 {
            p *= mean / n as f64;
        }
        out.push(p);
    }
    out
}

/// Smallest state count for which a Poisson(`mean`) tail beyond the tracked
/// states has mass below `tail`, plus one overflow state.
pub fn truncation_for_tail(mean: f64, tail: f64) -> usize {
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut n = 0usize;
    while 1.0 - cdf >= tail && n < 100_000 {
        n += 1;
        p *= mean / n as f64;
        cdf += p;
    }
    // a little slack for rounding in 1 - cdf
    n + 4
}

struct BirthDeathCoefficients {
    b: RateFunction,
    d: RateFunction,
    tol: Tolerance,
}

impl BirthDeathCoefficients {
    fn at(&self, t: f64) -> Result<[f64; 4]> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok([0.0; 4]);
        }
        let big_d = self.d.antiderivative(t);
        let d = &self.d;
        let g2 = if self.d.is_identically_zero() {
            self.b.antiderivative(t)
        } else {
            weighted_integral(&self.b, |u, _| (d.antiderivative(u) - big_d).exp(), t, self.tol)?
        };
        Ok([-g2, g2, big_d.exp_m1(), -big_d])
    }
}

impl Coefficients for BirthDeathCoefficients {
    fn count(&self) -> usize {
        4
    }

    fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.at(t)?.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(b: f64, d: f64, n_max: usize) -> BirthDeathModel {
        BirthDeathModel::build(RateFunction::Constant(b), RateFunction::Constant(d), n_max).unwrap()
    }

    #[test]
    fn operator_entries() {
        let m = constant(1.0, 1.0, 4);
        for k in 0..3 {
            assert_eq!(m.raise().get(k + 1, k), 1.0);
        }
        assert_eq!(m.number().to_dense(), nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0])));
        assert_eq!(m.lower().get(0, 1), 1.0);
        assert_eq!(m.lower().get(1, 2), 2.0);
    }

    #[test]
    fn generator_columns_sum_to_zero() {
        let m = BirthDeathModel::build(
            RateFunction::exponential(1.0, 0.1).unwrap(),
            RateFunction::Constant(0.5),
            15,
        )
        .unwrap();
        for &t in &[0.0, 0.7, 3.0] {
            m.generator(t).unwrap().check_markov_generator(1e-12).unwrap();
        }
    }

    #[test]
    fn coefficients_vanish_at_origin() {
        assert_eq!(constant(2.0, 0.5, 10).coefficients(0.0).unwrap(), [0.0; 4]);
    }

    #[test]
    fn constant_rate_coefficients() {
        let (b, d) = (2.0, 0.5);
        let m = constant(b, d, 10);
        for &t in &[0.3, 1.0, 6.0] {
            let g = m.coefficients(t).unwrap();
            let g2 = b / d * (1.0 - (-d * t).exp());
            assert!((g[1] - g2).abs() < 1e-12);
            assert_eq!(g[0], -g[1]);
            assert!((g[2] - ((d * t).exp() - 1.0)).abs() < 1e-12);
            assert!((g[3] + d * t).abs() < 1e-15);
        }
    }

    #[test]
    fn no_death_reduces_to_cumulative_birth() {
        let m = BirthDeathModel::build(RateFunction::rational(3.0).unwrap(), RateFunction::Constant(0.0), 10).unwrap();
        let g = m.coefficients(2.0).unwrap();
        assert!((g[1] - 3.0 * 3f64.ln()).abs() < 1e-12);
        assert_eq!(g[2], 0.0);
        assert_eq!(g[3], 0.0);
    }

    #[test]
    fn poisson_solution_at_origin_is_point_mass() {
        let p = constant(1.0, 1.0, 8).poisson_solution(0.0).unwrap();
        assert_eq!(p.values()[0], 1.0);
        assert_eq!(p.total(), 1.0);
    }

    #[test]
    fn long_run_mean_is_b_over_d() {
        let m = constant(2.0, 1.0, 30);
        assert!((m.mean(40.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pgf_identities() {
        let m = constant(2.0, 0.5, 30);
        let t = 1.5;
        assert!((m.pgf(1.0, t).unwrap() - 1.0).abs() < 1e-15);
        let p0 = m.poisson_solution(t).unwrap().values()[0];
        assert!((m.pgf(0.0, t).unwrap() - p0).abs() < 1e-15);
        let h = 1e-6;
        let slope = (m.pgf(1.0, t).unwrap() - m.pgf(1.0 - h, t).unwrap()) / h;
        assert!((slope - m.mean(t).unwrap()).abs() < 1e-5);
        assert!(m.pgf(1.5, t).is_err());
    }

    #[test]
    fn unit_mean_poisson() {
        let p = poisson_pmf(1.0, 6);
        let mut fact = 1.0;
        for (n, v) in p.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            assert!((v - (-1.0f64).exp() / fact).abs() < 1e-16);
        }
    }

    #[test]
    fn truncation_covers_tail() {
        let n = truncation_for_tail(3.0, 1e-10);
        let tracked: f64 = poisson_pmf(3.0, n - 1).iter().sum();
        assert!(1.0 - tracked < 1e-10);
    }
}
