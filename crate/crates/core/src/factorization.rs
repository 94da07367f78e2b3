//! Ordered products of exponentials `U(t) = e^{g_1(t) H_1} ... e^{g_m(t) H_m}`.
//!
//! The first listed factor is the leftmost one, so applying `U(t)` to a vector
//! runs through the factors from last to first.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expm::{KrylovExpm, KrylovOptions};
use crate::sparse::SparseGenerator;

/// Evaluates all coefficients `g_1(t), ..., g_m(t)` of a factorization at once,
/// so that integrals shared between coefficients are computed a single time.
pub trait Coefficients: Send + Sync {
    fn count(&self) -> usize;
    fn evaluate(&self, t: f64) -> Result<Vec<f64>>;
}

/// Adapts a closure into [`Coefficients`].
pub struct FnCoefficients<F> {
    count: usize,
    f: F,
}

impl<F> FnCoefficients<F>
where
    F: Fn(f64) -> Result<Vec<f64>> + Send + Sync,
{
    pub fn new(count: usize, f: F) -> Self {
        Self { count, f }
    }
}

impl<F> Coefficients for FnCoefficients<F>
where
    F: Fn(f64) -> Result<Vec<f64>> + Send + Sync,
{
    fn count(&self) -> usize {
        self.count
    }

    fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        (self.f)(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorGenerator {
    /// The identity; `e^{g I}` is applied as the scalar `e^g`.
    Identity,
    Matrix(SparseGenerator),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub label: String,
    pub generator: FactorGenerator,
}

impl Factor {
    pub fn identity(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            generator: FactorGenerator::Identity,
        }
    }

    pub fn matrix(label: impl Into<String>, m: SparseGenerator) -> Self {
        Self {
            label: label.into(),
            generator: FactorGenerator::Matrix(m),
        }
    }
}

#[derive(Clone)]
pub struct WeiNormanFactorization {
    dim: usize,
    factors: Vec<Factor>,
    coefficients: Arc<dyn Coefficients>,
}

impl fmt::Debug for WeiNormanFactorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<&str> = self.factors.iter().map(|x| x.label.as_str()).collect();
        f.debug_struct("WeiNormanFactorization")
            .field("dim", &self.dim)
            .field("factors", &labels)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationOutput {
    pub vector: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub matvecs: usize,
}

impl WeiNormanFactorization {
    /// Validates dimensions and that every coefficient vanishes at `t = 0`.
    pub fn new(dim: usize, factors: Vec<Factor>, coefficients: Arc<dyn Coefficients>) -> Result<Self> {
        if factors.len() != coefficients.count() {
            return Err(Error::InvalidArgument(format!(
                "{} factors but {} coefficients",
                factors.len(),
                coefficients.count()
            )));
        }
        for f in &factors {
            if let FactorGenerator::Matrix(m) = &f.generator {
                if m.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: m.dim(),
                    });
                }
            }
        }
        let at_zero = coefficients.evaluate(0.0)?;
        if let Some((i, g)) = at_zero.iter().enumerate().find(|(_, g)| **g != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coefficient {} of factor `{}` is {g} at t = 0",
                i, factors[i].label
            )));
        }
        Ok(Self {
            dim,
            factors,
            coefficients,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn coefficients_at(&self, t: f64) -> Result<Vec<f64>> {
        self.coefficients.evaluate(t)
    }

    /// `U(t) v`, rightmost factor first.
    pub fn apply(&self, t: f64, v: &[f64], krylov: &KrylovExpm) -> Result<FactorizationOutput> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let g = self.coefficients.evaluate(t)?;
        let mut w = v.to_vec();
        let mut matvecs = 0;
        for (factor, &gi) in self.factors.iter().zip(&g).rev() {
            if gi == 0.0 {
                continue;
            }
            match &factor.generator {
                FactorGenerator::Identity => {
                    let s = gi.exp();
                    w.iter_mut().for_each(|x| *x *= s);
                }
                FactorGenerator::Matrix(h) => {
                    let out = krylov.apply(h, gi, &w)?;
                    matvecs += out.matvecs;
                    w = out.vector;
                }
            }
        }
        Ok(FactorizationOutput {
            vector: w,
            coefficients: g,
            matvecs,
        })
    }
}

/// `U(t) v` with default Krylov settings at tolerance `tol`.
pub fn apply_factorization(u: &WeiNormanFactorization, t: f64, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    let krylov = KrylovExpm::new(KrylovOptions {
        tol,
        ..KrylovOptions::default()
    })?;
    Ok(u.apply(t, v, &krylov)?.vector)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> (SparseGenerator, SparseGenerator) {
        let a = SparseGenerator::from_triplets(2, [(0, 0, -1.0), (1, 0, 1.0)]).unwrap();
        let b = SparseGenerator::from_triplets(2, [(1, 1, -1.0), (0, 1, 1.0)]).unwrap();
        (a, b)
    }

    #[test]
    fn identity_at_time_zero() {
        let (a, b) = two_state();
        let coeffs = Arc::new(FnCoefficients::new(3, |t| Ok(vec![-t, t, 2.0 * t])));
        let u = WeiNormanFactorization::new(
            2,
            vec![Factor::identity("1"), Factor::matrix("A", a), Factor::matrix("B", b)],
            coeffs,
        )
        .unwrap();
        let v = [0.3, 0.7];
        assert_eq!(apply_factorization(&u, 0.0, &v, 1e-12).unwrap(), v.to_vec());
    }

    #[test]
    fn order_is_rightmost_first() {
        let (a, b) = two_state();
        let coeffs = Arc::new(FnCoefficients::new(2, |t| Ok(vec![t, t])));
        let u = WeiNormanFactorization::new(2, vec![Factor::matrix("A", a.clone()), Factor::matrix("B", b.clone())], coeffs)
            .unwrap();
        let v = [1.0, 0.0];
        let got = apply_factorization(&u, 0.5, &v, 1e-13).unwrap();
        let ea = crate::expm::expm_dense(&(a.to_dense() * 0.5)).unwrap();
        let eb = crate::expm::expm_dense(&(b.to_dense() * 0.5)).unwrap();
        let expected = ea * eb * nalgebra::DVector::from_column_slice(&v);
        for i in 0..2 {
            assert!((got[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn nonzero_coefficient_at_origin_is_rejected() {
        let (a, _) = two_state();
        let coeffs = Arc::new(FnCoefficients::new(1, |t| Ok(vec![1.0 + t])));
        assert!(WeiNormanFactorization::new(2, vec![Factor::matrix("A", a)], coeffs).is_err());
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let coeffs = Arc::new(FnCoefficients::new(1, |t| Ok(vec![t])));
        let r = WeiNormanFactorization::new(3, vec![Factor::matrix("A", SparseGenerator::identity(2))], coeffs);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
