//! Pure birth process with jumps `n -> n + 1` at rate `a(t) + n b(t)`, tracked
//! up to a count `m` with one extra absorbing state for `N(t) > m`.
//!
//! With `S` the shift that stops at the overflow state,
//! `Q = (S - 1) diag(0, 1, ..., m, 0)` and `P_i = S^{i-1} (S - 1)`, the forward
//! equation is `dp/dt = (a(t) P_1 + b(t) Q) p`. The `P_i` commute with each
//! other and `[P_i, Q] = -i P_{i+1} + (i - 1) P_i`, so
//!
//! ```text
//! p(t) = e^{f_1 P_1} ... e^{f_m P_m} e^{g Q} p(0)
//! f_1 = A(t),  g = B(t),  f_i = int_0^t a(u) (1 - e^{B(u) - B(t)})^{i-1} du
//! ```
//!
//! where `A` and `B` are the cumulative rates. Because the `P_i` commute, the
//! leftmost `m` factors collapse into the single exponential `e^{sum_i f_i P_i}`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expm::{KrylovExpm, KrylovOptions};
use crate::factorization::{Coefficients, Factor, WeiNormanFactorization};
use crate::lie::{commutator, structure_constants, verify_jacobi, BasisElement, LieBasis};
use crate::models::AlgebraReport;
use crate::ode::{GeneratorFamily, ProbabilityVector};
use crate::quadrature::{integrate_vec, Tolerance};
use crate::rates::RateFunction;
use crate::sparse::SparseGenerator;

/// Default number of trailing rows and columns left out of bracket checks.
pub const DEFAULT_MARGIN: usize = 2;

/// Tolerance on `|1 - sum p|` for returned distributions.
pub const SUM_TOL: f64 = 1e-9;

/// Up to this state dimension the Krylov space spans the whole state space,
/// which makes the exponential exact after a single Arnoldi sweep.
pub const FULL_KRYLOV_MAX_DIM: usize = 512;

#[derive(Debug, Clone)]
pub struct PureBirthModel {
    a: RateFunction,
    b: RateFunction,
    m: usize,
    q: SparseGenerator,
    p: Vec<SparseGenerator>,
    tol: Tolerance,
    krylov: KrylovOptions,
}

/// `f_1..f_m` and `g` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct PureBirthCoefficients {
    pub t: f64,
    pub f: Vec<f64>,
    pub g: f64,
}

/// A distribution together with the coefficients and Krylov work behind it.
#[derive(Debug, Clone)]
pub struct PureBirthSolution {
    pub distribution: ProbabilityVector,
    pub coefficients: PureBirthCoefficients,
    pub matvecs: usize,
}

impl PureBirthModel {
    pub fn build(a: RateFunction, b: RateFunction, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("maximum count m must be at least 2, got {m}")));
        }
        let dim = m + 2;
        let over = m + 1;
        let q = SparseGenerator::from_triplets(
            dim,
            (1..=m).flat_map(|k| [(k + 1, k, k as f64), (k, k, -(k as f64))]),
        )?;
        let p = (1..=m)
            .map(|i| {
                SparseGenerator::from_triplets(
                    dim,
                    (0..over).flat_map(move |k| [((k + i).min(over), k, 1.0), ((k + i - 1).min(over), k, -1.0)]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            a,
            b,
            m,
            q,
            p,
            tol: Tolerance::default(),
            krylov: default_krylov(dim),
        })
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_krylov(mut self, opts: KrylovOptions) -> Self {
        self.krylov = opts;
        self
    }

    pub fn a(&self) -> &RateFunction {
        &self.a
    }

    pub fn b(&self) -> &RateFunction {
        &self.b
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m + 2
    }

    pub fn overflow_index(&self) -> usize {
        self.m + 1
    }

    pub fn krylov_options(&self) -> &KrylovOptions {
        &self.krylov
    }

    pub fn q(&self) -> &SparseGenerator {
        &self.q
    }

    /// `P_i` for `1 <= i <= m`.
    pub fn p(&self, i: usize) -> &SparseGenerator {
        &self.p[i - 1]
    }

    fn interior(&self, margin: usize) -> Result<usize> {
        if margin >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "margin {margin} leaves no interior block in dimension {}",
                self.dim()
            )));
        }
        Ok(self.dim() - margin)
    }

    /// `{Q, P_1, ..., P_m}` with exact structure constants on the interior.
    pub fn lie_basis(&self, margin: usize) -> Result<LieBasis> {
        let mut elements = vec![BasisElement::new("Q", self.q.clone())];
        elements.extend(self.p.iter().enumerate().map(|(i, p)| BasisElement::new(format!("P{}", i + 1), p.clone())));
        structure_constants(elements, self.interior(margin)?, 0.0)
    }

    /// `[P_i, P_j] = 0` for all pairs, `[P_i, Q] = -i P_{i+1} + (i - 1) P_i`
    /// for `i < m`, and the Jacobi identity, all on the interior block.
    pub fn verify_commutation(&self, margin: usize) -> Result<AlgebraReport> {
        let n0 = self.interior(margin)?;
        let dim = self.dim();
        let mut report = AlgebraReport::default();
        for i in 1..=self.m {
            for j in i + 1..=self.m {
                let c = commutator(self.p(i), self.p(j))?.restrict(n0);
                report.push(format!("[P{i}, P{j}] = 0"), c.max_abs(), 0.0);
            }
        }
        for i in 1..self.m {
            let lhs = commutator(self.p(i), &self.q)?;
            let rhs = SparseGenerator::linear_combination(
                dim,
                &[(-(i as f64), self.p(i + 1)), ((i - 1) as f64, self.p(i))],
            )?;
            let residual = lhs.add_scaled(1.0, &rhs, -1.0)?.restrict(n0).max_abs();
            report.push(format!("[P{i}, Q] = -{i} P{} + {} P{i}", i + 1, i - 1), residual, 0.0);
        }
        let basis = self.lie_basis(margin)?;
        let jacobi = verify_jacobi(&basis, 0.0)?;
        report.push(
            format!("Jacobi identity ({} triples)", jacobi.triples_checked),
            jacobi.max_residual,
            0.0,
        );
        Ok(report)
    }

    /// `H(t) = a(t) P_1 + b(t) Q`.
    pub fn family(&self) -> Result<GeneratorFamily> {
        GeneratorFamily::new(self.dim(), vec![(self.a.clone(), self.p[0].clone()), (self.b.clone(), self.q.clone())])
    }

    pub fn generator(&self, t: f64) -> Result<SparseGenerator> {
        Ok(self.family()?.at(t))
    }

    pub fn coefficients(&self, t: f64) -> Result<PureBirthCoefficients> {
        coefficients(&self.a, &self.b, self.m, t, self.tol)
    }

    /// `sum_i f_i P_i`, assembled directly from the shift structure.
    pub fn p_combination(&self, f: &[f64]) -> Result<SparseGenerator> {
        if f.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: f.len(),
            });
        }
        let over = self.m + 1;
        let mut trip = Vec::with_capacity(2 * self.m * over);
        for k in 0..over {
            for (idx, &fi) in f.iter().enumerate() {
                let i = idx + 1;
                if k + i > over {
                    break;
                }
                if fi != 0.0 {
                    trip.push(((k + i).min(over), k, fi));
                    trip.push((k + i - 1, k, -fi));
                }
            }
        }
        SparseGenerator::from_triplets(self.dim(), trip)
    }

    /// Distribution at `t` from `N(0) = 0`: one exponential `e^{sum f_i P_i}`
    /// applied to `e_0`, since `Q e_0 = 0`.
    pub fn solve_delta0(&self, t: f64) -> Result<PureBirthSolution> {
        let mut v = vec![0.0; self.dim()];
        v[0] = 1.0;
        self.solve_from(t, v, false)
    }

    /// Distribution at `t` from an arbitrary initial distribution: `e^{g Q}`
    /// first, then the collapsed `P` exponential.
    pub fn solve_general(&self, t: f64, v: &ProbabilityVector) -> Result<PureBirthSolution> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        self.solve_from(t, v.values().to_vec(), true)
    }

    fn solve_from(&self, t: f64, v: Vec<f64>, apply_q: bool) -> Result<PureBirthSolution> {
        let coefficients = self.coefficients(t)?;
        let krylov = KrylovExpm::new(self.krylov)?;
        let mut w = v;
        let mut matvecs = 0;
        if apply_q && coefficients.g != 0.0 {
            let out = krylov.apply(&self.q, coefficients.g, &w)?;
            matvecs += out.matvecs;
            w = out.vector;
        }
        if coefficients.f.iter().any(|&x| x != 0.0) {
            let sum = self.p_combination(&coefficients.f)?;
            let out = krylov.apply(&sum, 1.0, &w)?;
            matvecs += out.matvecs;
            w = out.vector;
        }
        Ok(PureBirthSolution {
            distribution: ProbabilityVector::new(w, Some(self.overflow_index()), SUM_TOL)?,
            coefficients,
            matvecs,
        })
    }

    /// The uncollapsed product `e^{f_1 P_1} ... e^{f_m P_m} e^{g Q}`.
    pub fn factorization(&self) -> Result<WeiNormanFactorization> {
        let mut factors: Vec<Factor> = self
            .p
            .iter()
            .enumerate()
            .map(|(i, p)| Factor::matrix(format!("P{}", i + 1), p.clone()))
            .collect();
        factors.push(Factor::matrix("Q", self.q.clone()));
        WeiNormanFactorization::new(
            self.dim(),
            factors,
            Arc::new(FactorCoefficients {
                a: self.a.clone(),
                b: self.b.clone(),
                m: self.m,
                tol: self.tol,
            }),
        )
    }
}

/// `sum_i f_i P_i` is far from normal: `e^{sum f_i P_i}` cancels large terms
/// of both signs and its norm grows with `t`, so short Krylov bases need ever
/// more substeps. A basis spanning the whole space needs exactly one.
fn default_krylov(dim: usize) -> KrylovOptions {
    let mut opts = KrylovOptions::default();
    if dim <= FULL_KRYLOV_MAX_DIM {
        opts.krylov_dim = dim;
    }
    opts
}

/// `f_1..f_m` and `g` for rates `a`, `b` at time `t`. All `f_i` with `i >= 2`
/// come from one vector-valued quadrature over `[0, t]`, split at the
/// discontinuities of both rates.
pub fn coefficients(a: &RateFunction, b: &RateFunction, m: usize, t: f64, tol: Tolerance) -> Result<PureBirthCoefficients> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    let mut f = vec![0.0; m];
    if t == 0.0 || m == 0 {
        return Ok(PureBirthCoefficients { t, f, g: 0.0 });
    }
    f[0] = a.antiderivative(t);
    let big_b = b.antiderivative(t);
    if m > 1 {
        let mut breakpoints = a.breakpoints_in(0.0, t);
        breakpoints.extend(b.breakpoints_in(0.0, t));
        let rest = integrate_vec(
            |u, out: &mut [f64]| {
                let au = a.eval(u);
                if au == 0.0 {
                    out.iter_mut().for_each(|x| *x = 0.0);
                    return;
                }
                // 1 - e^{B(u) - B(t)} lies in [0, 1), so its powers never overflow
                let w = -(b.antiderivative(u) - big_b).exp_m1();
                let mut term = au;
                for x in out.iter_mut() {
                    term *= w;
                    *x = term;
                }
            },
            m - 1,
            0.0,
            t,
            &breakpoints,
            tol,
        )?;
        f[1..].copy_from_slice(&rest);
    }
    Ok(PureBirthCoefficients { t, f, g: big_b })
}

struct FactorCoefficients {
    a: RateFunction,
    b: RateFunction,
    m: usize,
    tol: Tolerance,
}

impl Coefficients for FactorCoefficients {
    fn count(&self) -> usize {
        self.m + 1
    }

    fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        let c = coefficients(&self.a, &self.b, self.m, t, self.tol)?;
        let mut out = c.f;
        out.push(c.g);
        Ok(out)
    }
}
