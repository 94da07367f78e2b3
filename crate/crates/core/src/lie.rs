//! Commutators, adjoint powers, structure constants and Jacobi checks over
//! finite sets of sparse matrices.
//!
//! Truncated representations of infinite matrices only satisfy their bracket
//! relations away from the truncation edge, so every [`LieBasis`] carries an
//! `interior_dim` and all relation checks are made on the top-left
//! `interior_dim x interior_dim` block.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::sparse::SparseGenerator;

pub const DEFAULT_EXP_AD_MAX_TERMS: usize = 200;

/// `[X, Y] = XY - YX`.
pub fn commutator(x: &SparseGenerator, y: &SparseGenerator) -> Result<SparseGenerator> {
    x.check_dim(y)?;
    let xy = x.matmul(y)?;
    let yx = y.matmul(x)?;
    xy.add_scaled(1.0, &yx, -1.0)
}

/// `(ad X)^k Y`, i.e. `k` nested commutators with `X` on the left.
pub fn ad_power(x: &SparseGenerator, y: &SparseGenerator, k: usize) -> Result<SparseGenerator> {
    x.check_dim(y)?;
    let mut out = y.clone();
    for _ in 0..k {
        if out.is_zero() {
            break;
        }
        out = commutator(x, &out)?;
    }
    Ok(out)
}

/// `e^{x ad X} Y` with the default term cap.
pub fn exp_ad(x_mat: &SparseGenerator, x: f64, y: &SparseGenerator, tol: f64) -> Result<SparseGenerator> {
    exp_ad_with_cap(x_mat, x, y, tol, DEFAULT_EXP_AD_MAX_TERMS)
}

/// `e^{x ad X} Y = sum_k x^k/k! (ad X)^k Y`.
///
/// The series stops as soon as a term is exactly zero (nilpotent case) or a
/// new iterate is a scalar multiple `c` of the previous one, in which case the
/// remaining tail is summed in closed form. Otherwise it stops when the
/// added term falls below `tol` in max-abs norm.
pub fn exp_ad_with_cap(
    x_mat: &SparseGenerator,
    x: f64,
    y: &SparseGenerator,
    tol: f64,
    max_terms: usize,
) -> Result<SparseGenerator> {
    x_mat.check_dim(y)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let dim = y.dim();
    if x == 0.0 {
        return Ok(y.clone());
    }
    let mut sum = y.clone();
    let mut iterate = y.clone();
    // x^(k-1)/(k-1)! for the current `iterate = (ad X)^(k-1) Y`
    let mut weight = 1.0;
    for k in 1..=max_terms {
        let next = commutator(x_mat, &iterate)?;
        if next.is_zero() {
            return Ok(sum);
        }
        if let Some(c) = proportionality(&next, &iterate) {
            let tail = weight * proportional_tail(c * x, k);
            return SparseGenerator::linear_combination(dim, &[(1.0, &sum), (tail, &iterate)]);
        }
        weight *= x / k as f64;
        let contribution = next.scaled(weight);
        sum = sum.add_scaled(1.0, &contribution, 1.0)?;
        if contribution.max_abs() < tol {
            return Ok(sum);
        }
        iterate = next;
    }
    Err(Error::SeriesNotConverged { terms: max_terms })
}

/// `sum_{i>=1} z^i (k-1)! / (k-1+i)!`.
fn proportional_tail(z: f64, k: usize) -> f64 {
    if k == 1 {
        return z.exp_m1();
    }
    let mut term = 1.0;
    let mut sum = 0.0;
    for i in 1..10_000 {
        term *= z / (k - 1 + i) as f64;
        sum += term;
        if term.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    sum
}

/// Returns `c` when `a == c * b` to rounding.
fn proportionality(a: &SparseGenerator, b: &SparseGenerator) -> Option<f64> {
    let (mut ab, mut bb) = (0.0, 0.0);
    for (r, c, v) in b.triplets() {
        ab += a.get(r, c) * v;
        bb += v * v;
    }
    if bb == 0.0 {
        return None;
    }
    let c = ab / bb;
    let scale = a.max_abs().max(c.abs() * b.max_abs());
    let diff = a.add_scaled(1.0, b, -c).ok()?;
    (diff.max_abs() <= 1e-14 * scale).then_some(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisElement {
    pub label: String,
    pub matrix: SparseGenerator,
}

impl BasisElement {
    pub fn new(label: impl Into<String>, matrix: SparseGenerator) -> Self {
        Self {
            label: label.into(),
            matrix,
        }
    }
}

/// An ordered set of matrices closed (on the interior block) under the
/// commutator, together with its structure constants `xi_ij^k`.
#[derive(Debug, Clone)]
pub struct LieBasis {
    elements: Vec<BasisElement>,
    structure: BTreeMap<(usize, usize), Vec<(usize, f64)>>,
    interior_dim: usize,
    exact: bool,
}

impl LieBasis {
    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn interior_dim(&self) -> usize {
        self.interior_dim
    }

    /// Whether the constants were extracted with exact rational arithmetic.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.label == label)
    }

    pub fn matrix(&self, label: &str) -> Option<&SparseGenerator> {
        self.index_of(label).map(|i| &self.elements[i].matrix)
    }

    /// Nonzero `(k, xi_ij^k)` pairs for `[H_i, H_j]`.
    pub fn bracket(&self, i: usize, j: usize) -> &[(usize, f64)] {
        self.structure.get(&(i, j)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.bracket(i, j)
            .iter()
            .find(|(kk, _)| *kk == k)
            .map_or(0.0, |&(_, v)| v)
    }

    /// `sum_k xi_ij^k H_k` on the full matrices.
    pub fn reconstruct_bracket(&self, i: usize, j: usize) -> SparseGenerator {
        let dim = self.elements[0].matrix.dim();
        let terms: Vec<(f64, &SparseGenerator)> = self
            .bracket(i, j)
            .iter()
            .map(|&(k, v)| (v, &self.elements[k].matrix))
            .collect();
        SparseGenerator::linear_combination(dim, &terms).expect("basis shares one dimension")
    }
}

/// Extracts the structure constants of `basis` on the interior block.
///
/// With `tol == 0` the basis must be integer-valued and the decomposition is
/// solved exactly over the rationals; any nonzero residual is `NotClosed`.
/// Otherwise a floating least-squares decomposition is used and residuals up
/// to `tol` (max-abs) are accepted.
pub fn structure_constants(basis: Vec<BasisElement>, interior_dim: usize, tol: f64) -> Result<LieBasis> {
    let Some(first) = basis.first() else {
        return Err(Error::InvalidArgument("empty basis".into()));
    };
    let dim = first.matrix.dim();
    for e in &basis {
        if e.matrix.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.matrix.dim(),
            });
        }
    }
    if interior_dim == 0 || interior_dim > dim {
        return Err(Error::InvalidArgument(format!(
            "interior dimension {interior_dim} must lie in 1..={dim}"
        )));
    }
    if tol < 0.0 {
        return Err(Error::InvalidArgument(format!("negative tolerance {tol}")));
    }
    let exact = tol == 0.0;
    if exact && !basis.iter().all(|e| e.matrix.is_integer_valued()) {
        return Err(Error::InvalidArgument(
            "exact structure constants need integer-valued matrices".into(),
        ));
    }

    let interiors: Vec<SparseGenerator> = basis.iter().map(|e| e.matrix.restrict(interior_dim)).collect();
    let support: Vec<(usize, usize)> = interiors
        .iter()
        .flat_map(|m| m.triplets().map(|(r, c, _)| (r, c)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let row_of: BTreeMap<(usize, usize), usize> = support.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let columns: Vec<Vec<f64>> = interiors
        .iter()
        .map(|m| {
            let mut col = vec![0.0; support.len()];
            for (r, c, v) in m.triplets() {
                col[row_of[&(r, c)]] = v;
            }
            col
        })
        .collect();

    let solver: Box<dyn SpanSolver> = if exact {
        Box::new(RationalSolver::new(&columns)?)
    } else {
        Box::new(FloatSolver::new(&columns)?)
    };

    let mut structure: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for i in 0..basis.len() {
        for j in 0..basis.len() {
            if i == j {
                continue;
            }
            if let Some(prev) = structure.get(&(j, i)) {
                let negated: Vec<(usize, f64)> = prev.iter().map(|&(k, v)| (k, -v)).collect();
                structure.insert((i, j), negated);
                continue;
            }
            let bracket = commutator(&basis[i].matrix, &basis[j].matrix)?.restrict(interior_dim);
            let mut rhs = vec![0.0; support.len()];
            let mut outside = 0.0f64;
            for (r, c, v) in bracket.triplets() {
                match row_of.get(&(r, c)) {
                    Some(&row) => rhs[row] = v,
                    None => outside = outside.max(v.abs()),
                }
            }
            let not_closed = |residual: f64| Error::NotClosed {
                left: basis[i].label.clone(),
                right: basis[j].label.clone(),
                residual,
            };
            if outside > tol {
                return Err(not_closed(outside));
            }
            let (coeffs, residual) = solver.solve(&rhs);
            if residual > tol {
                return Err(not_closed(residual));
            }
            let nonzero: Vec<(usize, f64)> = coeffs
                .into_iter()
                .enumerate()
                .filter(|&(_, v)| v != 0.0)
                .collect();
            if !nonzero.is_empty() {
                structure.insert((i, j), nonzero);
            }
        }
    }
    Ok(LieBasis {
        elements: basis,
        structure,
        interior_dim,
        exact,
    })
}

trait SpanSolver {
    /// Coefficients of `rhs` in the column span and the max-abs residual.
    fn solve(&self, rhs: &[f64]) -> (Vec<f64>, f64);
}

struct FloatSolver {
    basis: DMatrix<f64>,
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl FloatSolver {
    fn new(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns[0].len();
        let m = columns.len();
        if rows < m {
            return Err(Error::NotIndependent { rank: rows, expected: m });
        }
        let basis = DMatrix::from_fn(rows, m, |r, c| columns[c][r]);
        let svd = basis.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * smax.max(f64::MIN_POSITIVE))
            .count();
        if rank < m {
            return Err(Error::NotIndependent { rank, expected: m });
        }
        Ok(Self { basis, svd })
    }
}

impl SpanSolver for FloatSolver {
    fn solve(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let b = DVector::from_column_slice(rhs);
        let x = self.svd.solve(&b, 0.0).expect("svd computed with u and v");
        let residual = (&self.basis * &x - &b).amax();
        (x.iter().copied().collect(), residual)
    }
}

/// Exact Gaussian elimination over the rationals.
struct RationalSolver {
    columns: Vec<Vec<BigRational>>,
    m: usize,
}

impl RationalSolver {
    fn new(columns: &[Vec<f64>]) -> Result<Self> {
        let cols: Vec<Vec<BigRational>> = columns
            .iter()
            .map(|c| c.iter().map(|&v| to_rational(v)).collect())
            .collect();
        let m = cols.len();
        let solver = Self { columns: cols, m };
        let rank = solver.eliminate(None).0;
        if rank < m {
            return Err(Error::NotIndependent { rank, expected: m });
        }
        Ok(solver)
    }

    /// Gaussian elimination on `[B | rhs]`. Returns the rank of `B`, the
    /// solution (when full rank) and the largest inconsistency.
    fn eliminate(&self, rhs: Option<&[BigRational]>) -> (usize, Vec<BigRational>, BigRational) {
        let rows = self.columns.first().map_or(0, Vec::len);
        let width = self.m + 1;
        let mut a: Vec<Vec<BigRational>> = (0..rows)
            .map(|r| {
                let mut row: Vec<BigRational> = self.columns.iter().map(|c| c[r].clone()).collect();
                row.push(rhs.map_or_else(BigRational::zero, |b| b[r].clone()));
                row
            })
            .collect();
        let mut pivots = Vec::new();
        let mut pr = 0;
        for col in 0..self.m {
            let Some(p) = (pr..rows).find(|&r| !a[r][col].is_zero()) else {
                continue;
            };
            a.swap(pr, p);
            let pivot = a[pr][col].clone();
            for r in 0..rows {
                if r == pr || a[r][col].is_zero() {
                    continue;
                }
                let factor = &a[r][col] / &pivot;
                let (target, source) = if r < pr {
                    let (lo, hi) = a.split_at_mut(pr);
                    (&mut lo[r], &hi[0])
                } else {
                    let (lo, hi) = a.split_at_mut(r);
                    (&mut hi[0], &lo[pr])
                };
                for (x, y) in target[col..width].iter_mut().zip(&source[col..width]) {
                    *x -= &factor * y;
                }
            }
            pivots.push((pr, col));
            pr += 1;
        }
        let rank = pivots.len();
        let mut x = vec![BigRational::zero(); self.m];
        for &(r, col) in &pivots {
            x[col] = &a[r][self.m] / &a[r][col];
        }
        let inconsistency = a[rank..]
            .iter()
            .map(|row| row[self.m].abs())
            .max()
            .unwrap_or_else(BigRational::zero);
        (rank, x, inconsistency)
    }
}

impl SpanSolver for RationalSolver {
    fn solve(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let b: Vec<BigRational> = rhs.iter().map(|&v| to_rational(v)).collect();
        let (_, x, inconsistency) = self.eliminate(Some(&b));
        let coeffs = x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        (coeffs, inconsistency.to_f64().unwrap_or(f64::INFINITY))
    }
}

fn to_rational(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiReport {
    pub triples_checked: usize,
    pub max_residual: f64,
    pub worst_triple: Option<(usize, usize, usize)>,
    pub tol: f64,
}

impl JacobiReport {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tol
    }
}

/// Checks `[u,[v,w]] + [v,[w,u]] + [w,[u,v]] = 0` on the interior block for
/// every triple of distinct basis elements.
pub fn verify_jacobi(basis: &LieBasis, tol: f64) -> Result<JacobiReport> {
    let els = basis.elements();
    let n0 = basis.interior_dim();
    let mut brackets = BTreeMap::new();
    for i in 0..els.len() {
        for j in 0..els.len() {
            if i != j {
                brackets.insert((i, j), commutator(&els[i].matrix, &els[j].matrix)?);
            }
        }
    }
    let mut report = JacobiReport {
        triples_checked: 0,
        max_residual: 0.0,
        worst_triple: None,
        tol,
    };
    for i in 0..els.len() {
        for j in i + 1..els.len() {
            for k in j + 1..els.len() {
                let (u, v, w) = (&els[i].matrix, &els[j].matrix, &els[k].matrix);
                let a = commutator(u, &brackets[&(j, k)])?;
                let b = commutator(v, &brackets[&(k, i)])?;
                let c = commutator(w, &brackets[&(i, j)])?;
                let total = SparseGenerator::linear_combination(u.dim(), &[(1.0, &a), (1.0, &b), (1.0, &c)])?;
                let residual = total.restrict(n0).max_abs();
                report.triples_checked += 1;
                if residual > report.max_residual || report.worst_triple.is_none() {
                    report.max_residual = report.max_residual.max(residual);
                    report.worst_triple = Some((i, j, k));
                }
            }
        }
    }
    Ok(report)
}
