//! Matrix exponentials: a dense exponential for small matrices and a Krylov
//! projection for the action `e^{tau A} v` of a large sparse matrix.
//!
//! The Krylov routine follows the adaptive sub-stepping scheme of `expv`
//! (Sidje, EXPOKIT): an Arnoldi basis of dimension `m` is built from the
//! current vector, the small Hessenberg exponential is augmented by two extra
//! rows to produce a local error estimate, and the step is shrunk until the
//! estimate meets the tolerance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::SparseGenerator;

pub const DEFAULT_DENSE_CAP: usize = 512;
pub const DEFAULT_KRYLOV_DIM: usize = 30;
pub const DEFAULT_EXPM_TOL: f64 = 1e-10;

/// `e^A` for a dense square matrix of dimension at most [`DEFAULT_DENSE_CAP`].
pub fn expm_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    expm_dense_capped(a, DEFAULT_DENSE_CAP)
}

pub fn expm_dense_capped(a: &DMatrix<f64>, cap: usize) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.nrows() > cap {
        return Err(Error::DenseCapExceeded { dim: a.nrows(), cap });
    }
    Ok(a.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    pub krylov_dim: usize,
    pub tol: f64,
    pub max_steps: usize,
    pub max_rejections: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            krylov_dim: DEFAULT_KRYLOV_DIM,
            tol: DEFAULT_EXPM_TOL,
            max_steps: 100_000,
            max_rejections: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpmOutput {
    pub vector: Vec<f64>,
    pub matvecs: usize,
    pub steps: usize,
    /// Accumulated local error estimates.
    pub error_estimate: f64,
}

/// `e^A v` with default Krylov settings and the given tolerance.
pub fn expm_action(a: &SparseGenerator, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    let krylov = KrylovExpm::new(KrylovOptions {
        tol,
        ..KrylovOptions::default()
    })?;
    Ok(krylov.apply(a, 1.0, v)?.vector)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KrylovExpm {
    opts: KrylovOptions,
}

const GAMMA: f64 = 0.9;
const DELTA: f64 = 1.2;
const BREAKDOWN_TOL: f64 = 1e-13;

impl KrylovExpm {
    pub fn new(opts: KrylovOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("Krylov tolerance must be positive, got {}", opts.tol)));
        }
        if opts.krylov_dim == 0 {
            return Err(Error::InvalidArgument("Krylov dimension must be at least 1".into()));
        }
        Ok(Self { opts })
    }

    pub fn options(&self) -> &KrylovOptions {
        &self.opts
    }

    /// `e^{tau A} v`. The error estimate is held below `tol * ||v||_1`.
    pub fn apply(&self, a: &SparseGenerator, tau: f64, v: &[f64]) -> Result<ExpmOutput> {
        a.check_len(v.len())?;
        let n = a.dim();
        let mut out = ExpmOutput {
            vector: v.to_vec(),
            matvecs: 0,
            steps: 0,
            error_estimate: 0.0,
        };
        let anorm = a.norm_inf();
        let v_norm1: f64 = v.iter().map(|x| x.abs()).sum();
        if tau == 0.0 || anorm == 0.0 || v_norm1 == 0.0 || n == 0 {
            return Ok(out);
        }

        let m = self.opts.krylov_dim.min(n);
        let tol = self.opts.tol * v_norm1;
        let t_out = tau.abs();
        let sgn = tau.signum();
        let rndoff = anorm * f64::EPSILON;
        let mf = m as f64;

        let mut w = v.to_vec();
        let mut beta = norm2(&w);
        let fact = ((mf + 1.0) / std::f64::consts::E).powf(mf + 1.0) * (2.0 * std::f64::consts::PI * (mf + 1.0)).sqrt();
        let mut t_new = round_step((1.0 / anorm) * ((fact * tol) / (4.0 * beta * anorm)).powf(1.0 / mf));
        let mut t_now = 0.0;

        let mut basis: Vec<Vec<f64>> = vec![vec![0.0; n]; m + 1];
        let mut p = vec![0.0; n];

        while t_now < t_out {
            if out.steps >= self.opts.max_steps {
                return Err(Error::KrylovNotConverged {
                    t_now,
                    t_out,
                    rejections: 0,
                });
            }
            let mut t_step = (t_out - t_now).min(t_new);

            for (b, x) in basis[0].iter_mut().zip(&w) {
                *b = x / beta;
            }
            let mut h = DMatrix::<f64>::zeros(m + 2, m + 2);
            let mut happy = false;
            let mut mb = m;
            for j in 0..m {
                a.matvec_into(&basis[j], &mut p);
                out.matvecs += 1;
                // modified Gram-Schmidt with one reorthogonalization pass
                for _ in 0..2 {
                    for (i, bi) in basis.iter().enumerate().take(j + 1) {
                        let hij = dot(bi, &p);
                        h[(i, j)] += hij;
                        axpy(-hij, bi, &mut p);
                    }
                }
                let s = norm2(&p);
                if s <= BREAKDOWN_TOL * anorm || j + 1 == n {
                    happy = true;
                    mb = j + 1;
                    t_step = t_out - t_now;
                    break;
                }
                h[(j + 1, j)] = s;
                for (b, x) in basis[j + 1].iter_mut().zip(&p) {
                    *b = x / s;
                }
            }
            let mut avnorm = 0.0;
            if !happy {
                h[(m + 1, m)] = 1.0;
                a.matvec_into(&basis[m], &mut p);
                out.matvecs += 1;
                avnorm = norm2(&p);
            }

            let mut rejections = 0;
            let (f, err_loc, xm) = loop {
                let mx = if happy { mb } else { m + 2 };
                let sub = h.view((0, 0), (mx, mx)) * (sgn * t_step);
                let f = expm_dense(&sub.into_owned())?;
                if happy {
                    break (f, rndoff, 1.0 / mf);
                }
                let phi1 = (beta * f[(m, 0)]).abs();
                let phi2 = (beta * f[(m + 1, 0)] * avnorm).abs();
                let (err_loc, xm) = if phi1 > 10.0 * phi2 {
                    (phi2, 1.0 / mf)
                } else if phi1 > phi2 {
                    (phi1 * phi2 / (phi1 - phi2), 1.0 / mf)
                } else {
                    (phi1, 1.0 / (mf - 1.0).max(1.0))
                };
                if err_loc <= DELTA * t_step * tol {
                    break (f, err_loc, xm);
                }
                if rejections == self.opts.max_rejections {
                    return Err(Error::KrylovNotConverged {
                        t_now,
                        t_out,
                        rejections,
                    });
                }
                t_step = round_step(GAMMA * t_step * (t_step * tol / err_loc).powf(xm));
                rejections += 1;
            };

            let mx = if happy { mb } else { m + 1 };
            w.iter_mut().for_each(|x| *x = 0.0);
            for (i, bi) in basis.iter().enumerate().take(mx) {
                axpy(beta * f[(i, 0)], bi, &mut w);
            }
            beta = norm2(&w);
            t_now += t_step;
            out.steps += 1;
            out.error_estimate += err_loc.max(rndoff);
            if beta == 0.0 {
                break;
            }
            t_new = round_step(GAMMA * t_step * (t_step * tol / err_loc.max(rndoff)).powf(xm));
        }
        out.vector = w;
        Ok(out)
    }
}

/// Rounds a step up to two significant digits, as EXPOKIT does.
fn round_step(t: f64) -> f64 {
    if !t.is_finite() || t <= 0.0 {
        return t;
    }
    let s = 10f64.powf(t.log10().floor() - 1.0);
    (t / s).ceil() * s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dense_zero_is_identity() {
        let e = expm_dense(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn dense_diagonal() {
        let e = expm_dense(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]))).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], 1f64.exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 1)], 2f64.exp(), epsilon = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn dense_nilpotent() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm_dense(&a).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((e - expected).amax() < 1e-15);
    }

    #[test]
    fn dense_cap_enforced() {
        assert!(matches!(
            expm_dense_capped(&DMatrix::zeros(4, 4), 3),
            Err(Error::DenseCapExceeded { dim: 4, cap: 3 })
        ));
    }

    #[test]
    fn action_of_zero_matrix() {
        let v = vec![0.25, 0.5, 0.25];
        assert_eq!(expm_action(&SparseGenerator::zeros(3), &v, 1e-10).unwrap(), v);
    }

    #[test]
    fn action_of_diagonal() {
        let d = [-1.0, 0.5, 2.0, -3.0];
        let v = [1.0, 2.0, 3.0, 4.0];
        let out = expm_action(&SparseGenerator::diagonal(&d), &v, 1e-12).unwrap();
        for k in 0..4 {
            assert!((out[k] - d[k].exp() * v[k]).abs() < 1e-10 * v[k].abs().max(1.0) * d[k].exp().max(1.0));
        }
    }

    #[test]
    fn action_substeps_on_stiff_chain() {
        // a long birth chain forces several Krylov sub-steps with m = 10
        let n = 80;
        let a = SparseGenerator::from_triplets(
            n,
            (0..n - 1).flat_map(|k| [(k, k, -5.0), (k + 1, k, 5.0)]),
        )
        .unwrap();
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        let krylov = KrylovExpm::new(KrylovOptions {
            krylov_dim: 10,
            tol: 1e-12,
            ..KrylovOptions::default()
        })
        .unwrap();
        let out = krylov.apply(&a, 4.0, &v).unwrap();
        assert!(out.steps > 1);
        let dense = expm_dense(&(a.to_dense() * 4.0)).unwrap();
        for k in 0..n {
            assert!((out.vector[k] - dense[(k, 0)]).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn negative_tau_inverts() {
        let a = SparseGenerator::from_triplets(3, [(0, 0, -1.0), (1, 0, 1.0), (1, 1, -0.5), (2, 1, 0.5)]).unwrap();
        let v = [0.2, 0.3, 0.5];
        let k = KrylovExpm::default();
        let fwd = k.apply(&a, 0.7, &v).unwrap().vector;
        let back = k.apply(&a, -0.7, &fwd).unwrap().vector;
        for i in 0..3 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
    }
}
