//! Transient distributions of time-inhomogeneous continuous-time Markov chains
//! by ordered products of matrix exponentials over a closed Lie algebra of
//! generators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod expm;
pub mod factorization;
pub mod lie;
pub mod models;
pub mod ode;
pub mod quadrature;
pub mod rates;
pub mod sparse;

pub use error::{Error, Result};
pub use expm::{expm_action, expm_dense, KrylovExpm, KrylovOptions};
pub use factorization::{apply_factorization, Coefficients, Factor, WeiNormanFactorization};
pub use lie::{commutator, exp_ad, structure_constants, verify_jacobi, LieBasis};
pub use quadrature::{integrate, integrate_vec, weighted_integral, CumulativeIntegral, Tolerance};
pub use rates::RateFunction;
pub use sparse::SparseGenerator;
pub use ode::{euler_solve, rk45_solve, GeneratorFamily, OdeOptions, ProbabilityVector, TimeGenerator};
pub use models::{BirthDeathModel, CohortModel, PureBirthModel};
