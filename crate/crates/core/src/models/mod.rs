//! The three population models with closed Lie algebras: an immigration-death
//! process, a surveillance cohort under an exogenous epidemic, and a capped
//! pure birth process.

pub mod birth_death;
pub mod pure_birth;
pub mod sir_cohort;

pub use birth_death::BirthDeathModel;
pub use pure_birth::PureBirthModel;
pub use sir_cohort::{CohortModel, CohortStateSpace};

use std::fmt;

/// Outcome of one named algebraic identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
}

impl IdentityCheck {
    pub fn new(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tol,
        }
    }

    pub fn passed(&self) -> bool {
        self.residual <= self.tol
    }
}

/// A list of identity checks; the report passes when every check does.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlgebraReport {
    pub checks: Vec<IdentityCheck>,
}

impl AlgebraReport {
    pub fn push(&mut self, name: impl Into<String>, residual: f64, tol: f64) {
        self.checks.push(IdentityCheck::new(name, residual, tol));
    }

    pub fn extend(&mut self, other: AlgebraReport) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(IdentityCheck::passed)
    }

    pub fn first_failure(&self) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| !c.passed())
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

impl fmt::Display for AlgebraReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed() { "ok  " } else { "FAIL" };
            writeln!(f, "{status} {} (residual {:e})", c.name, c.residual)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed()).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}
