//! Nonnegative LASSO over a concept dictionary:
//!
//! ```text
//! minimize_w  ||C w - z||² + 2λ Σ_j w_j   subject to  w ≥ 0
//! ```
//!
//! Two solvers share this objective: cyclic coordinate descent
//! ([`solve_cd`]) as the reference, and batched ADMM ([`solve_admm_batch`])
//! for large datasets. Dictionaries are passed as `atoms`, one concept
//! vector per row (c × d).

mod admm;
mod calibrate;
mod cd;
mod factor;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use admm::{solve_admm_batch, solve_admm_batch_with};
pub use calibrate::{
    calibrate_lambda, calibrate_lambda_with, lambda_max, Calibration, CalibrationResult, LAMBDA_FLOOR,
};
pub use cd::{solve_cd, solve_cd_batch, CD_KKT_TOL};
pub use factor::{cholesky, precompute_factorization, Factorization};

/// Weights at or below this are treated as zero on export.
pub const EXPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Cd,
    Admm,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(SolverKind::Cd),
            "admm" => Ok(SolverKind::Admm),
            _ => Err(Error::Invalid(format!("unknown solver {s:?}, expected cd or admm"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.25,
            rho: 5.0,
            tol: 1e-4,
            max_iter: 10_000,
            solver: SolverKind::Admm,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn with_solver(self, solver: SolverKind) -> Self {
        Self { solver, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Invalid(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Invalid(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one per-sample solve.
///
/// For ADMM the residuals are the primal `||w - z||` and dual
/// `ρ||z_k+1 - z_k||` norms at the last iteration; for coordinate descent
/// they are the KKT violation and the last full-sweep coordinate change.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub w: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub converged: bool,
}

impl SolverResult {
    /// Indices and weights above [`EXPORT_THRESHOLD`].
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.w
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > EXPORT_THRESHOLD)
            .map(|(j, w)| (j, *w))
            .collect()
    }

    pub fn l0(&self) -> usize {
        self.w.iter().filter(|w| **w > EXPORT_THRESHOLD).count()
    }

    pub fn l1(&self) -> f64 {
        self.w.iter().sum()
    }
}

pub fn soft_threshold(a: f64, kappa: f64) -> f64 {
    if a > kappa {
        a - kappa
    } else if a < -kappa {
        a + kappa
    } else {
        0.0
    }
}

fn reconstruct(atoms: ArrayView2<f64>, w: ArrayView1<f64>) -> Array1<f64> {
    atoms.t().dot(&w)
}

/// `||C w - z||² + 2λ Σ w_j`.
pub fn objective_value(
    atoms: ArrayView2<f64>,
    target: ArrayView1<f64>,
    w: ArrayView1<f64>,
    lambda: f64,
) -> Result<f64> {
    check_dims(atoms, target, Some(w))?;
    let residual = reconstruct(atoms, w) - target;
    Ok(residual.dot(&residual) + 2.0 * lambda * w.sum())
}

/// Largest deviation from the first-order optimality conditions.
///
/// With `g = Cᵀ(z - C w)`, active coordinates need `g_j = λ` and inactive
/// ones `g_j ≤ λ`.
pub fn kkt_violation(atoms: ArrayView2<f64>, target: ArrayView1<f64>, w: ArrayView1<f64>, lambda: f64) -> Result<f64> {
    check_dims(atoms, target, Some(w))?;
    let residual = &target - &reconstruct(atoms, w);
    let g = atoms.dot(&residual);
    Ok(g.iter()
        .zip(w.iter())
        .map(|(&g, &wj)| {
            if wj > EXPORT_THRESHOLD {
                (g - lambda).abs()
            } else {
                (g - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

pub(crate) fn check_dims(atoms: ArrayView2<f64>, target: ArrayView1<f64>, w: Option<ArrayView1<f64>>) -> Result<()> {
    if target.len() != atoms.ncols() {
        return Err(Error::Dimension(format!(
            "target has {} dims, dictionary has {}",
            target.len(),
            atoms.ncols()
        )));
    }
    if let Some(w) = w {
        if w.len() != atoms.nrows() {
            return Err(Error::Dimension(format!(
                "weight vector has {} entries, dictionary has {} concepts",
                w.len(),
                atoms.nrows()
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}
