//! Choosing λ by target sparsity.

use ndarray::ArrayView2;

use super::{precompute_factorization, solve_admm_batch_with, solve_cd_batch, SolverConfig, SolverKind, SolverResult};
use crate::{Error, Result};

/// Smallest λ considered by the search.
pub const LAMBDA_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub target_l0: usize,
    /// Accept once the mean l0 is within this distance of the target.
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Calibration {
    pub fn new(target_l0: usize) -> Self {
        Self {
            target_l0,
            tolerance: 2.0,
            max_steps: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub lambda: f64,
    pub mean_l0: f64,
    pub steps: usize,
}

/// Smallest λ for which `w = 0` is optimal for every row of `targets`:
/// `max_{i,j} c_jᵀ z_i`.
pub fn lambda_max(atoms: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    if atoms.ncols() != targets.ncols() {
        return Err(Error::Dimension(format!(
            "targets have {} dims, dictionary has {}",
            targets.ncols(),
            atoms.ncols()
        )));
    }
    Ok(targets.dot(&atoms.t()).iter().fold(0.0f64, |m, v| m.max(*v)))
}

pub fn calibrate_lambda(
    atoms: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    target_l0: usize,
    config: &SolverConfig,
) -> Result<f64> {
    Ok(calibrate_lambda_with(atoms, targets, &Calibration::new(target_l0), config)?.lambda)
}

/// Searches λ so the mean l0 over `targets` approaches the target.
///
/// λ is halved from [`lambda_max`] until the mean l0 reaches the target
/// (or [`LAMBDA_FLOOR`]), which brackets the answer using only sparse,
/// fast-converging solves. The bracket is then bisected at geometric
/// midpoints. Returns the first λ within tolerance, or the closest one seen
/// after `max_steps` solves.
pub fn calibrate_lambda_with(
    atoms: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    calibration: &Calibration,
    config: &SolverConfig,
) -> Result<CalibrationResult> {
    if targets.nrows() == 0 {
        return Err(Error::Invalid("calibration needs at least one sample".into()));
    }
    let upper = lambda_max(atoms, targets)?;
    if calibration.target_l0 == 0 || upper <= LAMBDA_FLOOR {
        return Ok(CalibrationResult {
            lambda: upper.max(LAMBDA_FLOOR),
            mean_l0: 0.0,
            steps: 0,
        });
    }

    let factor = match config.solver {
        SolverKind::Admm => Some(precompute_factorization(atoms, config.rho)?),
        SolverKind::Cd => None,
    };
    let mean_l0 = |lambda: f64| -> Result<f64> {
        let cfg = config.with_lambda(lambda);
        let results: Vec<SolverResult> = match &factor {
            Some(f) => solve_admm_batch_with(atoms, targets, f, &cfg)?,
            None => solve_cd_batch(atoms, targets, &cfg)?,
        };
        Ok(results.iter().map(|r| r.l0() as f64).sum::<f64>() / results.len() as f64)
    };

    let target = calibration.target_l0 as f64;
    let mut best = CalibrationResult {
        lambda: upper,
        mean_l0: 0.0,
        steps: 0,
    };
    let mut steps = 0;
    let mut probe = |lambda: f64, best: &mut CalibrationResult| -> Result<f64> {
        steps += 1;
        let l0 = mean_l0(lambda)?;
        log::debug!("calibration step {steps}: lambda={lambda:.6e} mean_l0={l0:.3}");
        if (l0 - target).abs() < (best.mean_l0 - target).abs() {
            *best = CalibrationResult {
                lambda,
                mean_l0: l0,
                steps,
            };
        }
        best.steps = steps;
        Ok(l0)
    };

    let (mut lo, mut hi) = (LAMBDA_FLOOR, upper);
    while best.steps < calibration.max_steps {
        let lambda = (hi / 2.0).max(LAMBDA_FLOOR);
        let l0 = probe(lambda, &mut best)?;
        if (l0 - target).abs() <= calibration.tolerance {
            return Ok(best_at(lambda, l0, best.steps));
        }
        if l0 > target {
            lo = lambda;
            break;
        }
        hi = lambda;
        if lambda <= LAMBDA_FLOOR {
            return Ok(best);
        }
    }
    while best.steps < calibration.max_steps {
        let mid = (lo * hi).sqrt();
        let l0 = probe(mid, &mut best)?;
        if (l0 - target).abs() <= calibration.tolerance {
            return Ok(best_at(mid, l0, best.steps));
        }
        if l0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

fn best_at(lambda: f64, mean_l0: f64, steps: usize) -> CalibrationResult {
    CalibrationResult { lambda, mean_l0, steps }
}
