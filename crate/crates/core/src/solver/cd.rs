//! Cyclic coordinate descent with nonnegative clipping.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::factor::{cholesky, cholesky_solve};
use super::{check_dims, check_finite, kkt_violation, objective_value, SolverConfig, SolverResult};
use crate::Result;

/// KKT violation a coordinate-descent solution must reach to count as converged.
pub const CD_KKT_TOL: f64 = 1e-6;

/// Coordinate changes below this end an active-set pass.
const ACTIVE_PASS_TOL: f64 = 1e-9;

/// Active-set sweeps between full sweeps before trying the direct face solve.
const MAX_ACTIVE_PASSES: usize = 50;

struct State<'a> {
    atoms: ArrayView2<'a, f64>,
    target: ArrayView1<'a, f64>,
    col_sq: Vec<f64>,
    lambda: f64,
    w: Array1<f64>,
    residual: Array1<f64>,
}

impl State<'_> {
    fn refresh_residual(&mut self) {
        self.residual = &self.target - &self.atoms.t().dot(&self.w);
    }

    fn update(&mut self, j: usize) -> f64 {
        let sq = self.col_sq[j];
        if sq == 0.0 {
            return 0.0;
        }
        let col = self.atoms.row(j);
        let old = self.w[j];
        let g = col.dot(&self.residual) + sq * old;
        let new = ((g - self.lambda) / sq).max(0.0);
        if new != old {
            self.residual.scaled_add(old - new, &col);
            self.w[j] = new;
        }
        (new - old).abs() * sq.sqrt()
    }

    fn sweep(&mut self, coords: impl Iterator<Item = usize>) -> f64 {
        coords.map(|j| self.update(j)).fold(0.0, f64::max)
    }

    /// Jumps to the minimizer on the face spanned by `active` when it is
    /// strictly positive and not worse. Cyclic updates crawl on badly
    /// conditioned faces; one Gram solve finishes them.
    fn solve_face(&mut self, active: &[usize]) -> Result<()> {
        let gram = {
            let rows = self.atoms.select(Axis(0), active);
            rows.dot(&rows.t())
        };
        let Ok(lower) = cholesky(gram.view()) else {
            return Ok(());
        };
        let upper = lower.t().as_standard_layout().into_owned();
        let mut w_face: Vec<f64> = active
            .iter()
            .map(|&j| self.atoms.row(j).dot(&self.target) - self.lambda)
            .collect();
        cholesky_solve(&lower, &upper, &mut w_face);
        if !w_face.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Ok(());
        }
        let mut candidate = Array1::zeros(self.w.len());
        for (&j, &v) in active.iter().zip(&w_face) {
            candidate[j] = v;
        }
        let before = objective_value(self.atoms, self.target, self.w.view(), self.lambda)?;
        let after = objective_value(self.atoms, self.target, candidate.view(), self.lambda)?;
        if after <= before {
            self.w = candidate;
            self.refresh_residual();
        }
        Ok(())
    }
}

/// Reference solver: full sweeps alternate with passes over the active set,
/// followed by a direct solve on that set when the passes stall.
///
/// Converged once a full sweep moves no coordinate by more than
/// `tol · max(1, ||w||∞)` and the KKT violation is at most [`CD_KKT_TOL`].
/// `max_iter` bounds the total number of sweeps, full or active.
pub fn solve_cd(atoms: ArrayView2<f64>, target: ArrayView1<f64>, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    check_dims(atoms, target, None)?;
    check_finite("dictionary", atoms.iter().copied())?;
    check_finite("target", target.iter().copied())?;

    let c = atoms.nrows();
    let mut s = State {
        atoms,
        target,
        col_sq: atoms.rows().into_iter().map(|r| r.dot(&r)).collect(),
        lambda: config.lambda,
        w: Array1::zeros(c),
        residual: target.to_owned(),
    };

    let mut sweeps = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut kkt = f64::INFINITY;
    while sweeps < config.max_iter {
        s.refresh_residual();
        last_change = s.sweep(0..c);
        sweeps += 1;

        let scale = s.w.iter().fold(1.0f64, |m, v| m.max(*v));
        if last_change < config.tol * scale {
            kkt = kkt_violation(atoms, target, s.w.view(), config.lambda)?;
            if kkt <= CD_KKT_TOL {
                converged = true;
                break;
            }
        }

        let active: Vec<usize> = (0..c).filter(|&j| s.w[j] > 0.0).collect();
        let mut settled = active.is_empty();
        for _ in 0..MAX_ACTIVE_PASSES {
            if settled || sweeps >= config.max_iter {
                break;
            }
            settled = s.sweep(active.iter().copied()) < ACTIVE_PASS_TOL;
            sweeps += 1;
        }
        if !settled {
            s.solve_face(&active)?;
        }
    }
    if !converged {
        kkt = kkt_violation(atoms, target, s.w.view(), config.lambda)?;
    }

    let objective = objective_value(atoms, target, s.w.view(), config.lambda)?;
    Ok(SolverResult {
        w: s.w.to_vec(),
        iterations: sweeps,
        primal_residual: kkt,
        dual_residual: last_change,
        objective,
        converged,
    })
}

/// Independent per-row solves, run in parallel and returned in input order.
pub fn solve_cd_batch(
    atoms: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    config: &SolverConfig,
) -> Result<Vec<SolverResult>> {
    (0..targets.nrows())
        .into_par_iter()
        .map(|i| solve_cd(atoms, targets.row(i), config))
        .collect()
}
