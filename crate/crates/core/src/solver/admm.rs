//! Batched ADMM for the nonnegative LASSO.
//!
//! Per sample, with `v = z − u`:
//!
//! ```text
//! w ← (2CᵀC + ρI)⁻¹ (ρ v + 2Cᵀ target)
//! z ← max(0, S_{2λ/ρ}(w + u))
//! u ← u + w − z
//! ```
//!
//! The threshold is `2λ/ρ` because the ℓ1 term carries the factor 2 of the
//! objective `||Cw − z||² + 2λ Σ w`.
//!
//! A sample stops once `||w − z|| < tol` and `ρ||z − z_prev|| < tol`; the
//! batch runs until every sample has stopped or `max_iter` is reached. The
//! returned weights are the `z` iterate, which is nonnegative and exactly
//! sparse.
//!
//! Each sample's arithmetic is independent of the rest of the batch: dense
//! products go through one matrix-multiply kernel whose per-entry
//! accumulation order depends only on the inner dimension, so results are
//! bitwise identical however the samples are batched.

use ndarray::{linalg::general_mat_mul, Array2, ArrayView2};

use super::factor::{precompute_factorization, Factorization};
use super::{check_finite, objective_value, soft_threshold, SolverConfig, SolverResult};
use crate::{Error, Result};

pub fn solve_admm_batch(
    atoms: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    config: &SolverConfig,
) -> Result<Vec<SolverResult>> {
    config.validate()?;
    let factor = precompute_factorization(atoms, config.rho)?;
    solve_admm_batch_with(atoms, targets, &factor, config)
}

/// Like [`solve_admm_batch`] with a factorization shared across calls.
pub fn solve_admm_batch_with(
    atoms: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    factor: &Factorization,
    config: &SolverConfig,
) -> Result<Vec<SolverResult>> {
    config.validate()?;
    let (c, d) = atoms.dim();
    if targets.ncols() != d {
        return Err(Error::Dimension(format!(
            "targets have {} dims, dictionary has {d}",
            targets.ncols()
        )));
    }
    if factor.rho() != config.rho {
        return Err(Error::Invalid(format!(
            "factorization built for rho={} but config has rho={}",
            factor.rho(),
            config.rho
        )));
    }
    let expected = if factor.is_woodbury() { d } else { c };
    if factor.lower().nrows() != expected {
        return Err(Error::Dimension("factorization does not match this dictionary".into()));
    }
    check_finite("dictionary", atoms.iter().copied())?;
    check_finite("targets", targets.iter().copied())?;
    if targets.nrows() == 0 {
        return Ok(Vec::new());
    }

    let atoms = atoms.as_standard_layout();
    let targets = targets.as_standard_layout();
    let mut states: Vec<SampleState> = (0..targets.nrows()).map(|_| SampleState::new(c, d)).collect();
    match factor.gram() {
        Some(gram) => run_woodbury(atoms.view(), targets.view(), factor, gram, config, &mut states),
        None => run_direct(atoms.view(), targets.view(), factor, config, &mut states),
    }

    states
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let objective = objective_value(
                atoms.view(),
                targets.row(i),
                ndarray::ArrayView1::from(&s.z),
                config.lambda,
            )?;
            Ok(SolverResult {
                iterations: s.iterations,
                primal_residual: s.primal,
                dual_residual: s.dual,
                converged: s.converged,
                objective,
                w: s.z,
            })
        })
        .collect()
}

struct SampleState {
    z: Vec<f64>,
    u: Vec<f64>,
    /// `C z` and `C u` in embedding space (Woodbury form only).
    cz: Vec<f64>,
    cu: Vec<f64>,
    iterations: usize,
    primal: f64,
    dual: f64,
    converged: bool,
}

impl SampleState {
    fn new(c: usize, d: usize) -> Self {
        Self {
            z: vec![0.0; c],
            u: vec![0.0; c],
            cz: vec![0.0; d],
            cu: vec![0.0; d],
            iterations: 0,
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            converged: false,
        }
    }

    /// z/u update given the fresh `w`; records residuals and the stop test.
    fn shrink(&mut self, w: impl Iterator<Item = f64>, config: &SolverConfig) {
        let kappa = 2.0 * config.lambda / config.rho;
        let (mut prim, mut dual) = (0.0, 0.0);
        for ((wj, zj), uj) in w.zip(self.z.iter_mut()).zip(self.u.iter_mut()) {
            let a = wj + *uj;
            let zn = soft_threshold(a, kappa).max(0.0);
            prim += (wj - zn) * (wj - zn);
            dual += (zn - *zj) * (zn - *zj);
            *uj = a - zn;
            *zj = zn;
        }
        self.primal = prim.sqrt();
        self.dual = config.rho * dual.sqrt();
        self.iterations += 1;
        self.converged = self.primal < config.tol && self.dual < config.tol;
    }
}

/// `a · bᵀ` through the shared matrix-multiply kernel.
fn mul_transposed(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    general_mat_mul(1.0, &a, &b.t(), 0.0, &mut out);
    out
}

fn active(states: &[SampleState]) -> Vec<usize> {
    (0..states.len()).filter(|&i| !states[i].converged).collect()
}

fn run_direct(
    atoms: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    factor: &Factorization,
    config: &SolverConfig,
    states: &mut [SampleState],
) {
    // 2 Cᵀ target, one row per sample
    let projected = mul_transposed(targets, atoms) * 2.0;
    let mut rhs = vec![0.0; atoms.nrows()];
    for _ in 0..config.max_iter {
        let live = active(states);
        if live.is_empty() {
            break;
        }
        for i in live {
            let s = &mut states[i];
            for (j, r) in rhs.iter_mut().enumerate() {
                *r = config.rho * (s.z[j] - s.u[j]) + projected[[i, j]];
            }
            factor.solve_factored(&mut rhs);
            s.shrink(rhs.iter().copied(), config);
        }
    }
}

/// Overcomplete dictionaries. With `K = ρI + 2CCᵀ` the w-update becomes
/// `w = v + Cᵀq` where `q = (2/ρ)(target − K⁻¹ C b)`, and `C b` only needs
/// `C z`, `C u` and `G target` (G = CCᵀ). Only `Cᵀ q` touches all c concepts.
fn run_woodbury(
    atoms: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    factor: &Factorization,
    gram: &Array2<f64>,
    config: &SolverConfig,
    states: &mut [SampleState],
) {
    let d = atoms.ncols();
    let rho = config.rho;
    let inverse = factor.inverse().expect("Woodbury form carries K⁻¹");
    let gram_targets = mul_transposed(targets, gram.view());
    for _ in 0..config.max_iter {
        let live = active(states);
        if live.is_empty() {
            break;
        }
        let mut cb = Array2::<f64>::zeros((live.len(), d));
        for (r, &i) in live.iter().enumerate() {
            let s = &states[i];
            for k in 0..d {
                cb[[r, k]] = rho * (s.cz[k] - s.cu[k]) + 2.0 * gram_targets[[i, k]];
            }
        }
        let y = mul_transposed(cb.view(), inverse.view());
        let mut q = y;
        for (r, &i) in live.iter().enumerate() {
            for k in 0..d {
                q[[r, k]] = (2.0 / rho) * (targets[[i, k]] - q[[r, k]]);
            }
        }
        let ct_q = mul_transposed(q.view(), atoms);
        let g_q = mul_transposed(q.view(), gram.view());

        for (r, &i) in live.iter().enumerate() {
            let s = &mut states[i];
            let t = ct_q.row(r);
            let w =
                s.z.iter()
                    .zip(&s.u)
                    .zip(t)
                    .map(|((z, u), t)| z - u + t)
                    .collect::<Vec<f64>>();
            let cz_prev = std::mem::take(&mut s.cz);
            s.shrink(w.into_iter(), config);

            let mut cz = vec![0.0; d];
            for (j, &zj) in s.z.iter().enumerate() {
                if zj != 0.0 {
                    for (acc, a) in cz.iter_mut().zip(atoms.row(j)) {
                        *acc += zj * a;
                    }
                }
            }
            // C u_next = C(u + w − z_next) = C z_prev + G q − C z_next
            for k in 0..d {
                s.cu[k] = cz_prev[k] + g_q[[r, k]] - cz[k];
            }
            s.cz = cz;
        }
    }
}
