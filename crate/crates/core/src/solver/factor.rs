//! Cholesky factorization of the ADMM system `2CᵀC + ρI`.
//!
//! When the dictionary is overcomplete (c > d) the c × c system is never
//! formed. Instead the d × d matrix `K = ρI + 2CCᵀ` is factored and the
//! Woodbury identity
//!
//! ```text
//! (ρI + 2CᵀC)⁻¹ = (1/ρ) (I − 2Cᵀ K⁻¹ C)
//! ```
//!
//! gives the same solve at O(cd + d²) per right-hand side.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Factorization {
    rho: f64,
    lower: Array2<f64>,
    upper: Array2<f64>,
    /// `CCᵀ`, present only in the Woodbury form.
    gram: Option<Array2<f64>>,
    /// `K⁻¹`, present only in the Woodbury form, so that the batch can be
    /// solved with one matrix product.
    inverse: Option<Array2<f64>>,
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("cholesky of a {}x{} matrix", n, a.ncols())));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row_j = l.row(j).to_owned();
        let diag = a[[j, j]] - row_j.slice(ndarray::s![..j]).dot(&row_j.slice(ndarray::s![..j]));
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix not positive definite at pivot {j} ({diag:e})"
            )));
        }
        let d = diag.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let s = a[[i, j]] - l.row(i).slice(ndarray::s![..j]).dot(&row_j.slice(ndarray::s![..j]));
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` in place; `upper` is `Lᵀ` in row-major order.
pub(crate) fn cholesky_solve(lower: &Array2<f64>, upper: &Array2<f64>, b: &mut [f64]) {
    let n = b.len();
    let l = lower.as_slice().expect("standard layout");
    let u = upper.as_slice().expect("standard layout");
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s = b[i] - dot_prefix(row, &b[..i]);
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let row = &u[i * n + i + 1..(i + 1) * n];
        let s = b[i] - dot_prefix(row, &b[i + 1..]);
        b[i] = s / u[i * n + i];
    }
}

fn dot_prefix(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for lane in 0..4 {
            acc[lane] += a[4 * k + lane] * b[4 * k + lane];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Factors the ADMM system once for a whole batch.
///
/// Uses the c × c form when `c ≤ d` and the d × d Woodbury form otherwise.
pub fn precompute_factorization(atoms: ArrayView2<f64>, rho: f64) -> Result<Factorization> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Invalid(format!("rho must be > 0, got {rho}")));
    }
    let (c, d) = atoms.dim();
    if c <= d {
        let mut system = atoms.dot(&atoms.t()) * 2.0;
        system.diag_mut().mapv_inplace(|v| v + rho);
        Ok(Factorization::new(rho, cholesky(system.view())?, None))
    } else {
        let gram = atoms.t().dot(&atoms);
        let mut system = &gram * 2.0;
        system.diag_mut().mapv_inplace(|v| v + rho);
        Ok(Factorization::new(rho, cholesky(system.view())?, Some(gram)))
    }
}

impl Factorization {
    fn new(rho: f64, lower: Array2<f64>, gram: Option<Array2<f64>>) -> Self {
        let upper = lower.t().as_standard_layout().into_owned();
        let inverse = gram.as_ref().map(|_| {
            let n = lower.nrows();
            let mut inv = Array2::<f64>::zeros((n, n));
            let mut col = vec![0.0; n];
            for j in 0..n {
                col.iter_mut().for_each(|v| *v = 0.0);
                col[j] = 1.0;
                cholesky_solve(&lower, &upper, &mut col);
                inv.column_mut(j).assign(&ArrayView1::from(&col));
            }
            // exact symmetry, so rows and columns are interchangeable
            for i in 0..n {
                for j in i + 1..n {
                    let m = 0.5 * (inv[[i, j]] + inv[[j, i]]);
                    inv[[i, j]] = m;
                    inv[[j, i]] = m;
                }
            }
            inv
        });
        Self {
            rho,
            lower,
            upper,
            gram,
            inverse,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// The triangular factor: c × c in the direct form, d × d in the Woodbury form.
    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn is_woodbury(&self) -> bool {
        self.gram.is_some()
    }

    pub(crate) fn gram(&self) -> Option<&Array2<f64>> {
        self.gram.as_ref()
    }

    pub(crate) fn inverse(&self) -> Option<&Array2<f64>> {
        self.inverse.as_ref()
    }

    /// `L Lᵀ`, i.e. the factored system matrix.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.lower.dot(&self.lower.t())
    }

    /// Solves the factored system in its own dimension (c or d) in place.
    pub(crate) fn solve_factored(&self, b: &mut [f64]) {
        cholesky_solve(&self.lower, &self.upper, b);
    }

    /// Solves `(2CᵀC + ρI) x = rhs` for a c-vector `rhs`.
    pub fn solve(&self, atoms: ArrayView2<f64>, rhs: ArrayView1<f64>) -> Result<Array1<f64>> {
        if rhs.len() != atoms.nrows() {
            return Err(Error::Dimension(format!(
                "rhs has {} entries, dictionary has {} concepts",
                rhs.len(),
                atoms.nrows()
            )));
        }
        let expected = if self.is_woodbury() {
            atoms.ncols()
        } else {
            atoms.nrows()
        };
        if self.lower.nrows() != expected {
            return Err(Error::Dimension("factorization does not match this dictionary".into()));
        }
        if self.gram.is_none() {
            let mut x = rhs.to_vec();
            self.solve_factored(&mut x);
            return Ok(Array1::from(x));
        }
        let mut y = atoms.t().dot(&rhs).to_vec();
        self.solve_factored(&mut y);
        let correction = atoms.dot(&Array1::from(y));
        Ok((&rhs - &(correction * 2.0)) / self.rho)
    }
}
