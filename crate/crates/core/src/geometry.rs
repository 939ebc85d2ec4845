//! Normalization, cone mean-centering and modality-gap statistics.
//!
//! Image and text embeddings occupy two distinct cones on the unit sphere.
//! Subtracting a cone's mean and renormalizing moves both into a shared,
//! roughly zero-centered frame where sparse nonnegative decomposition is
//! meaningful. Reconstructions are mapped back by adding the image mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::DenseMatrix;
use crate::{Error, Result};

/// Norms below this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Cone means for images and concepts in a shared dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub mu_img: Vec<f64>,
    pub mu_con: Vec<f64>,
}

impl AlignmentParams {
    pub fn new(mu_img: Vec<f64>, mu_con: Vec<f64>) -> Result<Self> {
        if mu_img.len() != mu_con.len() {
            return Err(Error::Dimension(format!(
                "image mean has {} dims, concept mean {}",
                mu_img.len(),
                mu_con.len()
            )));
        }
        if mu_img.iter().chain(&mu_con).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("alignment means must be finite".into()));
        }
        Ok(Self { mu_img, mu_con })
    }

    pub fn dim(&self) -> usize {
        self.mu_img.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !n.is_finite() {
        return Err(Error::Invalid("vector has non-finite entries".into()));
    }
    if n < DEGENERATE_NORM {
        return Err(Error::DegenerateVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Column means of a matrix with at least one row.
pub fn compute_mean(matrix: &DenseMatrix) -> Result<Vec<f64>> {
    if matrix.rows() == 0 {
        return Err(Error::Invalid("mean of an empty matrix".into()));
    }
    let mut mean = vec![0.0; matrix.cols()];
    for row in matrix.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let n = matrix.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

pub fn center_and_normalize(v: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    check_len(v.len(), mu.len())?;
    let centered: Vec<f64> = v.iter().zip(mu).map(|(a, b)| a - b).collect();
    normalize(&centered)
}

/// `normalize(Σ_j w_j c_j + mu_img)` where `atoms` holds one concept per row.
pub fn uncenter_reconstruct(atoms: &DenseMatrix, weights: &[f64], mu_img: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != atoms.rows() {
        return Err(Error::Dimension(format!(
            "{} weights for {} concepts",
            weights.len(),
            atoms.rows()
        )));
    }
    check_len(atoms.cols(), mu_img.len())?;
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Invalid("reconstruction weights must be nonnegative".into()));
    }
    let mut out = mu_img.to_vec();
    for (j, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            for (o, c) in out.iter_mut().zip(atoms.row(j)) {
                *o += w * c;
            }
        }
    }
    normalize(&out)
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u.len(), v.len())?;
    let (nu, nv) = (norm(u), norm(v));
    if nu < DEGENERATE_NORM || nv < DEGENERATE_NORM {
        return Err(Error::DegenerateVector { norm: nu.min(nv) });
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("vector lengths {a} and {b} differ")));
    }
    Ok(())
}

pub const COSINE_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineStats {
    pub mean: f64,
    pub stddev: f64,
    pub pairs: usize,
    /// Counts over 20 equal-width bins spanning [-1, 1].
    pub histogram: Vec<u64>,
}

impl CosineStats {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut histogram = vec![0u64; COSINE_BINS];
        for v in values {
            let bin = (((v + 1.0) / 2.0) * COSINE_BINS as f64).floor() as isize;
            histogram[bin.clamp(0, COSINE_BINS as isize - 1) as usize] += 1;
        }
        Self {
            mean,
            stddev: var.sqrt(),
            pairs: values.len(),
            histogram,
        }
    }
}

/// Cosine statistics over `(a_i, b_j)` pairs, rows assumed unit-norm.
///
/// All `|A|·|B|` pairs are used when `sample_pairs` covers them, otherwise
/// pairs are drawn uniformly with replacement from a seeded generator.
pub fn pairwise_cosine_stats(a: &DenseMatrix, b: &DenseMatrix, sample_pairs: usize, seed: u64) -> Result<CosineStats> {
    check_len(a.cols(), b.cols())?;
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Invalid("cosine statistics need nonempty inputs".into()));
    }
    let total = a.rows().saturating_mul(b.rows());
    let values: Vec<f64> = if sample_pairs >= total {
        (0..a.rows())
            .flat_map(|i| (0..b.rows()).map(move |j| (i, j)))
            .map(|(i, j)| dot(a.row(i), b.row(j)))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..sample_pairs)
            .map(|_| {
                let i = rng.random_range(0..a.rows());
                let j = rng.random_range(0..b.rows());
                dot(a.row(i), b.row(j))
            })
            .collect()
    };
    Ok(CosineStats::from_values(&values))
}

/// Intra-set statistics over distinct index pairs `i < j`.
pub fn self_cosine_stats(a: &DenseMatrix, sample_pairs: usize, seed: u64) -> Result<CosineStats> {
    let n = a.rows();
    if n < 2 {
        return Err(Error::Invalid("intra-set statistics need at least two rows".into()));
    }
    let total = n * (n - 1) / 2;
    let values: Vec<f64> = if sample_pairs >= total {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| dot(a.row(i), a.row(j)))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..sample_pairs)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                dot(a.row(i), a.row(j))
            })
            .collect()
    };
    Ok(CosineStats::from_values(&values))
}

/// Centers every row by `mu` and renormalizes.
pub fn center_rows(matrix: &DenseMatrix, mu: &[f64]) -> Result<DenseMatrix> {
    let rows = matrix
        .iter_rows()
        .map(|r| center_and_normalize(r, mu))
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_rows(&rows)
}

/// Renormalizes every row.
pub fn normalize_rows(matrix: &DenseMatrix) -> Result<DenseMatrix> {
    let rows = matrix.iter_rows().map(normalize).collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.8, epsilon = 1e-15);
        assert_eq!(normalize(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::DegenerateVector { .. })));
    }

    #[test]
    fn mean_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(compute_mean(&m).unwrap(), vec![0.5, 0.5]);
        let single = DenseMatrix::from_rows(&[[0.3, -2.0, 7.0]]).unwrap();
        assert_eq!(compute_mean(&single).unwrap(), vec![0.3, -2.0, 7.0]);
        assert!(compute_mean(&DenseMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn center_examples() {
        assert_eq!(center_and_normalize(&[2.0, 0.0], &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(
            center_and_normalize(&[1.5, 3.25], &[1.5, 0.25]).unwrap(),
            vec![0.0, 1.0]
        );
        assert!(center_and_normalize(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn uncenter_examples() {
        let eye = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(
            uncenter_reconstruct(&eye, &[0.0, 0.0], &[0.0, 2.0]).unwrap(),
            vec![0.0, 1.0]
        );
        assert_eq!(
            uncenter_reconstruct(&eye, &[1.0, 0.0], &[0.0, 0.0]).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(uncenter_reconstruct(&eye, &[-1.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_rows_have_zero_mean_cosine() {
        let eye = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = self_cosine_stats(&eye, 100, 0).unwrap();
        assert_eq!(s.pairs, 1);
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn identical_single_rows() {
        let a = DenseMatrix::from_rows(&[[0.6, 0.8]]).unwrap();
        let s = pairwise_cosine_stats(&a, &a.clone(), 10, 0).unwrap();
        assert_abs_diff_eq!(s.mean, 1.0, epsilon = 1e-15);
        assert_eq!(s.stddev, 0.0);
        assert_eq!(s.histogram[COSINE_BINS - 1], 1);
    }

    #[test]
    fn sampled_stats_are_seed_deterministic() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| normalize(&[(i as f64).sin(), (i as f64 * 0.7).cos(), 0.3]).unwrap())
            .collect();
        let m = DenseMatrix::from_rows(&rows).unwrap();
        let a = pairwise_cosine_stats(&m, &m, 200, 9).unwrap();
        let b = pairwise_cosine_stats(&m, &m, 200, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.histogram.iter().sum::<u64>(), 200);
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 3).prop_filter("nondegenerate", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_scale_free(v in vec3(), alpha in 0.01..100.0f64) {
            let n = normalize(&v).unwrap();
            let nn = normalize(&n).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            let ns = normalize(&scaled).unwrap();
            for i in 0..3 {
                prop_assert!((n[i] - nn[i]).abs() < 1e-12);
                prop_assert!((n[i] - ns[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn centered_cosine_is_shift_invariant(u in vec3(), v in vec3(), mu in vec3()) {
            let zero = [0.0; 3];
            let shifted = |x: &[f64]| x.iter().zip(&mu).map(|(a, b)| a + b).collect::<Vec<_>>();
            let direct = cosine(&center_and_normalize(&u, &zero).unwrap(), &center_and_normalize(&v, &zero).unwrap()).unwrap();
            let via_mu = cosine(&center_and_normalize(&shifted(&u), &mu).unwrap(), &center_and_normalize(&shifted(&v), &mu).unwrap()).unwrap();
            prop_assert!((direct - via_mu).abs() < 1e-9);
        }

        #[test]
        fn reconstruction_is_unit_norm(w in prop::collection::vec(0.0..3.0f64, 4), mu in vec3()) {
            let atoms = DenseMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]]).unwrap();
            if let Ok(r) = uncenter_reconstruct(&atoms, &w, &mu) {
                prop_assert!((norm(&r) - 1.0).abs() < 1e-12);
            }
        }
    }
}
