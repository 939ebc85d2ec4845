//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sparse_concepts::geometry::AlignmentParams;
use sparse_concepts::io::{DecompositionRecord, DenseMatrix};
use sparse_concepts::synth::GenerativeSpec;
use sparse_concepts::vocab::ConceptDictionary;
use sparse_concepts::{ConceptModel, SolverConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(r)).collect()
}

pub fn unit(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v = gaussian(r, d);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn unit_rows(r: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| unit(r, d)).collect();
    DenseMatrix::from_rows(&rows).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn spec(k: usize, d: usize, alpha: usize, seed: u64) -> GenerativeSpec {
    GenerativeSpec {
        k,
        d,
        alpha,
        weight_range: (0.5, 1.5),
        noise_sigma: 0.0,
        cone_mu: None,
        seed,
    }
}

/// Model whose image mean is `mu_img` (zeros when `None`).
pub fn model(dictionary: &ConceptDictionary, mu_img: Option<Vec<f64>>, config: SolverConfig) -> ConceptModel {
    let mu = mu_img.unwrap_or_else(|| vec![0.0; dictionary.dim()]);
    let align = AlignmentParams::new(mu, dictionary.mu_con.clone()).unwrap();
    ConceptModel::new(dictionary.clone(), align, config).unwrap()
}

/// Records whose entries are the nonzero entries of each code row.
pub fn records_from_codes(codes: &DenseMatrix, names: &[String]) -> Vec<DecompositionRecord> {
    codes
        .iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let mut entries: Vec<(String, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(j, w)| (names[j].clone(), *w))
                .collect();
            entries.sort_by(|a, b| b.1.total_cmp(&a.1));
            DecompositionRecord {
                sample_id: i as u64,
                l0: entries.len(),
                entries,
                objective: 0.0,
                iterations: 0,
            }
        })
        .collect()
}

/// Codes with exactly `size` nonzeros per row, weights in [0.5, 1.5].
pub fn fixed_support_codes(r: &mut ChaCha8Rng, n: usize, k: usize, size: usize) -> DenseMatrix {
    let mut data = vec![0.0; n * k];
    for row in data.chunks_mut(k) {
        for j in sample(r, k, size) {
            row[j] = r.random_range(0.5..=1.5);
        }
    }
    DenseMatrix::new(n, k, data).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Spearman rank correlation, no ties expected.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}
