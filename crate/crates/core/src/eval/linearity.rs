use serde::Serialize;

use crate::geometry::{cosine, dot};
use crate::{Error, Result};

/// Gram matrices with a larger condition number are treated as collinear.
pub const MAX_GRAM_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearityResult {
    pub w_a: f64,
    pub w_b: f64,
    pub cosine: f64,
}

/// Least-squares fit of `z_ab ≈ w_a z_a + w_b z_b` through the 2×2 normal
/// equations, and the cosine of the fit to `z_ab`.
pub fn linearity_check(z_a: &[f64], z_b: &[f64], z_ab: &[f64]) -> Result<LinearityResult> {
    if z_a.len() != z_b.len() || z_a.len() != z_ab.len() {
        return Err(Error::Dimension("composition triple has mismatched lengths".into()));
    }
    let (gaa, gab, gbb) = (dot(z_a, z_a), dot(z_a, z_b), dot(z_b, z_b));
    let det = gaa * gbb - gab * gab;
    let trace = gaa + gbb;
    let disc = ((gaa - gbb).powi(2) + 4.0 * gab * gab).sqrt();
    let (hi, lo) = ((trace + disc) / 2.0, (trace - disc) / 2.0);
    if !(lo > 0.0) || hi / lo > MAX_GRAM_CONDITION || det <= 0.0 {
        return Err(Error::Numerical("z_a and z_b are nearly collinear".into()));
    }
    let (ra, rb) = (dot(z_a, z_ab), dot(z_b, z_ab));
    let w_a = (gbb * ra - gab * rb) / det;
    let w_b = (gaa * rb - gab * ra) / det;
    let fit: Vec<f64> = z_a.iter().zip(z_b).map(|(a, b)| w_a * a + w_b * b).collect();
    Ok(LinearityResult {
        w_a,
        w_b,
        cosine: cosine(&fit, z_ab)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearitySummary {
    pub count: usize,
    pub mean_w_a: f64,
    pub mean_w_b: f64,
    pub mean_cosine: f64,
    pub median_w_a: f64,
    pub median_w_b: f64,
    pub median_cosine: f64,
}

pub fn summarize_linearity(results: &[LinearityResult]) -> Result<LinearitySummary> {
    if results.is_empty() {
        return Err(Error::Invalid("no linearity results to summarize".into()));
    }
    let mean = |f: fn(&LinearityResult) -> f64| results.iter().map(f).sum::<f64>() / results.len() as f64;
    let median = |f: fn(&LinearityResult) -> f64| {
        let mut v: Vec<f64> = results.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    };
    Ok(LinearitySummary {
        count: results.len(),
        mean_w_a: mean(|r| r.w_a),
        mean_w_b: mean(|r| r.w_b),
        mean_cosine: mean(|r| r.cosine),
        median_w_a: median(|r| r.w_a),
        median_w_b: median(|r| r.w_b),
        median_cosine: median(|r| r.cosine),
    })
}
