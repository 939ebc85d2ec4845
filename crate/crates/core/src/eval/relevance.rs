use crate::geometry::cosine;
use crate::io::DenseMatrix;
use crate::{Error, Result};

/// Symmetric Hausdorff distance between two embedding sets under the
/// cosine distance `1 − cos(x, y)`.
pub fn semantic_relevance(concepts: &DenseMatrix, tokens: &DenseMatrix) -> Result<f64> {
    if concepts.rows() == 0 || tokens.rows() == 0 {
        return Err(Error::Invalid("Hausdorff distance of an empty set".into()));
    }
    if concepts.cols() != tokens.cols() {
        return Err(Error::Dimension(format!(
            "concept embeddings have {} dims, tokens {}",
            concepts.cols(),
            tokens.cols()
        )));
    }
    let mut dist = vec![0.0; concepts.rows() * tokens.rows()];
    for (i, a) in concepts.iter_rows().enumerate() {
        for (j, b) in tokens.iter_rows().enumerate() {
            dist[i * tokens.rows() + j] = 1.0 - cosine(a, b)?;
        }
    }
    let nb = tokens.rows();
    let forward = (0..concepts.rows())
        .map(|i| dist[i * nb..(i + 1) * nb].iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let backward = (0..nb)
        .map(|j| {
            (0..concepts.rows())
                .map(|i| dist[i * nb + j])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(forward.max(backward).max(0.0))
}
