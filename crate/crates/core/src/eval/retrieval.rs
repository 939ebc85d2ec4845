use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{dot, norm, DEGENERATE_NORM};
use crate::io::DenseMatrix;
use crate::{Error, Result};

/// Recall@k for paired rows: query `i` succeeds when gallery row `i` ranks
/// within the top k by cosine among the subset's gallery rows.
///
/// A seeded subset of `subset_size` indices is drawn when there are more
/// rows than that. Rank counts gallery items with strictly higher cosine,
/// so ties resolve in favour of the true match. Swap the arguments for the
/// other retrieval direction.
pub fn retrieval_recall(
    queries: &DenseMatrix,
    gallery: &DenseMatrix,
    k_list: &[usize],
    subset_size: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if queries.rows() != gallery.rows() {
        return Err(Error::Dimension(format!(
            "{} queries but {} gallery rows",
            queries.rows(),
            gallery.rows()
        )));
    }
    if queries.cols() != gallery.cols() {
        return Err(Error::Dimension(format!(
            "queries have {} dims, gallery {}",
            queries.cols(),
            gallery.cols()
        )));
    }
    if queries.rows() == 0 || subset_size == 0 {
        return Err(Error::Invalid("retrieval needs at least one pair".into()));
    }
    let n = queries.rows();
    let subset: Vec<usize> = if n > subset_size {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, subset_size).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };

    let unit = |m: &DenseMatrix, i: usize| -> Result<Vec<f64>> {
        let r = m.row(i);
        let nr = norm(r);
        if nr < DEGENERATE_NORM {
            return Err(Error::DegenerateVector { norm: nr });
        }
        Ok(r.iter().map(|x| x / nr).collect())
    };
    let g: Vec<Vec<f64>> = subset.iter().map(|&i| unit(gallery, i)).collect::<Result<_>>()?;

    let mut ranks = Vec::with_capacity(subset.len());
    for (pos, &i) in subset.iter().enumerate() {
        let q = unit(queries, i)?;
        let true_score = dot(&q, &g[pos]);
        let rank = g
            .iter()
            .enumerate()
            .filter(|(p, row)| *p != pos && dot(&q, row) > true_score)
            .count();
        ranks.push(rank);
    }
    Ok(k_list
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| r < k).count();
            (k, hits as f64 / ranks.len() as f64)
        })
        .collect())
}
