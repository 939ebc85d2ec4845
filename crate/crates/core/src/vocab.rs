//! Concept vocabulary pruning and centered dictionary construction.
//!
//! Candidates arrive already embedded. Pruning runs on the uncentered
//! unit-norm embeddings; centering by the concept mean happens last.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::geometry::{self, dot, norm, DEGENERATE_NORM};
use crate::io::DenseMatrix;
use crate::{Error, Result};

pub const DEFAULT_K_UNIGRAM: usize = 10_000;
pub const DEFAULT_K_BIGRAM: usize = 5_000;
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.9;

const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub text: String,
    pub frequency: u64,
    pub embedding: Vec<f64>,
}

impl Candidate {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// Centered, column-normalized concept dictionary.
///
/// `atoms` stores one concept per row (c × d), i.e. the transpose of the
/// d × c dictionary matrix, so that a concept's vector is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDictionary {
    pub names: Vec<String>,
    pub atoms: DenseMatrix,
    pub mu_con: Vec<f64>,
    pub raw: Option<DenseMatrix>,
}

impl ConceptDictionary {
    /// Wraps an already centered dictionary, checking its invariants.
    pub fn new(names: Vec<String>, atoms: DenseMatrix, mu_con: Vec<f64>, raw: Option<DenseMatrix>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Invalid("dictionary needs at least one concept".into()));
        }
        if names.len() != atoms.rows() {
            return Err(Error::Dimension(format!(
                "{} names for {} concept vectors",
                names.len(),
                atoms.rows()
            )));
        }
        if mu_con.len() != atoms.cols() {
            return Err(Error::Dimension(format!(
                "concept mean has {} dims, concepts have {}",
                mu_con.len(),
                atoms.cols()
            )));
        }
        if let Some(raw) = &raw {
            if raw.rows() != atoms.rows() || raw.cols() != atoms.cols() {
                return Err(Error::Dimension(
                    "raw concept matrix shape differs from centered one".into(),
                ));
            }
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Invalid(format!("duplicate concept name {n:?}")));
            }
        }
        for (i, row) in atoms.iter_rows().enumerate() {
            if (norm(row) - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("concept {:?} is not unit norm", names[i])));
            }
        }
        Ok(Self {
            names,
            atoms,
            mu_con,
            raw,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms.cols()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn check_unit(c: &Candidate) -> Result<()> {
    let n = norm(&c.embedding);
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Invalid(format!(
            "embedding for {:?} has norm {n}, expected unit norm",
            c.text
        )));
    }
    Ok(())
}

/// Higher frequency first, then lexicographically earlier text.
fn priority(a: &Candidate, b: &Candidate) -> Ordering {
    b.frequency.cmp(&a.frequency).then_with(|| a.text.cmp(&b.text))
}

/// Greedy pruning so that no two survivors exceed `threshold` cosine.
///
/// Candidates are visited by descending frequency (ties: lexicographic) and
/// dropped when too similar to an already kept one. Survivors keep their
/// input order.
pub fn dedupe_by_similarity(candidates: &[Candidate], threshold: f64) -> Result<Vec<Candidate>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!(
            "similarity threshold {threshold} outside (0, 1]"
        )));
    }
    candidates.iter().try_for_each(check_unit)?;
    let dim = candidates.first().map_or(0, |c| c.embedding.len());
    if candidates.iter().any(|c| c.embedding.len() != dim) {
        return Err(Error::Dimension("candidate embeddings differ in length".into()));
    }

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| priority(&candidates[a], &candidates[b]));

    let mut kept_idx: Vec<usize> = Vec::new();
    let mut keep = vec![false; candidates.len()];
    for &i in &order {
        let e = &candidates[i].embedding;
        if kept_idx.iter().all(|&k| dot(e, &candidates[k].embedding) <= threshold) {
            kept_idx.push(i);
            keep[i] = true;
        }
    }
    Ok(candidates
        .iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then(|| c.clone()))
        .collect())
}

/// Drops two-word concepts that are nearly the average of their words.
///
/// Bigrams whose words are not both in `unigrams` are kept, as is every
/// entry that is not exactly two words.
pub fn prune_redundant_bigrams(
    bigrams: &[Candidate],
    unigrams: &HashMap<String, Vec<f64>>,
    threshold: f64,
) -> Result<Vec<Candidate>> {
    let mut out = Vec::with_capacity(bigrams.len());
    for b in bigrams {
        let words: Vec<&str> = b.text.split_whitespace().collect();
        let pair = match words.as_slice() {
            [w1, w2] => unigrams.get(*w1).zip(unigrams.get(*w2)),
            _ => None,
        };
        let redundant = match pair {
            Some((e1, e2)) => {
                if e1.len() != b.embedding.len() || e2.len() != b.embedding.len() {
                    return Err(Error::Dimension(format!(
                        "word embeddings for {:?} differ in length",
                        b.text
                    )));
                }
                let sum: Vec<f64> = e1.iter().zip(e2).map(|(x, y)| x + y).collect();
                match geometry::normalize(&sum) {
                    Ok(avg) => geometry::cosine(&b.embedding, &avg)? > threshold,
                    // antipodal words: the average has no direction
                    Err(Error::DegenerateVector { .. }) => false,
                    Err(e) => return Err(e),
                }
            }
            None => false,
        };
        if !redundant {
            out.push(b.clone());
        }
    }
    Ok(out)
}

/// Keeps the most frequent single-word and two-word concepts.
///
/// Output is ordered by descending frequency (ties: lexicographic). Entries
/// of three or more words are dropped.
pub fn select_top_k(candidates: &[Candidate], k_unigram: usize, k_bigram: usize) -> Vec<Candidate> {
    let mut sorted: Vec<&Candidate> = candidates.iter().collect();
    sorted.sort_by(|a, b| priority(a, b));
    let (mut uni, mut bi) = (0, 0);
    let mut out = Vec::new();
    for c in sorted {
        match c.word_count() {
            1 if uni < k_unigram => {
                uni += 1;
                out.push(c.clone());
            }
            2 if bi < k_bigram => {
                bi += 1;
                out.push(c.clone());
            }
            _ => {}
        }
    }
    out
}

/// Centers unit-norm concept embeddings by their mean and renormalizes.
pub fn build_dictionary(selected: &[(String, Vec<f64>)]) -> Result<ConceptDictionary> {
    let (first_name, first) = selected
        .first()
        .ok_or_else(|| Error::Invalid("no concepts selected".into()))?;
    let dim = first.len();
    let mut raw_data = Vec::with_capacity(selected.len() * dim);
    for (name, e) in selected {
        if e.len() != dim {
            return Err(Error::Dimension(format!(
                "concept {name:?} has {} dims, expected {dim} (from {first_name:?})",
                e.len()
            )));
        }
        let n = norm(e);
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Invalid(format!(
                "concept {name:?} has norm {n}, expected unit norm"
            )));
        }
        raw_data.extend_from_slice(e);
    }
    let raw = DenseMatrix::new(selected.len(), dim, raw_data)?;
    let mu_con = geometry::compute_mean(&raw)?;

    let mut atoms = Vec::with_capacity(raw.data().len());
    for (i, row) in raw.iter_rows().enumerate() {
        let centered: Vec<f64> = row.iter().zip(&mu_con).map(|(a, b)| a - b).collect();
        if norm(&centered) < DEGENERATE_NORM {
            return Err(Error::DegenerateConcept(selected[i].0.clone()));
        }
        atoms.extend(geometry::normalize(&centered)?);
    }
    let atoms = DenseMatrix::new(selected.len(), dim, atoms)?;
    let names = selected.iter().map(|(n, _)| n.clone()).collect();
    ConceptDictionary::new(names, atoms, mu_con, Some(raw))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabParams {
    pub k_unigram: usize,
    pub k_bigram: usize,
    pub threshold: f64,
}

impl Default for VocabParams {
    fn default() -> Self {
        Self {
            k_unigram: DEFAULT_K_UNIGRAM,
            k_bigram: DEFAULT_K_BIGRAM,
            threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }
}

/// Full construction: dedupe, prune bigrams, take the top-k and center.
///
/// Returns the dictionary and the frequencies of its concepts in order.
pub fn build_vocabulary(candidates: &[Candidate], params: VocabParams) -> Result<(ConceptDictionary, Vec<u64>)> {
    let unigrams: HashMap<String, Vec<f64>> = candidates
        .iter()
        .filter(|c| c.word_count() == 1)
        .map(|c| (c.text.clone(), c.embedding.clone()))
        .collect();
    let deduped = dedupe_by_similarity(candidates, params.threshold)?;
    let pruned = prune_redundant_bigrams(&deduped, &unigrams, params.threshold)?;
    let selected = select_top_k(&pruned, params.k_unigram, params.k_bigram);
    let freqs = selected.iter().map(|c| c.frequency).collect();
    let pairs: Vec<(String, Vec<f64>)> = selected.into_iter().map(|c| (c.text, c.embedding)).collect();
    Ok((build_dictionary(&pairs)?, freqs))
}
