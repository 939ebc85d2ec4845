//! Seeded synthetic data from a sparse generative model: embeddings are
//! noisy, cone-shifted nonnegative combinations of random concept vectors.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{norm, normalize};
use crate::io::{DecompositionRecord, DenseMatrix};
use crate::vocab::{build_dictionary, ConceptDictionary};
use crate::{Error, Result};

// Independent ChaCha streams so that, for one seed, the dictionary, the
// codes and the noise do not share random numbers.
const STREAM_DICTIONARY: u64 = 1;
const STREAM_CODES: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_CONE: u64 = 4;
const STREAM_TASK: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSpec {
    /// Number of concepts.
    pub k: usize,
    pub d: usize,
    /// Largest support size of a code.
    pub alpha: usize,
    pub weight_range: (f64, f64),
    #[serde(default)]
    pub noise_sigma: f64,
    /// Cone offset added before normalization; zero when absent.
    #[serde(default)]
    pub cone_mu: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl GenerativeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::Invalid("k and d must be positive".into()));
        }
        if self.alpha == 0 || self.alpha > self.k {
            return Err(Error::Invalid(format!(
                "alpha must be in 1..={}, got {}",
                self.k, self.alpha
            )));
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Invalid(format!("weight range ({lo}, {hi}) needs 0 < lo ≤ hi")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Invalid(format!(
                "noise sigma must be ≥ 0, got {}",
                self.noise_sigma
            )));
        }
        if let Some(mu) = &self.cone_mu {
            if mu.len() != self.d {
                return Err(Error::Dimension(format!(
                    "cone mean has {} dims, d is {}",
                    mu.len(),
                    self.d
                )));
            }
        }
        Ok(())
    }

    pub fn cone(&self) -> Vec<f64> {
        self.cone_mu.clone().unwrap_or_else(|| vec![0.0; self.d])
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = normalize(&v) {
            return u;
        }
    }
}

pub fn concept_name(index: usize) -> String {
    format!("concept_{:04}", index + 1)
}

/// `k` uniform random unit vectors, centered and renormalized into a dictionary.
pub fn gen_dictionary(spec: &GenerativeSpec) -> Result<ConceptDictionary> {
    spec.validate()?;
    let mut r = rng(spec.seed, STREAM_DICTIONARY);
    let concepts: Vec<(String, Vec<f64>)> = (0..spec.k)
        .map(|i| (concept_name(i), unit_gaussian(&mut r, spec.d)))
        .collect();
    build_dictionary(&concepts)
}

/// `n × k` codes: support size uniform on `1..=alpha`, support uniform
/// among concepts, weights uniform in `weight_range`.
pub fn gen_sparse_codes(spec: &GenerativeSpec, n: usize) -> Result<DenseMatrix> {
    spec.validate()?;
    let mut r = rng(spec.seed, STREAM_CODES);
    let (lo, hi) = spec.weight_range;
    let mut data = vec![0.0; n * spec.k];
    for row in data.chunks_mut(spec.k) {
        let size = r.random_range(1..=spec.alpha);
        for j in sample(&mut r, spec.k, size) {
            row[j] = if lo == hi { lo } else { r.random_range(lo..=hi) };
        }
    }
    DenseMatrix::new(n, spec.k, data)
}

/// Rows `normalize(raw · w_i + cone_mu + ε)` with `ε ~ N(0, σ² I)`.
pub fn gen_embeddings(
    raw: &DenseMatrix,
    codes: &DenseMatrix,
    cone_mu: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    let (k, d) = (raw.rows(), raw.cols());
    if codes.cols() != k {
        return Err(Error::Dimension(format!(
            "codes have {} columns, dictionary {k} concepts",
            codes.cols()
        )));
    }
    if cone_mu.len() != d {
        return Err(Error::Dimension(format!(
            "cone mean has {} dims, dictionary {d}",
            cone_mu.len()
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Invalid(format!("noise sigma must be ≥ 0, got {noise_sigma}")));
    }
    let mut r = rng(seed, STREAM_NOISE);
    let mut data = Vec::with_capacity(codes.rows() * d);
    for w in codes.iter_rows() {
        let mut v = cone_mu.to_vec();
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (o, a) in v.iter_mut().zip(raw.row(j)) {
                    *o += wj * a;
                }
            }
        }
        if noise_sigma > 0.0 {
            for o in v.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut r);
                *o += noise_sigma * e;
            }
        }
        data.extend(normalize(&v)?);
    }
    DenseMatrix::new(codes.rows(), d, data)
}

/// Embeddings of `spec`'s own dictionary for the given codes.
pub fn gen_embeddings_for(
    spec: &GenerativeSpec,
    dictionary: &ConceptDictionary,
    codes: &DenseMatrix,
) -> Result<DenseMatrix> {
    let raw = dictionary
        .raw
        .as_ref()
        .ok_or_else(|| Error::Invalid("dictionary carries no raw concept vectors".into()))?;
    gen_embeddings(raw, codes, &spec.cone(), spec.noise_sigma, spec.seed)
}

/// The same codes pushed through an image and a text generator, each with
/// its own dictionary and cone mean.
pub fn gen_two_cones(
    spec_img: &GenerativeSpec,
    spec_txt: &GenerativeSpec,
    codes: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if spec_img.k != spec_txt.k || spec_img.d != spec_txt.d {
        return Err(Error::Dimension("image and text specs differ in k or d".into()));
    }
    let img = gen_embeddings_for(spec_img, &gen_dictionary(spec_img)?, codes)?;
    let txt = gen_embeddings_for(spec_txt, &gen_dictionary(spec_txt)?, codes)?;
    Ok((img, txt))
}

/// Random direction scaled to `length`.
pub fn random_cone_mean(d: usize, length: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed, STREAM_CONE);
    unit_gaussian(&mut r, d).into_iter().map(|v| v * length).collect()
}

/// Codes for a classification task: sample `i` gets class `labels[i]`
/// uniformly, the weight of `class_concepts[label]` set from `weight_range`,
/// and a background support of up to `alpha − 1` other concepts.
pub fn gen_labeled_codes(
    spec: &GenerativeSpec,
    n: usize,
    class_concepts: &[usize],
) -> Result<(DenseMatrix, Vec<usize>)> {
    spec.validate()?;
    if class_concepts.len() < 2 || class_concepts.iter().any(|&j| j >= spec.k) {
        return Err(Error::Invalid("need at least two in-range class concepts".into()));
    }
    let background: Vec<usize> = (0..spec.k).filter(|j| !class_concepts.contains(j)).collect();
    let mut r = rng(spec.seed, STREAM_TASK);
    let (lo, hi) = spec.weight_range;
    let draw = |r: &mut ChaCha8Rng| {
        if lo == hi {
            lo
        } else {
            r.random_range(lo..=hi)
        }
    };
    let mut data = vec![0.0; n * spec.k];
    let mut labels = Vec::with_capacity(n);
    for row in data.chunks_mut(spec.k) {
        let label = r.random_range(0..class_concepts.len());
        labels.push(label);
        row[class_concepts[label]] = draw(&mut r);
        let extra = r.random_range(0..spec.alpha).min(background.len());
        for b in sample(&mut r, background.len(), extra) {
            row[background[b]] = draw(&mut r);
        }
    }
    Ok((DenseMatrix::new(n, spec.k, data)?, labels))
}

/// Adds `concept` at `weight` to each sample of class `c` with probability
/// `rates[c]`; returns the new codes and which samples were planted.
pub fn plant_concept(
    codes: &DenseMatrix,
    labels: &[usize],
    concept: usize,
    rates: &[f64],
    weight: f64,
    seed: u64,
) -> Result<(DenseMatrix, Vec<bool>)> {
    if labels.len() != codes.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} codes",
            labels.len(),
            codes.rows()
        )));
    }
    if concept >= codes.cols() {
        return Err(Error::Invalid(format!("concept {concept} out of range")));
    }
    let mut r = rng(seed, STREAM_TASK + 1);
    let mut data = codes.data().to_vec();
    let mut planted = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let rate = *rates
            .get(label)
            .ok_or_else(|| Error::Invalid(format!("no planting rate for class {label}")))?;
        let hit = r.random_bool(rate.clamp(0.0, 1.0));
        if hit {
            data[i * codes.cols() + concept] = weight;
        }
        planted.push(hit);
    }
    Ok((DenseMatrix::new(codes.rows(), codes.cols(), data)?, planted))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub support_precision: f64,
    pub support_recall: f64,
    pub weight_rmse_on_true_support: f64,
}

/// Support and weight agreement between true codes and decompositions.
///
/// Records are matched to code rows by `sample_id`, so their order does not
/// matter; rows with no record count as empty decompositions. Precision is
/// 1 when nothing was predicted.
pub fn recovery_report(
    truth: &DenseMatrix,
    names: &[String],
    records: &[DecompositionRecord],
) -> Result<RecoveryReport> {
    if names.len() != truth.cols() {
        return Err(Error::Dimension(format!(
            "{} names for {} code columns",
            names.len(),
            truth.cols()
        )));
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut by_id: HashMap<u64, &DecompositionRecord> = HashMap::new();
    for r in records {
        if r.sample_id as usize >= truth.rows() {
            return Err(Error::Invalid(format!(
                "record for sample {} beyond {} codes",
                r.sample_id,
                truth.rows()
            )));
        }
        if by_id.insert(r.sample_id, r).is_some() {
            return Err(Error::Invalid(format!("two records for sample {}", r.sample_id)));
        }
    }
    let (mut tp, mut predicted, mut actual) = (0usize, 0usize, 0usize);
    let mut sq = 0.0;
    let mut w = vec![0.0; truth.cols()];
    for (i, row) in truth.iter_rows().enumerate() {
        w.iter_mut().for_each(|v| *v = 0.0);
        if let Some(r) = by_id.get(&(i as u64)) {
            for (name, weight) in &r.entries {
                let j = *index
                    .get(name.as_str())
                    .ok_or_else(|| Error::Invalid(format!("unknown concept {name:?}")))?;
                w[j] = *weight;
            }
        }
        for (j, &t) in row.iter().enumerate() {
            let hit = w[j] > 0.0;
            predicted += hit as usize;
            if t > 0.0 {
                actual += 1;
                tp += hit as usize;
                sq += (w[j] - t) * (w[j] - t);
            }
        }
    }
    Ok(RecoveryReport {
        support_precision: if predicted == 0 {
            1.0
        } else {
            tp as f64 / predicted as f64
        },
        support_recall: if actual == 0 { 1.0 } else { tp as f64 / actual as f64 },
        weight_rmse_on_true_support: if actual == 0 { 0.0 } else { (sq / actual as f64).sqrt() },
    })
}

/// Largest absolute cosine between two distinct dictionary concepts.
pub fn mutual_coherence(atoms: &DenseMatrix) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..atoms.rows() {
        for j in i + 1..atoms.rows() {
            let (a, b) = (atoms.row(i), atoms.row(j));
            let c = crate::geometry::dot(a, b) / (norm(a) * norm(b));
            m = m.max(c.abs());
        }
    }
    m
}
