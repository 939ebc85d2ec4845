//! Concept histograms, bias distributions, interventions and drift.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::eval::ProbeModel;
use crate::io::{DecompositionRecord, DenseMatrix};
use crate::pipeline::ConceptModel;
use crate::{Error, Result};

/// Mean concept weights over a group of records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptHistogram {
    pub concept_names: Vec<String>,
    /// Mean over every group member; records without the concept count as 0.
    pub mean_weight: Vec<f64>,
    pub support_count: Vec<u64>,
    pub group_size: usize,
}

impl ConceptHistogram {
    /// Weights divided by their sum (all zero for an empty histogram).
    pub fn shares(&self) -> Vec<f64> {
        let total: f64 = self.mean_weight.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.mean_weight.len()];
        }
        self.mean_weight.iter().map(|w| w / total).collect()
    }

    /// Concept indices by decreasing mean weight, at most `k` of them.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mean_weight.len()).collect();
        idx.sort_by(|&a, &b| self.mean_weight[b].total_cmp(&self.mean_weight[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    /// `concept,mean_weight,support_count` rows, strongest first, zero rows skipped.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io_err = |e: csv::Error| Error::Invalid(format!("writing histogram CSV: {e}"));
        w.write_record(["concept", "mean_weight", "support_count"])
            .map_err(io_err)?;
        for j in self.top_k(self.mean_weight.len()) {
            if self.support_count[j] == 0 {
                continue;
            }
            w.write_record([
                self.concept_names[j].clone(),
                self.mean_weight[j].to_string(),
                self.support_count[j].to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush()
            .map_err(|e| Error::Invalid(format!("writing histogram CSV: {e}")))?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let shares = self.shares();
        let rows: Vec<_> = self
            .top_k(self.mean_weight.len())
            .into_iter()
            .filter(|&j| self.support_count[j] > 0)
            .map(|j| {
                serde_json::json!({
                    "concept": self.concept_names[j],
                    "mean_weight": self.mean_weight[j],
                    "share": shares[j],
                    "support_count": self.support_count[j],
                })
            })
            .collect();
        serde_json::json!({ "group_size": self.group_size, "concepts": rows })
    }
}

/// Dense `n × c` weights of `records` over the concept order of `names`.
pub fn records_to_matrix(records: &[DecompositionRecord], names: &[String]) -> Result<DenseMatrix> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut data = vec![0.0; records.len() * names.len()];
    for (i, r) in records.iter().enumerate() {
        for (name, w) in &r.entries {
            let j = *index
                .get(name.as_str())
                .ok_or_else(|| Error::Invalid(format!("record {} names unknown concept {name:?}", r.sample_id)))?;
            data[i * names.len() + j] = *w;
        }
    }
    DenseMatrix::new(records.len(), names.len(), data)
}

fn check_mask(records: &[DecompositionRecord], mask: &[bool]) -> Result<()> {
    if records.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "{} records but mask of {}",
            records.len(),
            mask.len()
        )));
    }
    Ok(())
}

/// Histogram over the records selected by `mask`, indexed like `names`.
pub fn class_histogram(records: &[DecompositionRecord], mask: &[bool], names: &[String]) -> Result<ConceptHistogram> {
    check_mask(records, mask)?;
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut sum = vec![0.0; names.len()];
    let mut support = vec![0u64; names.len()];
    let mut size = 0usize;
    for (r, _) in records.iter().zip(mask).filter(|(_, &m)| m) {
        size += 1;
        for (name, w) in &r.entries {
            let j = *index
                .get(name.as_str())
                .ok_or_else(|| Error::Invalid(format!("record {} names unknown concept {name:?}", r.sample_id)))?;
            sum[j] += w;
            support[j] += 1;
        }
    }
    let mean_weight = if size == 0 {
        sum
    } else {
        sum.into_iter().map(|s| s / size as f64).collect()
    };
    Ok(ConceptHistogram {
        concept_names: names.to_vec(),
        mean_weight,
        support_count: support,
        group_size: size,
    })
}

/// Per-member total weight on `concept_set`, in record order.
pub fn concept_distribution(
    records: &[DecompositionRecord],
    mask: &[bool],
    concept_set: &[String],
) -> Result<Vec<f64>> {
    check_mask(records, mask)?;
    Ok(records
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(r, _)| concept_set.iter().map(|c| r.weight_of(c)).sum())
        .collect())
}

/// Which concepts an intervention removes.
///
/// Patterns match as literal case-insensitive substrings, so "forest" also
/// hits "deforested".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptMatcher {
    pub exact: Vec<String>,
    pub patterns: Vec<String>,
}

impl ConceptMatcher {
    pub fn exact<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self {
            exact: names.into_iter().map(Into::into).collect(),
            patterns: Vec::new(),
        }
    }

    pub fn substrings<S: Into<String>>(patterns: impl IntoIterator<Item = S>) -> Self {
        Self {
            exact: Vec::new(),
            patterns: patterns.into_iter().map(Into::into).collect(),
        }
    }

    pub fn matches(&self, concept: &str) -> bool {
        if self.exact.iter().any(|e| e == concept) {
            return true;
        }
        let lower = concept.to_lowercase();
        self.patterns.iter().any(|p| lower.contains(&p.to_lowercase()))
    }

    /// Indices of matching concepts in `names`.
    pub fn indices(&self, names: &[String]) -> Vec<usize> {
        (0..names.len()).filter(|&j| self.matches(&names[j])).collect()
    }
}

/// Copies of `records` with every matching concept removed.
///
/// `l0` is recomputed. When a model and the source embeddings (one row per
/// record, by position) are supplied, changed records also get their
/// objective recomputed; otherwise the stored objective is kept.
pub fn intervene_weights(
    records: &[DecompositionRecord],
    matcher: &ConceptMatcher,
    objective: Option<(&ConceptModel, &DenseMatrix)>,
) -> Result<Vec<DecompositionRecord>> {
    if let Some((_, emb)) = objective {
        if emb.rows() != records.len() {
            return Err(Error::Dimension(format!(
                "{} embeddings for {} records",
                emb.rows(),
                records.len()
            )));
        }
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let entries: Vec<(String, f64)> = r.entries.iter().filter(|(n, _)| !matcher.matches(n)).cloned().collect();
            if entries.len() == r.entries.len() {
                return Ok(r.clone());
            }
            let mut out = DecompositionRecord {
                l0: entries.len(),
                entries,
                ..r.clone()
            };
            if let Some((model, emb)) = objective {
                out.objective = model.record_objective(&out, emb.row(i))?;
            }
            Ok(out)
        })
        .collect()
}

/// Probe with the weight columns of `concept_indices` zeroed for every class.
pub fn intervene_probe(model: &ProbeModel, concept_indices: &[usize]) -> Result<ProbeModel> {
    let c = model.concepts();
    if let Some(&bad) = concept_indices.iter().find(|&&j| j >= c) {
        return Err(Error::Invalid(format!(
            "concept index {bad} out of range for {c} concepts"
        )));
    }
    let mut data = model.weights.data().to_vec();
    for row in data.chunks_mut(c) {
        for &j in concept_indices {
            row[j] = 0.0;
        }
    }
    Ok(ProbeModel {
        weights: DenseMatrix::new(model.classes(), c, data)?,
        ..model.clone()
    })
}

/// L2 distance between two histograms' mean weights.
pub fn drift_norm(a: &ConceptHistogram, b: &ConceptHistogram) -> Result<f64> {
    if a.concept_names != b.concept_names {
        return Err(Error::Dimension("histograms use different concept orderings".into()));
    }
    Ok(a.mean_weight
        .iter()
        .zip(&b.mean_weight)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendPoint {
    pub group: String,
    pub mean_weight: f64,
    pub count: usize,
}

/// Mean summed `concept_set` weight per group, in `groups` order.
///
/// `group_of[i]` names the group of record `i`. Groups with no members are
/// left out with a warning.
pub fn concept_trend(
    records: &[DecompositionRecord],
    group_of: &[String],
    groups: &[String],
    concept_set: &[String],
) -> Result<Vec<TrendPoint>> {
    if records.len() != group_of.len() {
        return Err(Error::Dimension(format!(
            "{} records but {} group keys",
            records.len(),
            group_of.len()
        )));
    }
    let mut points = Vec::new();
    for g in groups {
        let mask: Vec<bool> = group_of.iter().map(|k| k == g).collect();
        let values = concept_distribution(records, &mask, concept_set)?;
        if values.is_empty() {
            log::warn!("group {g:?} has no records, omitting it from the trend");
            continue;
        }
        points.push(TrendPoint {
            group: g.clone(),
            mean_weight: values.iter().sum::<f64>() / values.len() as f64,
            count: values.len(),
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, entries: &[(&str, f64)]) -> DecompositionRecord {
        DecompositionRecord {
            sample_id: id,
            entries: entries.iter().map(|(n, w)| (n.to_string(), *w)).collect(),
            l0: entries.len(),
            objective: 0.0,
            iterations: 0,
        }
    }

    fn names(ns: &[&str]) -> Vec<String> {
        ns.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_record_histogram() {
        let h = class_histogram(&[rec(0, &[("dog", 0.5)])], &[true], &names(&["cat", "dog"])).unwrap();
        assert_eq!(h.mean_weight, vec![0.0, 0.5]);
        assert_eq!(h.support_count, vec![0, 1]);
    }

    #[test]
    fn two_records_split_evenly() {
        let rs = [rec(0, &[("a", 1.0)]), rec(1, &[("b", 1.0)])];
        let h = class_histogram(&rs, &[true, true], &names(&["a", "b"])).unwrap();
        assert_eq!(h.mean_weight, vec![0.5, 0.5]);
        assert_eq!(h.shares(), vec![0.5, 0.5]);
    }

    #[test]
    fn distribution_sums_the_concept_set() {
        let rs = [
            rec(0, &[("swimwear", 0.3), ("bra", 0.2), ("beach", 0.4)]),
            rec(1, &[("tie", 0.9)]),
        ];
        let set = names(&["swimwear", "bra", "trunks", "underwear"]);
        let v = concept_distribution(&rs, &[true, true], &set).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn exact_intervention() {
        let rs = [rec(0, &[("glasses", 0.4), ("face", 0.3)])];
        let out = intervene_weights(&rs, &ConceptMatcher::exact(["glasses"]), None).unwrap();
        assert_eq!(out[0].entries, vec![("face".to_string(), 0.3)]);
        assert_eq!(out[0].l0, 1);
        assert_eq!(rs[0].l0, 2);
    }

    #[test]
    fn substring_intervention_is_literal() {
        let rs = [rec(
            0,
            &[
                ("forest", 0.5),
                ("Bamboo Forest", 0.4),
                ("forest path", 0.3),
                ("deforested", 0.2),
                ("lake", 0.1),
            ],
        )];
        let out = intervene_weights(&rs, &ConceptMatcher::substrings(["forest"]), None).unwrap();
        assert_eq!(out[0].entries, vec![("lake".to_string(), 0.1)]);
    }

    #[test]
    fn no_match_leaves_records_equal() {
        let rs = [rec(0, &[("a", 0.4)]), rec(1, &[])];
        let out = intervene_weights(&rs, &ConceptMatcher::exact(["zzz"]), None).unwrap();
        assert_eq!(out, rs);
    }

    #[test]
    fn drift_of_disjoint_singletons() {
        let n = names(&["a", "b"]);
        let a = class_histogram(&[rec(0, &[("a", 1.0)])], &[true], &n).unwrap();
        let b = class_histogram(&[rec(0, &[("b", 1.0)])], &[true], &n).unwrap();
        assert!((drift_norm(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(drift_norm(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn trend_skips_empty_groups() {
        let rs = [rec(0, &[("yellow", 0.2)]), rec(1, &[("yellow", 0.4)])];
        let keys = names(&["2000", "2000"]);
        let t = concept_trend(&rs, &keys, &names(&["1990", "2000"]), &names(&["yellow"])).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t[0].mean_weight - 0.3).abs() < 1e-15);
    }

    #[test]
    fn probe_columns_are_zeroed() {
        let m = ProbeModel {
            weights: DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
            bias: vec![0.5, -0.5],
            l1_penalty: 0.0,
        };
        let e = intervene_probe(&m, &[1]).unwrap();
        assert_eq!(e.weights.data(), &[1.0, 0.0, 3.0, 0.0]);
        assert_eq!(e.bias, m.bias);
        assert_eq!(intervene_probe(&m, &[]).unwrap(), m);
    }
}
