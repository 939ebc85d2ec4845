//! End-to-end decomposition: center the image embedding, solve the
//! nonnegative LASSO over the dictionary, name the nonzero concepts, and
//! reconstruct on the original image cone.

use std::collections::HashMap;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::geometry::{self, AlignmentParams};
use crate::io::{DecompositionRecord, DenseMatrix};
use crate::solver::{
    self, precompute_factorization, solve_admm_batch_with, solve_cd_batch, Factorization, SolverConfig, SolverKind,
    SolverResult,
};
use crate::vocab::ConceptDictionary;
use crate::{Error, Result};

/// Inputs further than this from unit norm are renormalized with a warning.
pub const NORM_WARN_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ConceptModel {
    pub dictionary: ConceptDictionary,
    pub align: AlignmentParams,
    pub config: SolverConfig,
    index: HashMap<String, usize>,
}

impl ConceptModel {
    pub fn new(dictionary: ConceptDictionary, align: AlignmentParams, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        if align.dim() != dictionary.dim() {
            return Err(Error::Dimension(format!(
                "alignment is {}-dimensional, dictionary {}",
                align.dim(),
                dictionary.dim()
            )));
        }
        if align.mu_con != dictionary.mu_con {
            return Err(Error::Invalid(
                "alignment concept mean differs from the dictionary's".into(),
            ));
        }
        let index = dictionary
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(Self {
            dictionary,
            align,
            config,
            index,
        })
    }

    pub fn with_config(&self, config: SolverConfig) -> Result<Self> {
        Self::new(self.dictionary.clone(), self.align.clone(), config)
    }

    pub fn dim(&self) -> usize {
        self.dictionary.dim()
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.dictionary.atoms.view()
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Centered, normalized solver target for an image embedding.
    pub fn target(&self, z_img: &[f64]) -> Result<Vec<f64>> {
        if z_img.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "embedding has {} dims, model expects {}",
                z_img.len(),
                self.dim()
            )));
        }
        let n = geometry::norm(z_img);
        let z = if (n - 1.0).abs() > NORM_WARN_TOL {
            log::warn!("input embedding has norm {n:.6}, renormalizing");
            geometry::normalize(z_img)?
        } else {
            z_img.to_vec()
        };
        geometry::center_and_normalize(&z, &self.align.mu_img)
    }

    pub fn targets(&self, embeddings: &DenseMatrix) -> Result<DenseMatrix> {
        let rows = embeddings
            .iter_rows()
            .map(|r| self.target(r))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(DenseMatrix::zeros(0, self.dim()));
        }
        DenseMatrix::from_rows(&rows)
    }

    pub fn decompose(&self, sample_id: u64, z_img: &[f64]) -> Result<DecompositionRecord> {
        let target = DenseMatrix::new(1, self.dim(), self.target(z_img)?)?;
        let factor = self.factorization()?;
        let result = self.solve(target.view(), factor.as_ref())?.remove(0);
        Ok(self.to_record(sample_id, &result))
    }

    /// Order-preserving decomposition of every row; sample ids are row indices.
    ///
    /// Equivalent to calling [`decompose`](Self::decompose) on each row;
    /// `batch_size` only bounds how many samples are solved together.
    pub fn decompose_dataset(&self, embeddings: &DenseMatrix, batch_size: usize) -> Result<Vec<DecompositionRecord>> {
        if batch_size == 0 {
            return Err(Error::Invalid("batch size must be positive".into()));
        }
        let targets = self.targets(embeddings)?;
        let factor = self.factorization()?;
        let mut records = Vec::with_capacity(targets.rows());
        for start in (0..targets.rows()).step_by(batch_size) {
            let end = (start + batch_size).min(targets.rows());
            let batch = targets.view().slice_move(ndarray::s![start..end, ..]);
            let results = self.solve(batch, factor.as_ref())?;
            records.extend(
                results
                    .iter()
                    .enumerate()
                    .map(|(k, r)| self.to_record((start + k) as u64, r)),
            );
            log::debug!("decomposed samples {start}..{end}");
        }
        Ok(records)
    }

    fn factorization(&self) -> Result<Option<Factorization>> {
        match self.config.solver {
            SolverKind::Admm => precompute_factorization(self.atoms(), self.config.rho).map(Some),
            SolverKind::Cd => Ok(None),
        }
    }

    fn solve(&self, targets: ArrayView2<f64>, factor: Option<&Factorization>) -> Result<Vec<SolverResult>> {
        match factor {
            Some(f) => solve_admm_batch_with(self.atoms(), targets, f, &self.config),
            None => solve_cd_batch(self.atoms(), targets, &self.config),
        }
    }

    /// Names the support of a solution, strongest concept first.
    pub fn to_record(&self, sample_id: u64, result: &SolverResult) -> DecompositionRecord {
        let mut support = result.support();
        support.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let entries: Vec<(String, f64)> = support
            .into_iter()
            .map(|(j, w)| (self.dictionary.names[j].clone(), w))
            .collect();
        DecompositionRecord {
            sample_id,
            l0: entries.len(),
            entries,
            objective: result.objective,
            iterations: result.iterations,
        }
    }

    /// Dense c-vector of a record's weights.
    pub fn dense_weights(&self, record: &DecompositionRecord) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.dictionary.len()];
        for (name, weight) in &record.entries {
            let j = self
                .concept_index(name)
                .ok_or_else(|| Error::Invalid(format!("record names unknown concept {name:?}")))?;
            w[j] = *weight;
        }
        Ok(w)
    }

    /// Reconstruction on the original image cone: `normalize(C w + μ_img)`.
    pub fn reconstruct(&self, record: &DecompositionRecord) -> Result<Vec<f64>> {
        let w = self.dense_weights(record)?;
        geometry::uncenter_reconstruct(&self.dictionary.atoms, &w, &self.align.mu_img)
    }

    pub fn reconstruct_all(&self, records: &[DecompositionRecord]) -> Result<DenseMatrix> {
        let rows = records
            .iter()
            .map(|r| self.reconstruct(r))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(DenseMatrix::zeros(0, self.dim()));
        }
        DenseMatrix::from_rows(&rows)
    }

    /// Objective of a record's weights against the embedding it came from.
    pub fn record_objective(&self, record: &DecompositionRecord, z_img: &[f64]) -> Result<f64> {
        let w = self.dense_weights(record)?;
        let target = self.target(z_img)?;
        solver::objective_value(
            self.atoms(),
            ArrayView1::from(&target),
            ArrayView1::from(&w),
            self.config.lambda,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub count: usize,
    pub mean_l0: f64,
    pub median_l0: f64,
    pub mean_l1: f64,
    /// `histogram[k]` counts records with l0 = k.
    pub histogram: Vec<u64>,
}

pub fn sparsity_stats(records: &[DecompositionRecord]) -> SparsityStats {
    let n = records.len();
    if n == 0 {
        return SparsityStats {
            count: 0,
            mean_l0: 0.0,
            median_l0: 0.0,
            mean_l1: 0.0,
            histogram: vec![0],
        };
    }
    let mut l0: Vec<usize> = records.iter().map(|r| r.l0).collect();
    l0.sort_unstable();
    let median_l0 = if n % 2 == 1 {
        l0[n / 2] as f64
    } else {
        (l0[n / 2 - 1] + l0[n / 2]) as f64 / 2.0
    };
    let mut histogram = vec![0u64; l0[n - 1] + 1];
    for &k in &l0 {
        histogram[k] += 1;
    }
    SparsityStats {
        count: n,
        mean_l0: l0.iter().sum::<usize>() as f64 / n as f64,
        median_l0,
        mean_l1: records.iter().map(|r| r.l1()).sum::<f64>() / n as f64,
        histogram,
    }
}
