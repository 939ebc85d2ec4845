use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Named sparse decomposition of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub sample_id: u64,
    /// `(concept_name, weight)` with weight > 0, sorted by weight descending.
    pub entries: Vec<(String, f64)>,
    pub l0: usize,
    pub objective: f64,
    pub iterations: usize,
}

impl DecompositionRecord {
    pub fn empty(sample_id: u64) -> Self {
        Self {
            sample_id,
            entries: Vec::new(),
            l0: 0,
            objective: 0.0,
            iterations: 0,
        }
    }

    pub fn weight_of(&self, concept: &str) -> f64 {
        self.entries
            .iter()
            .find(|(name, _)| name == concept)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// Checks positivity, ordering and the `l0` count.
    pub fn validate(&self) -> Result<()> {
        if self.l0 != self.entries.len() {
            return Err(Error::Invalid(format!(
                "sample {}: l0 {} but {} entries",
                self.sample_id,
                self.l0,
                self.entries.len()
            )));
        }
        if let Some((name, w)) = self.entries.iter().find(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Invalid(format!(
                "sample {}: weight {w} for {name:?} is not strictly positive",
                self.sample_id
            )));
        }
        if self.entries.windows(2).any(|p| p[0].1 < p[1].1) {
            return Err(Error::Invalid(format!(
                "sample {}: entries not sorted by descending weight",
                self.sample_id
            )));
        }
        Ok(())
    }
}

pub fn write_decompositions(records: &[DecompositionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_decompositions(path: impl AsRef<Path>) -> Result<Vec<DecompositionRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DecompositionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
