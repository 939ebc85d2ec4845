use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub text: String,
    pub frequency: u64,
}

/// Ordered concept candidates, one per line as `text<TAB>frequency` or `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabularyFile {
    pub entries: Vec<VocabEntry>,
}

impl VocabularyFile {
    pub fn parse(src: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, line) in src.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (text, frequency) = match line.split_once('\t') {
                Some((text, freq)) => {
                    let freq = freq.trim().parse::<u64>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("frequency {:?} is not a nonnegative integer", freq.trim()),
                    })?;
                    (text, freq)
                }
                None => (line, 1),
            };
            let key = text.trim().to_lowercase();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty concept text".into(),
                });
            }
            if seen.insert(key, line_no).is_some() {
                return Err(Error::Duplicate {
                    text: text.trim().to_string(),
                    line: line_no,
                });
            }
            entries.push(VocabEntry {
                text: text.trim().to_string(),
                frequency,
            });
        }
        if entries.is_empty() {
            return Err(Error::Invalid("vocabulary has no entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn texts(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.text.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn read_vocab(path: impl AsRef<Path>) -> Result<VocabularyFile> {
    let path = path.as_ref();
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VocabularyFile::parse(&src)
}

pub fn write_vocab(vocab: &VocabularyFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in &vocab.entries {
        out.push_str(&e.text);
        out.push('\t');
        out.push_str(&e.frequency.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads concept names, one per line; a trailing `<TAB>frequency` column is ignored.
pub fn read_names(path: impl AsRef<Path>) -> Result<Vec<String>> {
    Ok(read_vocab(path)?.texts())
}

/// Per-sample class labels read from a `sample_id,label_name` CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFile {
    pub sample_count: usize,
    pub sample_ids: Vec<u64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabelFile {
    /// Labels in first-appearance class order.
    pub fn parse(src: &str) -> Result<Self> {
        parse_labels(src, None)
    }

    /// Labels against a fixed class list; names outside it are an error.
    pub fn parse_with_classes(src: &str, classes: &[String]) -> Result<Self> {
        parse_labels(src, Some(classes))
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Labels of the given sample ids, in that order.
    pub fn labels_for(&self, ids: impl IntoIterator<Item = u64>) -> Result<Vec<usize>> {
        let by_id: HashMap<u64, usize> = self
            .sample_ids
            .iter()
            .copied()
            .zip(self.labels.iter().copied())
            .collect();
        ids.into_iter()
            .map(|id| {
                by_id
                    .get(&id)
                    .copied()
                    .ok_or_else(|| Error::Invalid(format!("no label for sample {id}")))
            })
            .collect()
    }
}

fn parse_labels(src: &str, fixed: Option<&[String]>) -> Result<LabelFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(src.as_bytes());
    let mut class_names: Vec<String> = fixed.map(<[String]>::to_vec).unwrap_or_default();
    let mut index: HashMap<String, usize> = class_names.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let mut sample_ids = Vec::new();
    let mut labels = Vec::new();
    let mut ids_seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let id = row[0].parse::<u64>().map_err(|_| Error::Parse {
            line,
            message: format!("sample id {:?} is not an integer", &row[0]),
        })?;
        if !ids_seen.insert(id) {
            return Err(Error::Duplicate {
                text: row[0].to_string(),
                line,
            });
        }
        let name = row[1].to_string();
        let label = match index.get(&name) {
            Some(&l) => l,
            None if fixed.is_some() => return Err(Error::UnknownLabel(name)),
            None => {
                class_names.push(name.clone());
                index.insert(name, class_names.len() - 1);
                class_names.len() - 1
            }
        };
        sample_ids.push(id);
        labels.push(label);
    }
    Ok(LabelFile {
        sample_count: labels.len(),
        sample_ids,
        labels,
        class_names,
    })
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelFile> {
    let path = path.as_ref();
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabelFile::parse(&src)
}

pub fn read_labels_with_classes(path: impl AsRef<Path>, classes: &[String]) -> Result<LabelFile> {
    let path = path.as_ref();
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabelFile::parse_with_classes(&src, classes)
}

pub fn write_labels(labels: &LabelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("sample_id,label_name\n");
    for (id, &l) in labels.sample_ids.iter().zip(&labels.labels) {
        out.push_str(&format!("{id},{}\n", labels.class_names[l]));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
