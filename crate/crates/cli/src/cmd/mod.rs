mod analyze;
mod decompose;
mod eval;
mod misc;
mod synth;
mod vocab;

use std::path::Path;

use anyhow::{Context, Result};
use sparse_concepts::geometry::AlignmentParams;
use sparse_concepts::io::{self, DecompositionRecord, DenseMatrix, LabelFile};
use sparse_concepts::{ConceptDictionary, ConceptModel, SolverConfig};

use crate::run::Run;
use crate::{AnalyzeCommand, Command, DictArgs, EvalCommand, UsageError};

pub fn dispatch(command: Command, run: &mut Run) -> Result<()> {
    match command {
        Command::Decompose(a) => decompose::run(a, run),
        Command::BuildVocab(a) => vocab::run(a, run),
        Command::Eval(EvalCommand::Zeroshot(a)) => eval::zeroshot(a, run),
        Command::Eval(EvalCommand::Retrieval(a)) => eval::retrieval(a, run),
        Command::Eval(EvalCommand::Relevance(a)) => eval::relevance(a, run),
        Command::Eval(EvalCommand::Probe(a)) => eval::probe(a, run),
        Command::Analyze(AnalyzeCommand::Histogram(a)) => analyze::histogram(a, run),
        Command::Analyze(AnalyzeCommand::Distribution(a)) => analyze::distribution(a, run),
        Command::Analyze(AnalyzeCommand::Intervene(a)) => analyze::intervene(a, run),
        Command::Analyze(AnalyzeCommand::Drift(a)) => analyze::drift(a, run),
        Command::Analyze(AnalyzeCommand::Trend(a)) => analyze::trend(a, run),
        Command::Linearity(a) => misc::linearity(a, run),
        Command::Synth(a) => synth::run(a, run),
        Command::Mean(a) => misc::mean(a, run),
        Command::Replay(a) => misc::replay(a),
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub(crate) fn matrix(run: &mut Run, path: &Path) -> Result<DenseMatrix> {
    io::read_matrix(run.input(path)?).with_context(|| format!("reading {}", path.display()))
}

/// A 1 × d or d × 1 matrix file as a vector.
pub(crate) fn vector(run: &mut Run, path: &Path) -> Result<Vec<f64>> {
    let m = matrix(run, path)?;
    if m.rows() != 1 && m.cols() != 1 {
        anyhow::bail!(
            "{} holds a {}x{} matrix, expected a vector",
            path.display(),
            m.rows(),
            m.cols()
        );
    }
    Ok(m.into_data())
}

pub(crate) fn names(run: &mut Run, path: &Path) -> Result<Vec<String>> {
    io::read_names(run.input(path)?).with_context(|| format!("reading {}", path.display()))
}

pub(crate) fn records(run: &mut Run, path: &Path) -> Result<Vec<DecompositionRecord>> {
    io::read_decompositions(run.input(path)?).with_context(|| format!("reading {}", path.display()))
}

pub(crate) fn labels(run: &mut Run, path: &Path) -> Result<LabelFile> {
    io::read_labels(run.input(path)?).with_context(|| format!("reading {}", path.display()))
}

pub(crate) fn dictionary(
    run: &mut Run,
    matrix_path: &Path,
    names_path: &Path,
    mu_con: Option<&Path>,
) -> Result<ConceptDictionary> {
    let atoms = matrix(run, matrix_path)?;
    let names = names(run, names_path)?;
    let mu_con = match mu_con {
        Some(p) => vector(run, p)?,
        None => vec![0.0; atoms.cols()],
    };
    ConceptDictionary::new(names, atoms, mu_con, None).context("loading dictionary")
}

pub(crate) fn model(run: &mut Run, dict: &DictArgs, config: SolverConfig) -> Result<ConceptModel> {
    let dictionary = dictionary(run, &dict.dict_matrix, &dict.dict_names, dict.mu_con.as_deref())?;
    let mu_img = vector(run, &dict.mu_img)?;
    let align = AlignmentParams::new(mu_img, dictionary.mu_con.clone())?;
    Ok(ConceptModel::new(dictionary, align, config)?)
}

/// Mask selecting records whose label is `class`; all records when no class is given.
pub(crate) fn group_mask(
    run: &mut Run,
    records: &[DecompositionRecord],
    labels: Option<&Path>,
    class: Option<&str>,
) -> Result<Vec<bool>> {
    match (labels, class) {
        (Some(path), Some(class)) => {
            let labels = self::labels(run, path)?;
            let target = labels
                .class_index(class)
                .ok_or_else(|| anyhow::anyhow!("class {class:?} does not occur in {}", path.display()))?;
            let per_record = labels.labels_for(records.iter().map(|r| r.sample_id))?;
            Ok(per_record.into_iter().map(|l| l == target).collect())
        }
        _ => Ok(vec![true; records.len()]),
    }
}
