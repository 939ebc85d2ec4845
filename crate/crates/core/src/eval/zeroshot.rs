use crate::geometry::{self, dot, norm};
use crate::io::{DecompositionRecord, DenseMatrix};
use crate::pipeline::ConceptModel;
use crate::{Error, Result};

/// Unit-norm embeddings of one prompt per class (e.g. "A photo of a {name}").
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPromptSet {
    pub class_names: Vec<String>,
    pub prompts: DenseMatrix,
}

impl ClassPromptSet {
    pub fn new(class_names: Vec<String>, prompts: DenseMatrix) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::Invalid("zero-shot needs at least two classes".into()));
        }
        if class_names.len() != prompts.rows() {
            return Err(Error::Dimension(format!(
                "{} class names for {} prompt embeddings",
                class_names.len(),
                prompts.rows()
            )));
        }
        for (i, row) in prompts.iter_rows().enumerate() {
            if (norm(row) - 1.0).abs() > 1e-6 {
                return Err(Error::Invalid(format!(
                    "prompt for {:?} is not unit norm",
                    class_names[i]
                )));
            }
        }
        Ok(Self { class_names, prompts })
    }

    /// Renormalizes prompt rows before validating.
    pub fn from_raw(class_names: Vec<String>, prompts: &DenseMatrix) -> Result<Self> {
        Self::new(class_names, geometry::normalize_rows(prompts)?)
    }

    pub fn dim(&self) -> usize {
        self.prompts.cols()
    }
}

/// Class with the highest cosine to `z_hat`; ties go to the lowest index.
pub fn zero_shot_classify(z_hat: &[f64], prompts: &ClassPromptSet) -> Result<usize> {
    if z_hat.len() != prompts.dim() {
        return Err(Error::Dimension(format!(
            "embedding has {} dims, prompts {}",
            z_hat.len(),
            prompts.dim()
        )));
    }
    let n = norm(z_hat);
    if n < geometry::DEGENERATE_NORM {
        return Err(Error::DegenerateVector { norm: n });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, p) in prompts.prompts.iter_rows().enumerate() {
        let s = dot(z_hat, p) / n;
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best.0)
}

pub fn zero_shot_accuracy(embeddings: &DenseMatrix, prompts: &ClassPromptSet, labels: &[usize]) -> Result<f64> {
    if embeddings.rows() == 0 {
        return Err(Error::Invalid("zero-shot accuracy of an empty set".into()));
    }
    if labels.len() != embeddings.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} embeddings",
            labels.len(),
            embeddings.rows()
        )));
    }
    let mut correct = 0usize;
    for (row, &label) in embeddings.iter_rows().zip(labels) {
        if zero_shot_classify(row, prompts)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Accuracy of the uncentered reconstructions of `records`.
pub fn zero_shot_accuracy_records(
    model: &ConceptModel,
    records: &[DecompositionRecord],
    prompts: &ClassPromptSet,
    labels: &[usize],
) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Invalid("zero-shot accuracy of an empty set".into()));
    }
    zero_shot_accuracy(&model.reconstruct_all(records)?, prompts, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye3() -> ClassPromptSet {
        ClassPromptSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            DenseMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn picks_the_matching_prompt() {
        assert_eq!(zero_shot_classify(&[0.0, 1.0, 0.0], &eye3()).unwrap(), 1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(zero_shot_classify(&[1.0, 1.0, 0.0], &eye3()).unwrap(), 0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(zero_shot_accuracy(&DenseMatrix::zeros(0, 3), &eye3(), &[]).is_err());
    }

    #[test]
    fn perfect_separation() {
        let z = DenseMatrix::from_rows(&[[0.9, 0.1, 0.0], [0.0, 0.2, 0.7], [0.1, 0.8, 0.1]]).unwrap();
        assert_eq!(zero_shot_accuracy(&z, &eye3(), &[0, 2, 1]).unwrap(), 1.0);
    }
}
