use serde_json::json;

use crate::io::DenseMatrix;
use crate::solver::soft_threshold;
use crate::{Error, Result};

/// Multinomial logistic model over concept space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// k × c, one row per class.
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
    pub l1_penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub l1_penalty: f64,
    pub epochs: usize,
    pub step: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l1_penalty: 1e-3,
            epochs: 500,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFit {
    pub model: ProbeModel,
    /// Penalized objective after the last step.
    pub loss: f64,
    /// Penalized objective before each step and after the last one.
    pub history: Vec<f64>,
}

impl ProbeModel {
    pub fn zeros(classes: usize, concepts: usize, l1_penalty: f64) -> Self {
        Self {
            weights: DenseMatrix::zeros(classes, concepts),
            bias: vec![0.0; classes],
            l1_penalty,
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn concepts(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| crate::geometry::dot(w, x) + b)
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<&[f64]> = self.weights.iter_rows().collect();
        json!({ "weights": rows, "bias": self.bias, "l1_penalty": self.l1_penalty })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_value(value["weights"].clone())?;
        let bias: Vec<f64> = serde_json::from_value(value["bias"].clone())?;
        let l1_penalty: f64 = serde_json::from_value(value["l1_penalty"].clone())?;
        if rows.len() != bias.len() || rows.is_empty() {
            return Err(Error::Dimension(format!(
                "{} weight rows for {} biases",
                rows.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weights: DenseMatrix::from_rows(&rows)?,
            bias,
            l1_penalty,
        })
    }

    fn check(&self, x: &DenseMatrix, labels: &[usize]) -> Result<()> {
        if x.cols() != self.concepts() {
            return Err(Error::Dimension(format!(
                "features have {} columns, probe expects {}",
                x.cols(),
                self.concepts()
            )));
        }
        if labels.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                x.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.classes()) {
            return Err(Error::Invalid(format!(
                "label {bad} out of range for {} classes",
                self.classes()
            )));
        }
        Ok(())
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

/// Mean cross-entropy, without the penalty.
pub fn probe_loss(model: &ProbeModel, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    model.check(x, labels)?;
    if labels.is_empty() {
        return Err(Error::Invalid("probe loss of an empty set".into()));
    }
    let total: f64 = x
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| -log_softmax(&model.logits(row))[y])
        .sum();
    Ok(total / labels.len() as f64)
}

fn penalized(model: &ProbeModel, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let l1: f64 = model.weights.data().iter().map(|w| w.abs()).sum();
    Ok(probe_loss(model, x, labels)? + model.l1_penalty * l1)
}

/// Gradient of [`probe_loss`] with respect to the weights (k × c) and bias.
pub fn probe_gradient(model: &ProbeModel, x: &DenseMatrix, labels: &[usize]) -> Result<(DenseMatrix, Vec<f64>)> {
    model.check(x, labels)?;
    if labels.is_empty() {
        return Err(Error::Invalid("probe gradient of an empty set".into()));
    }
    let (k, c) = (model.classes(), model.concepts());
    let mut gw = vec![0.0; k * c];
    let mut gb = vec![0.0; k];
    for (row, &y) in x.iter_rows().zip(labels) {
        let p = log_softmax(&model.logits(row));
        for class in 0..k {
            let delta = p[class].exp() - if class == y { 1.0 } else { 0.0 };
            gb[class] += delta;
            for (g, v) in gw[class * c..(class + 1) * c].iter_mut().zip(row) {
                *g += delta * v;
            }
        }
    }
    let n = labels.len() as f64;
    gw.iter_mut().for_each(|g| *g /= n);
    gb.iter_mut().for_each(|g| *g /= n);
    Ok((DenseMatrix::new(k, c, gw)?, gb))
}

/// Full-batch proximal gradient on the ℓ1-penalized cross-entropy.
///
/// Each epoch takes one gradient step and soft-thresholds the weights by
/// `step · l1_penalty`; the bias is not penalized. Starts from zero, so the
/// result depends only on the inputs.
pub fn train_probe(x: &DenseMatrix, labels: &[usize], classes: usize, config: &ProbeConfig) -> Result<ProbeFit> {
    if classes < 2 {
        return Err(Error::Invalid("a probe needs at least two classes".into()));
    }
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(Error::Invalid(format!("probe step must be > 0, got {}", config.step)));
    }
    if !(config.l1_penalty >= 0.0) {
        return Err(Error::Invalid(format!(
            "l1 penalty must be ≥ 0, got {}",
            config.l1_penalty
        )));
    }
    let mut model = ProbeModel::zeros(classes, x.cols(), config.l1_penalty);
    let mut history = vec![penalized(&model, x, labels)?];
    let kappa = config.step * config.l1_penalty;
    for _ in 0..config.epochs {
        let (gw, gb) = probe_gradient(&model, x, labels)?;
        let weights: Vec<f64> = model
            .weights
            .data()
            .iter()
            .zip(gw.data())
            .map(|(w, g)| soft_threshold(w - config.step * g, kappa))
            .collect();
        model.weights = DenseMatrix::new(classes, x.cols(), weights)?;
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= config.step * g;
        }
        history.push(penalized(&model, x, labels)?);
    }
    Ok(ProbeFit {
        loss: *history.last().expect("history starts non-empty"),
        model,
        history,
    })
}

/// Highest-logit class; ties go to the lowest index.
pub fn probe_predict(model: &ProbeModel, x: &[f64]) -> usize {
    let logits = model.logits(x);
    let mut best = 0;
    for (k, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = k;
        }
    }
    best
}

pub fn probe_accuracy(model: &ProbeModel, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    model.check(x, labels)?;
    if labels.is_empty() {
        return Err(Error::Invalid("probe accuracy of an empty set".into()));
    }
    let correct = x
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| probe_predict(model, row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (DenseMatrix, Vec<usize>) {
        let x = DenseMatrix::from_rows(&[
            [1.0, 0.1, 0.0],
            [0.8, 0.0, 0.2],
            [0.9, 0.3, 0.1],
            [0.0, 0.2, 1.0],
            [0.1, 0.0, 0.7],
            [0.2, 0.1, 0.9],
        ])
        .unwrap();
        (x, vec![0, 0, 0, 1, 1, 1])
    }

    #[test]
    fn zero_epochs_gives_log_k() {
        let (x, y) = toy();
        let fit = train_probe(
            &x,
            &y,
            3,
            &ProbeConfig {
                epochs: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((fit.loss - 3f64.ln()).abs() < 1e-12);
        assert!(fit.model.weights.data().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn separable_toy_is_learned_with_monotone_loss() {
        let (x, y) = toy();
        let fit = train_probe(
            &x,
            &y,
            2,
            &ProbeConfig {
                l1_penalty: 1e-3,
                epochs: 300,
                step: 0.1,
            },
        )
        .unwrap();
        assert_eq!(probe_accuracy(&fit.model, &x, &y).unwrap(), 1.0);
        for pair in fit.history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{pair:?}");
        }
    }

    #[test]
    fn huge_penalty_collapses_weights() {
        let (x, y) = toy();
        let fit = train_probe(
            &x,
            &y,
            2,
            &ProbeConfig {
                l1_penalty: 1e6,
                epochs: 50,
                step: 0.1,
            },
        )
        .unwrap();
        assert!(fit.model.weights.data().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn zero_model_on_balanced_labels() {
        let (x, y) = toy();
        let m = ProbeModel::zeros(2, 3, 0.0);
        assert_eq!(probe_accuracy(&m, &x, &y).unwrap(), 0.5);
        assert!(probe_accuracy(&ProbeModel::zeros(2, 4, 0.0), &x, &y).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = toy();
        let fit = train_probe(
            &x,
            &y,
            2,
            &ProbeConfig {
                epochs: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ProbeModel::from_json(&fit.model.to_json()).unwrap(), fit.model);
    }
}
