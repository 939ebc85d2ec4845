//! Quantitative evaluation of decompositions and reconstructions.

mod linearity;
mod probe;
mod relevance;
mod retrieval;
mod zeroshot;

use serde::Serialize;

pub use linearity::{linearity_check, summarize_linearity, LinearityResult, LinearitySummary};
pub use probe::{
    probe_accuracy, probe_gradient, probe_loss, probe_predict, train_probe, ProbeConfig, ProbeFit, ProbeModel,
};
pub use relevance::semantic_relevance;
pub use retrieval::retrieval_recall;
pub use zeroshot::{zero_shot_accuracy, zero_shot_accuracy_records, zero_shot_classify, ClassPromptSet};

/// One emitted metric: `{metric, value, params}`.
#[derive(Debug, Clone, Serialize)]
pub struct Metric {
    pub metric: String,
    pub value: f64,
    pub params: serde_json::Value,
}

impl Metric {
    pub fn new(metric: impl Into<String>, value: f64, params: serde_json::Value) -> Self {
        Self {
            metric: metric.into(),
            value,
            params,
        }
    }
}
