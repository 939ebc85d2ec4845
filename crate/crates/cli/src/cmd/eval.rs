use anyhow::{Context, Result};
use serde_json::json;
use sparse_concepts::analysis::records_to_matrix;
use sparse_concepts::eval::{
    probe_accuracy, retrieval_recall, semantic_relevance, train_probe, zero_shot_accuracy, zero_shot_accuracy_records,
    ClassPromptSet, Metric, ProbeConfig,
};
use sparse_concepts::geometry::AlignmentParams;
use sparse_concepts::io;
use sparse_concepts::{ConceptModel, SolverConfig};

use super::{dictionary, labels, matrix, names, records, usage, vector};
use crate::run::{emit_json, write_json, Run};
use crate::{ProbeArgs, RelevanceArgs, RetrievalArgs, ZeroshotArgs};

fn emit(run: &mut Run, out: Option<&std::path::Path>, metrics: &[Metric]) -> Result<()> {
    emit_json(run, out, &serde_json::to_value(metrics)?)
}

pub fn zeroshot(a: ZeroshotArgs, run: &mut Run) -> Result<()> {
    let class_names = names(run, &a.class_names)?;
    let prompts = ClassPromptSet::from_raw(class_names.clone(), &matrix(run, &a.prompts)?)?;
    let label_file = io::read_labels_with_classes(run.input(&a.labels)?, &class_names)
        .with_context(|| format!("reading {}", a.labels.display()))?;

    let (accuracy, n, source) = if let Some(path) = &a.embeddings {
        let emb = matrix(run, path)?;
        let labels = label_file.labels_for(0..emb.rows() as u64)?;
        (zero_shot_accuracy(&emb, &prompts, &labels)?, emb.rows(), "embeddings")
    } else {
        let path = a.records.as_ref().expect("clap requires a source");
        let (Some(dm), Some(dn), Some(mu)) = (&a.dict_matrix, &a.dict_names, &a.mu_img) else {
            return Err(usage("--records needs --dict-matrix, --dict-names and --mu-img"));
        };
        let recs = records(run, path)?;
        let dictionary = dictionary(run, dm, dn, None)?;
        let align = AlignmentParams::new(vector(run, mu)?, dictionary.mu_con.clone())?;
        let model = ConceptModel::new(dictionary, align, SolverConfig::default())?;
        let labels = label_file.labels_for(recs.iter().map(|r| r.sample_id))?;
        (
            zero_shot_accuracy_records(&model, &recs, &prompts, &labels)?,
            recs.len(),
            "reconstructions",
        )
    };
    let params = json!({ "samples": n, "classes": class_names.len(), "source": source });
    emit(
        run,
        a.out.as_deref(),
        &[Metric::new("zero_shot_accuracy", accuracy, params)],
    )
}

pub fn retrieval(a: RetrievalArgs, run: &mut Run) -> Result<()> {
    if a.k.is_empty() || a.k.contains(&0) {
        return Err(usage("--k needs positive counts"));
    }
    let q = matrix(run, &a.queries)?;
    let g = matrix(run, &a.gallery)?;
    let mut metrics = Vec::new();
    for (direction, (x, y)) in [("query_to_gallery", (&q, &g)), ("gallery_to_query", (&g, &q))] {
        for (k, recall) in retrieval_recall(x, y, &a.k, a.subset_size, a.seed)? {
            let params = json!({
                "k": k,
                "direction": direction,
                "subset_size": a.subset_size,
                "seed": a.seed,
            });
            metrics.push(Metric::new(format!("recall@{k}"), recall, params));
        }
    }
    emit(run, a.out.as_deref(), &metrics)
}

pub fn relevance(a: RelevanceArgs, run: &mut Run) -> Result<()> {
    let concepts = matrix(run, &a.concepts)?;
    let tokens = matrix(run, &a.tokens)?;
    let value = semantic_relevance(&concepts, &tokens)?;
    let params = json!({ "concepts": concepts.rows(), "tokens": tokens.rows(), "distance": "1 - cosine" });
    emit(
        run,
        a.out.as_deref(),
        &[Metric::new("hausdorff_distance", value, params)],
    )
}

pub fn probe(a: ProbeArgs, run: &mut Run) -> Result<()> {
    let concept_names = names(run, &a.dict_names)?;
    let train = records(run, &a.records)?;
    let train_labels = labels(run, &a.labels)?;
    let classes = train_labels.class_names.clone();
    let y = train_labels.labels_for(train.iter().map(|r| r.sample_id))?;
    let x = records_to_matrix(&train, &concept_names)?;
    let config = ProbeConfig {
        l1_penalty: a.l1_penalty,
        epochs: a.epochs,
        step: a.step,
    };
    let fit = train_probe(&x, &y, classes.len().max(2), &config)?;
    let params = json!({
        "l1_penalty": a.l1_penalty,
        "epochs": a.epochs,
        "step": a.step,
        "classes": classes,
        "samples": train.len(),
    });
    let mut metrics = vec![
        Metric::new(
            "probe_train_accuracy",
            probe_accuracy(&fit.model, &x, &y)?,
            params.clone(),
        ),
        Metric::new("probe_final_loss", fit.loss, params.clone()),
    ];
    if let (Some(tr), Some(tl)) = (&a.test_records, &a.test_labels) {
        let test = records(run, tr)?;
        let test_labels = io::read_labels_with_classes(run.input(tl)?, &classes)
            .with_context(|| format!("reading {}", tl.display()))?;
        let ty = test_labels.labels_for(test.iter().map(|r| r.sample_id))?;
        let tx = records_to_matrix(&test, &concept_names)?;
        metrics.push(Metric::new(
            "probe_test_accuracy",
            probe_accuracy(&fit.model, &tx, &ty)?,
            params,
        ));
    }
    if let Some(path) = &a.model_out {
        let path = run.output(path);
        let mut value = fit.model.to_json();
        value["class_names"] = json!(classes);
        value["concept_names"] = json!(concept_names);
        write_json(&path, &value)?;
    }
    emit(run, a.out.as_deref(), &metrics)
}
