use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;
use sparse_concepts::analysis::{
    class_histogram, concept_distribution, concept_trend, drift_norm, intervene_probe, intervene_weights,
    ConceptMatcher,
};
use sparse_concepts::eval::ProbeModel;
use sparse_concepts::geometry::AlignmentParams;
use sparse_concepts::io;
use sparse_concepts::{ConceptModel, SolverConfig};

use super::{dictionary, group_mask, labels, matrix, names, records, usage, vector};
use crate::run::{emit_json, manifest_for, write_json, Run};
use crate::{DistributionArgs, DriftArgs, HistogramArgs, InterveneArgs, TableFormat, TrendArgs};

fn write_text(run: &mut Run, out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            let p = run.output(p);
            std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn histogram(a: HistogramArgs, run: &mut Run) -> Result<()> {
    let concept_names = names(run, &a.dict_names)?;
    let recs = records(run, &a.records)?;
    let mask = group_mask(run, &recs, a.group.labels.as_deref(), a.group.class.as_deref())?;
    let hist = class_histogram(&recs, &mask, &concept_names)?;
    match a.format {
        TableFormat::Json => {
            let mut value = hist.to_json();
            value["class"] = json!(a.group.class);
            emit_json(run, a.out.as_deref(), &value)
        }
        TableFormat::Csv => {
            let mut buf = Vec::new();
            hist.write_csv(&mut buf)?;
            write_text(run, a.out.as_deref(), &String::from_utf8(buf)?)
        }
    }
}

pub fn distribution(a: DistributionArgs, run: &mut Run) -> Result<()> {
    let recs = records(run, &a.records)?;
    let mask = group_mask(run, &recs, a.group.labels.as_deref(), a.group.class.as_deref())?;
    let values = concept_distribution(&recs, &mask, &a.concepts)?;
    let ids: Vec<u64> = recs
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(r, _)| r.sample_id)
        .collect();
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    let value = json!({
        "concepts": a.concepts,
        "class": a.group.class,
        "count": values.len(),
        "mean": mean,
        "sample_ids": ids,
        "values": values,
    });
    emit_json(run, a.out.as_deref(), &value)
}

pub fn intervene(a: InterveneArgs, run: &mut Run) -> Result<()> {
    let matcher = ConceptMatcher {
        exact: a.exact.clone(),
        patterns: a.substring.clone(),
    };
    if let Some(path) = &a.probe {
        let dn = a.dict_names.as_ref().expect("clap requires --dict-names");
        let concept_names = names(run, dn)?;
        let text = std::fs::read_to_string(run.input(path)?).with_context(|| format!("reading {}", path.display()))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        let model = ProbeModel::from_json(&value)?;
        if model.concepts() != concept_names.len() {
            anyhow::bail!(
                "probe has {} concepts, names file {}",
                model.concepts(),
                concept_names.len()
            );
        }
        let indices = matcher.indices(&concept_names);
        let edited = intervene_probe(&model, &indices)?;
        let edited_json = edited.to_json();
        value["weights"] = edited_json["weights"].clone();
        let out = run.output(&a.out);
        write_json(&out, &value)?;
        let removed: Vec<&String> = indices.iter().map(|&j| &concept_names[j]).collect();
        run.finish(
            manifest_for(&a.out),
            "analyze intervene",
            json!({ "exact": a.exact, "substring": a.substring }),
            None,
            json!({ "zeroed_concepts": removed }),
        )?;
        return Ok(());
    }

    let path = a.records.as_ref().expect("clap requires a target");
    let recs = records(run, path)?;
    let edited = match &a.embeddings {
        Some(emb_path) => {
            let (Some(dm), Some(dn), Some(mu), Some(lambda)) = (&a.dict_matrix, &a.dict_names, &a.mu_img, a.lambda)
            else {
                return Err(usage(
                    "--embeddings needs --dict-matrix, --dict-names, --mu-img and --lambda",
                ));
            };
            let emb = matrix(run, emb_path)?;
            let dictionary = dictionary(run, dm, dn, None)?;
            let align = AlignmentParams::new(vector(run, mu)?, dictionary.mu_con.clone())?;
            let model = ConceptModel::new(dictionary, align, SolverConfig::default().with_lambda(lambda))?;
            let rows: Vec<usize> = recs
                .iter()
                .map(|r| {
                    let i = r.sample_id as usize;
                    if i < emb.rows() {
                        Ok(i)
                    } else {
                        Err(anyhow::anyhow!("record {} has no embedding row", r.sample_id))
                    }
                })
                .collect::<Result<_>>()?;
            intervene_weights(&recs, &matcher, Some((&model, &emb.select_rows(&rows))))?
        }
        None => intervene_weights(&recs, &matcher, None)?,
    };
    let changed = recs.iter().zip(&edited).filter(|(a, b)| a != b).count();
    let out = run.output(&a.out);
    io::write_decompositions(&edited, &out)?;
    run.finish(
        manifest_for(&a.out),
        "analyze intervene",
        json!({ "exact": a.exact, "substring": a.substring, "lambda": a.lambda }),
        None,
        json!({ "records": recs.len(), "changed": changed }),
    )?;
    Ok(())
}

pub fn drift(a: DriftArgs, run: &mut Run) -> Result<()> {
    if a.records.len() < 2 {
        return Err(usage("--records needs at least two splits"));
    }
    if !a.labels.is_empty() && a.labels.len() != a.records.len() {
        return Err(usage("--labels needs one file per --records file"));
    }
    let concept_names = names(run, &a.dict_names)?;
    let mut hists = Vec::new();
    for (i, path) in a.records.iter().enumerate() {
        let recs = records(run, path)?;
        let mask = group_mask(run, &recs, a.labels.get(i).map(|p| p.as_path()), a.class.as_deref())?;
        hists.push(class_histogram(&recs, &mask, &concept_names)?);
    }
    let mut pairs = Vec::new();
    let mut matrix = vec![vec![0.0; hists.len()]; hists.len()];
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            let d = drift_norm(&hists[i], &hists[j])?;
            matrix[i][j] = d;
            matrix[j][i] = d;
            pairs.push(json!({
                "a": a.records[i].display().to_string(),
                "b": a.records[j].display().to_string(),
                "drift": d,
            }));
        }
    }
    let splits: Vec<String> = a.records.iter().map(|p| p.display().to_string()).collect();
    let value = json!({ "splits": splits, "class": a.class, "drift": matrix, "pairs": pairs });
    emit_json(run, a.out.as_deref(), &value)
}

pub fn trend(a: TrendArgs, run: &mut Run) -> Result<()> {
    let recs = records(run, &a.records)?;
    let groups = labels(run, &a.groups)?;
    let keys: Vec<String> = groups
        .labels_for(recs.iter().map(|r| r.sample_id))?
        .into_iter()
        .map(|l| groups.class_names[l].clone())
        .collect();
    let order = if a.order.is_empty() {
        groups.class_names.clone()
    } else {
        a.order.clone()
    };
    let points = concept_trend(&recs, &keys, &order, &a.concepts)?;
    match a.format {
        TableFormat::Json => {
            let value = json!({ "concepts": a.concepts, "series": points });
            emit_json(run, a.out.as_deref(), &value)
        }
        TableFormat::Csv => {
            let mut text = String::from("group,mean_weight,count\n");
            for p in &points {
                text.push_str(&format!("{},{},{}\n", csv_field(&p.group), p.mean_weight, p.count));
            }
            write_text(run, a.out.as_deref(), &text)
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
