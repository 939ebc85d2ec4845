use anyhow::{Context, Result};
use serde_json::json;
use sparse_concepts::geometry::compute_mean;
use sparse_concepts::io::{self, Precision};
use sparse_concepts::synth::{gen_dictionary, gen_embeddings_for, gen_sparse_codes, recovery_report, GenerativeSpec};

use super::{matrix, names, records, usage};
use crate::run::{emit_json, with_prefix, Run};
use crate::{SynthArgs, SynthCommand, VerifyArgs};

pub fn run(a: SynthArgs, run: &mut Run) -> Result<()> {
    if let Some(SynthCommand::Verify(v)) = a.verify {
        return verify(v, run);
    }
    let (Some(spec_path), Some(prefix)) = (a.spec, a.out_prefix) else {
        return Err(usage("synth needs --spec and --out-prefix"));
    };
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let text =
        std::fs::read_to_string(run.input(&spec_path)?).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: GenerativeSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    spec.validate()?;

    let dict = gen_dictionary(&spec)?;
    let codes = gen_sparse_codes(&spec, a.samples)?;
    let embeddings = gen_embeddings_for(&spec, &dict, &codes)?;
    let mu_img = compute_mean(&embeddings)?;

    let write = |run: &mut Run, suffix: &str, m: &sparse_concepts::DenseMatrix| -> Result<()> {
        let p = run.output(with_prefix(&prefix, suffix));
        io::write_matrix(m, &p, Precision::F64)?;
        Ok(())
    };
    write(run, ".dict.npy", &dict.atoms)?;
    write(
        run,
        ".raw.npy",
        dict.raw.as_ref().expect("generated dictionaries keep raw vectors"),
    )?;
    write(run, ".codes.npy", &codes)?;
    write(run, ".embeddings.npy", &embeddings)?;
    for (suffix, v) in [(".mu_con.npy", &dict.mu_con), (".mu_img.npy", &mu_img)] {
        let p = run.output(with_prefix(&prefix, suffix));
        io::write_vector(v, &p, Precision::F64)?;
    }
    let names_path = run.output(with_prefix(&prefix, ".names.txt"));
    let mut names = dict.names.join("\n");
    names.push('\n');
    std::fs::write(&names_path, names).with_context(|| format!("writing {}", names_path.display()))?;

    run.finish(
        with_prefix(&prefix, ".manifest.json"),
        "synth",
        json!({ "spec": spec, "samples": a.samples }),
        Some(spec.seed),
        json!({ "concepts": dict.len(), "dim": dict.dim() }),
    )?;
    Ok(())
}

fn verify(a: VerifyArgs, run: &mut Run) -> Result<()> {
    let codes = matrix(run, &a.codes)?;
    let concept_names = names(run, &a.dict_names)?;
    let recs = records(run, &a.records)?;
    let report = recovery_report(&codes, &concept_names, &recs)?;
    let mut value = serde_json::to_value(report)?;
    value["samples"] = json!(codes.rows());
    emit_json(run, a.out.as_deref(), &value)
}
