use anyhow::{Context, Result};
use clap::Parser;
use serde_json::json;
use sparse_concepts::eval::{linearity_check, summarize_linearity};
use sparse_concepts::geometry::compute_mean;
use sparse_concepts::io::{self, Precision};

use super::matrix;
use crate::run::{manifest_for, sha256_file, write_json, Run, RunManifest};
use crate::{Cli, LinearityArgs, MeanArgs, ReplayArgs};

pub fn linearity(a: LinearityArgs, run: &mut Run) -> Result<()> {
    let m = matrix(run, &a.triples)?;
    if m.rows() == 0 || m.rows() % 3 != 0 {
        anyhow::bail!("{} rows is not a positive multiple of 3 (a, b, ab)", m.rows());
    }
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for t in 0..m.rows() / 3 {
        match linearity_check(m.row(3 * t), m.row(3 * t + 1), m.row(3 * t + 2)) {
            Ok(r) => results.push((t, r)),
            Err(e) => {
                log::warn!("triple {t} skipped: {e}");
                skipped.push(t);
            }
        }
    }
    if results.is_empty() {
        anyhow::bail!("every triple was degenerate");
    }
    let summary = summarize_linearity(&results.iter().map(|(_, r)| *r).collect::<Vec<_>>())?;
    let per_triple: Vec<_> = results
        .iter()
        .map(|(t, r)| json!({ "triple": t, "w_a": r.w_a, "w_b": r.w_b, "cosine": r.cosine }))
        .collect();
    let out = run.output(&a.out);
    write_json(
        &out,
        &json!({ "summary": summary, "skipped": skipped, "triples": per_triple }),
    )
}

pub fn mean(a: MeanArgs, run: &mut Run) -> Result<()> {
    let m = matrix(run, &a.input)?;
    let mu = compute_mean(&m)?;
    let out = run.output(&a.out);
    io::write_vector(&mu, &out, Precision::F64)?;
    run.finish(
        manifest_for(&a.out),
        "mean",
        json!({}),
        None,
        json!({ "rows": m.rows() }),
    )?;
    Ok(())
}

pub fn replay(a: ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.manifest.display()))?;
    for (path, digest) in &manifest.inputs {
        let now = sha256_file(std::path::Path::new(path))?;
        if &now != digest {
            anyhow::bail!("input {path} changed since the recorded run");
        }
    }
    let argv = std::iter::once("sparse-concepts".to_string()).chain(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| anyhow::anyhow!("recorded arguments no longer parse: {e}"))?;
    let mut run = Run::new(manifest.args.clone());
    if let Err(e) = super::dispatch(cli.command, &mut run) {
        run.remove_outputs();
        return Err(e);
    }
    for (path, digest) in &manifest.outputs {
        let now = sha256_file(std::path::Path::new(path))?;
        if &now != digest {
            anyhow::bail!("output {path} differs from the recorded run");
        }
    }
    eprintln!(
        "replayed {} ({} outputs identical)",
        manifest.command,
        manifest.outputs.len()
    );
    Ok(())
}
