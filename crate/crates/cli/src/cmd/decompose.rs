use anyhow::{Context, Result};
use serde_json::json;
use sparse_concepts::io;
use sparse_concepts::pipeline::sparsity_stats;
use sparse_concepts::solver::{calibrate_lambda_with, Calibration};
use sparse_concepts::{SolverConfig, SolverKind};

use super::{matrix, model, usage};
use crate::run::{manifest_for, Run};
use crate::DecomposeArgs;

pub fn run(a: DecomposeArgs, run: &mut Run) -> Result<()> {
    if a.batch_size == 0 {
        return Err(usage("--batch-size must be at least 1"));
    }
    let embeddings = matrix(run, &a.embeddings)?;
    let solver: SolverKind = a.solver.into();
    let base = SolverConfig {
        lambda: a.lambda.unwrap_or(SolverConfig::default().lambda),
        rho: a.rho,
        tol: a.tol,
        max_iter: a.max_iter,
        solver,
    };
    let mut model = model(run, &a.dict, base)?;

    let mut calibration = serde_json::Value::Null;
    if let Some(target_l0) = a.target_l0 {
        let n = embeddings.rows().min(a.calibration_samples);
        if n == 0 {
            anyhow::bail!("no samples to calibrate on");
        }
        let rows: Vec<usize> = (0..n).collect();
        let targets = model.targets(&embeddings.select_rows(&rows))?;
        let result = calibrate_lambda_with(model.atoms(), targets.view(), &Calibration::new(target_l0), &base)
            .context("calibrating lambda")?;
        log::info!(
            "calibrated lambda {:.6e} (mean l0 {:.2} on {n} samples)",
            result.lambda,
            result.mean_l0
        );
        calibration = json!({
            "target_l0": target_l0,
            "samples": n,
            "mean_l0": result.mean_l0,
            "steps": result.steps,
        });
        model = model.with_config(base.with_lambda(result.lambda))?;
    }

    let records = model.decompose_dataset(&embeddings, a.batch_size)?;
    let unconverged = records.iter().filter(|r| r.iterations >= a.max_iter).count();
    if unconverged > 0 {
        log::warn!("{unconverged} samples reached --max-iter before converging");
    }
    let out = run.output(&a.out);
    io::write_decompositions(&records, &out)?;

    let stats = sparsity_stats(&records);
    let config = model.config;
    run.finish(
        manifest_for(&a.out),
        "decompose",
        json!({
            "lambda": config.lambda,
            "rho": config.rho,
            "tol": config.tol,
            "max_iter": config.max_iter,
            "solver": config.solver,
            "batch_size": a.batch_size,
            "calibration": calibration,
        }),
        None,
        json!({
            "samples": stats.count,
            "mean_l0": stats.mean_l0,
            "median_l0": stats.median_l0,
            "mean_l1": stats.mean_l1,
            "l0_histogram": stats.histogram,
            "max_iterations": records.iter().map(|r| r.iterations).max().unwrap_or(0),
            "unconverged": unconverged,
        }),
    )?;
    Ok(())
}
