//! Results must not depend on how samples are batched or on thread count.

mod common;

use common::*;
use sparse_concepts::solver::{solve_admm_batch, solve_cd_batch};
use sparse_concepts::synth::{gen_dictionary, gen_embeddings_for, gen_sparse_codes, random_cone_mean};
use sparse_concepts::{DenseMatrix, SolverConfig, SolverKind, SolverResult};

fn bits(results: &[SolverResult]) -> Vec<(Vec<u64>, usize, u64)> {
    results
        .iter()
        .map(|r| {
            (
                r.w.iter().map(|w| w.to_bits()).collect(),
                r.iterations,
                r.objective.to_bits(),
            )
        })
        .collect()
}

fn one_by_one(atoms: &DenseMatrix, targets: &DenseMatrix, config: &SolverConfig) -> Vec<SolverResult> {
    (0..targets.rows())
        .flat_map(|i| solve_admm_batch(atoms.view(), targets.select_rows(&[i]).view(), config).unwrap())
        .collect()
}

fn check_admm(c: usize, d: usize, seed: u64) {
    let mut r = rng(seed);
    let atoms = unit_rows(&mut r, c, d);
    let targets = unit_rows(&mut r, 40, d);
    let config = SolverConfig::default().with_lambda(0.1);
    let whole = solve_admm_batch(atoms.view(), targets.view(), &config).unwrap();
    assert_eq!(bits(&whole), bits(&one_by_one(&atoms, &targets, &config)));
    let halves: Vec<SolverResult> = [0..13, 13..40]
        .into_iter()
        .flat_map(|range| {
            let idx: Vec<usize> = range.collect();
            solve_admm_batch(atoms.view(), targets.select_rows(&idx).view(), &config).unwrap()
        })
        .collect();
    assert_eq!(bits(&whole), bits(&halves));
}

#[test]
fn admm_direct_form_is_batch_invariant() {
    check_admm(24, 32, 1);
}

#[test]
fn admm_woodbury_form_is_batch_invariant() {
    check_admm(300, 32, 2);
}

#[test]
fn decompose_dataset_ignores_batch_size() {
    let s = spec(150, 48, 5, 3);
    let dict = gen_dictionary(&s).unwrap();
    let emb = gen_embeddings_for(&s, &dict, &gen_sparse_codes(&s, 100).unwrap()).unwrap();
    let m = model(
        &dict,
        Some(random_cone_mean(48, 0.4, 3)),
        SolverConfig::default().with_lambda(0.05),
    );
    let b7 = m.decompose_dataset(&emb, 7).unwrap();
    let b64 = m.decompose_dataset(&emb, 64).unwrap();
    assert_eq!(b7, b64);
    assert_eq!(m.decompose(5, emb.row(5)).unwrap(), b7[5]);
}

#[test]
fn thread_count_does_not_change_results() {
    let mut r = rng(4);
    let atoms = unit_rows(&mut r, 120, 40);
    let targets = unit_rows(&mut r, 30, 40);
    let run = |threads: usize, kind: SolverKind| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let config = SolverConfig::default().with_lambda(0.08).with_solver(kind);
        pool.install(|| match kind {
            SolverKind::Cd => solve_cd_batch(atoms.view(), targets.view(), &config).unwrap(),
            SolverKind::Admm => solve_admm_batch(atoms.view(), targets.view(), &config).unwrap(),
        })
    };
    for kind in [SolverKind::Cd, SolverKind::Admm] {
        assert_eq!(bits(&run(1, kind)), bits(&run(4, kind)));
    }
}
