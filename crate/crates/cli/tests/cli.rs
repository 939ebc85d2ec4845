use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sparse_concepts::io::{read_decompositions, read_matrix, write_matrix, Precision};
use sparse_concepts::DenseMatrix;

const BIN: &str = env!("CARGO_BIN_EXE_sparse-concepts");

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/noiseless.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic fixture files under `<dir>/syn.*`.
struct Synth {
    prefix: String,
}

impl Synth {
    fn new(dir: &Path, samples: usize) -> Self {
        let prefix = dir.join("syn").to_str().unwrap().to_string();
        ok(&[
            "synth",
            "--spec",
            s(&fixture()),
            "--out-prefix",
            &prefix,
            "--samples",
            &samples.to_string(),
        ]);
        Self { prefix }
    }

    fn path(&self, suffix: &str) -> String {
        format!("{}{suffix}", self.prefix)
    }

    fn dict_args(&self) -> Vec<String> {
        [
            ("--dict-matrix", ".dict.npy"),
            ("--dict-names", ".names.txt"),
            ("--mu-img", ".mu_img.npy"),
            ("--mu-con", ".mu_con.npy"),
        ]
        .iter()
        .flat_map(|(flag, suffix)| [flag.to_string(), self.path(suffix)])
        .collect()
    }

    fn decompose(&self, out: &Path, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec!["decompose".into(), "--embeddings".into(), self.path(".embeddings.npy")];
        args.extend(self.dict_args());
        args.extend(["--out".to_string(), s(out).to_string()]);
        args.extend(extra.iter().map(|a| a.to_string()));
        run(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }
}

fn manifest(out: &Path) -> Value {
    json(Path::new(&format!("{}.manifest.json", s(out))))
}

#[test]
fn calibrated_decomposition_hits_target_and_recovers_codes() {
    let dir = tempfile::tempdir().unwrap();
    let syn = Synth::new(dir.path(), 200);
    let out = dir.path().join("dec.jsonl");
    assert!(syn.decompose(&out, &["--target-l0", "5"]).status.success());
    let m = manifest(&out);
    let mean_l0 = m["summary"]["mean_l0"].as_f64().unwrap();
    assert!((3.0..=7.0).contains(&mean_l0), "mean l0 {mean_l0}");
    assert_eq!(m["summary"]["samples"], 200);
    assert_eq!(m["parameters"]["calibration"]["target_l0"], 5);

    let precise = dir.path().join("precise.jsonl");
    assert!(syn.decompose(&precise, &["--lambda", "1e-3"]).status.success());
    let report = dir.path().join("report.json");
    ok(&[
        "synth",
        "verify",
        "--codes",
        &syn.path(".codes.npy"),
        "--dict-names",
        &syn.path(".names.txt"),
        "--records",
        s(&precise),
        "--out",
        s(&report),
    ]);
    let recall = json(&report)["support_recall"].as_f64().unwrap();
    assert!(recall >= 0.99, "recall {recall}");
}

#[test]
fn lambda_and_target_are_mutually_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let syn = Synth::new(dir.path(), 10);
    let out = dir.path().join("dec.jsonl");
    let res = syn.decompose(&out, &["--lambda", "0.1", "--target-l0", "5"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(syn.decompose(&out, &[]).status.code(), Some(2));
    assert_eq!(
        syn.decompose(&out, &["--lambda", "0.1", "--batch-size", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_input_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let syn = Synth::new(dir.path(), 10);
    fs::remove_file(syn.path(".embeddings.npy")).unwrap();
    let out = dir.path().join("dec.jsonl");
    let res = syn.decompose(&out, &["--lambda", "0.1"]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
    assert!(stderr.contains("embeddings.npy"));
    assert!(!out.exists());
}

#[test]
fn failed_run_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("syn");
    // a directory where a later output file should go makes that write fail
    fs::create_dir(dir.path().join("syn.codes.npy")).unwrap();
    let res = run(&[
        "synth",
        "--spec",
        s(&fixture()),
        "--out-prefix",
        s(&prefix),
        "--samples",
        "5",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!dir.path().join("syn.dict.npy").exists());
    assert!(!dir.path().join("syn.raw.npy").exists());
    assert!(!dir.path().join("syn.manifest.json").exists());
}

#[test]
fn output_ignores_threads_and_batch_size() {
    let dir = tempfile::tempdir().unwrap();
    let syn = Synth::new(dir.path(), 120);
    let mut outputs = Vec::new();
    for solver in ["admm", "cd"] {
        for (threads, batch) in [("1", "1024"), ("4", "7"), ("2", "1")] {
            let out = dir.path().join(format!("{solver}-{threads}-{batch}.jsonl"));
            let res = syn.decompose(
                &out,
                &[
                    "--lambda",
                    "0.02",
                    "--solver",
                    solver,
                    "--threads",
                    threads,
                    "--batch-size",
                    batch,
                ],
            );
            assert!(res.status.success());
            outputs.push((solver, fs::read(&out).unwrap()));
        }
    }
    for solver in ["admm", "cd"] {
        let same: Vec<&Vec<u8>> = outputs.iter().filter(|o| o.0 == solver).map(|o| &o.1).collect();
        assert!(same.windows(2).all(|w| w[0] == w[1]), "{solver} output differs");
    }
}

#[test]
fn replay_reproduces_and_detects_changes() {
    let dir = tempfile::tempdir().unwrap();
    let syn = Synth::new(dir.path(), 40);
    let out = dir.path().join("dec.jsonl");
    assert!(syn.decompose(&out, &["--target-l0", "4"]).status.success());
    let manifest_path = format!("{}.manifest.json", s(&out));
    let m = json(Path::new(&manifest_path));
    assert_eq!(m["inputs"].as_object().unwrap().len(), 5);
    assert_eq!(m["outputs"].as_object().unwrap().len(), 1);
    ok(&["replay", "--manifest", &manifest_path]);

    fs::write(syn.path(".mu_img.npy"), fs::read(syn.path(".mu_con.npy")).unwrap()).unwrap();
    assert_eq!(run(&["replay", "--manifest", &manifest_path]).status.code(), Some(1));
}

#[test]
fn mean_matches_synth_image_mean() {
    let dir = tempfile::tempdir().unwrap();
    let syn = Synth::new(dir.path(), 30);
    let out = dir.path().join("mu.npy");
    ok(&["mean", "--input", &syn.path(".embeddings.npy"), "--out", s(&out)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(syn.path(".mu_img.npy")).unwrap());
}

fn write(dir: &Path, name: &str, rows: &[Vec<f64>]) -> PathBuf {
    let p = dir.join(name);
    write_matrix(&DenseMatrix::from_rows(rows).unwrap(), &p, Precision::F64).unwrap();
    p
}

#[test]
fn linearity_recovers_weights_and_skips_degenerate_triples() {
    let dir = tempfile::tempdir().unwrap();
    let norm = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let a = norm(vec![1.0, 0.2, 0.0, 0.1]);
    let b = norm(vec![0.0, 1.0, 0.3, 0.0]);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.6 * x + 0.4 * y).collect();
    let rows = vec![a.clone(), b.clone(), ab, a.clone(), a.clone(), a];
    let triples = write(dir.path(), "triples.npy", &rows);
    let out = dir.path().join("lin.json");
    ok(&["linearity", "--triples", s(&triples), "--out", s(&out)]);
    let v = json(&out);
    assert_eq!(v["skipped"], serde_json::json!([1]));
    let t = &v["triples"][0];
    assert!((t["w_a"].as_f64().unwrap() - 0.6).abs() < 1e-9);
    assert!((t["w_b"].as_f64().unwrap() - 0.4).abs() < 1e-9);
    assert!((t["cosine"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn build_vocab_prunes_near_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let candidates = dir.path().join("cands.tsv");
    fs::write(&candidates, "dog\t50\npuppy\t40\ncat\t30\nred car\t20\nblue\t10\n").unwrap();
    let emb = write(
        dir.path(),
        "cands.npy",
        &[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.99, 0.05, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ],
    );
    let prefix = dir.path().join("vocab");
    ok(&[
        "build-vocab",
        "--candidates",
        s(&candidates),
        "--embeddings",
        s(&emb),
        "--out-prefix",
        s(&prefix),
    ]);
    let names = fs::read_to_string(dir.path().join("vocab.names.txt")).unwrap();
    let names: Vec<&str> = names.lines().collect();
    assert_eq!(names, ["dog", "cat", "red car", "blue"]);
    let dict = read_matrix(dir.path().join("vocab.dict.npy")).unwrap();
    assert_eq!((dict.rows(), dict.cols()), (4, 4));
    for row in dict.iter_rows() {
        let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }
    assert!(dir.path().join("vocab.mu_con.npy").exists());
    assert!(dir.path().join("vocab.manifest.json").exists());
}

/// Labels "c<j>" by the largest true code among the first three concepts.
fn label_file(dir: &Path, codes: &DenseMatrix) -> PathBuf {
    let mut text = String::from("sample_id,label\n");
    for (i, row) in codes.iter_rows().enumerate() {
        let j = (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        text.push_str(&format!("{i},c{j}\n"));
    }
    let p = dir.join("labels.csv");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn eval_and_analyze_commands_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let syn = Synth::new(d, 150);
    let dec = d.join("dec.jsonl");
    assert!(syn.decompose(&dec, &["--lambda", "0.01"]).status.success());
    let codes = read_matrix(syn.path(".codes.npy")).unwrap();
    let labels = label_file(d, &codes);
    let concept_names = syn.path(".names.txt");
    let first: Vec<String> = fs::read_to_string(&concept_names)
        .unwrap()
        .lines()
        .take(3)
        .map(String::from)
        .collect();

    let emb = read_matrix(syn.path(".embeddings.npy")).unwrap();
    let prompts = write(
        d,
        "prompts.npy",
        &(0..3)
            .map(|j| read_matrix(syn.path(".raw.npy")).unwrap().row(j).to_vec())
            .collect::<Vec<_>>(),
    );
    let classes = d.join("classes.txt");
    fs::write(&classes, "c0\nc1\nc2\n").unwrap();
    let zs = d.join("zs.json");
    ok(&[
        "eval",
        "zeroshot",
        "--prompts",
        s(&prompts),
        "--class-names",
        s(&classes),
        "--labels",
        s(&labels),
        "--embeddings",
        &syn.path(".embeddings.npy"),
        "--out",
        s(&zs),
    ]);
    let acc = json(&zs)[0]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let zs_rec = d.join("zs_rec.json");
    ok(&[
        "eval",
        "zeroshot",
        "--prompts",
        s(&prompts),
        "--class-names",
        s(&classes),
        "--labels",
        s(&labels),
        "--records",
        s(&dec),
        "--dict-matrix",
        &syn.path(".dict.npy"),
        "--dict-names",
        &concept_names,
        "--mu-img",
        &syn.path(".mu_img.npy"),
        "--out",
        s(&zs_rec),
    ]);
    assert_eq!(json(&zs_rec)[0]["params"]["source"], "reconstructions");

    let ret = d.join("ret.json");
    ok(&[
        "eval",
        "retrieval",
        "--queries",
        &syn.path(".embeddings.npy"),
        "--gallery",
        &syn.path(".embeddings.npy"),
        "--k",
        "1,5",
        "--subset-size",
        "100",
        "--out",
        s(&ret),
    ]);
    let metrics = json(&ret);
    assert_eq!(metrics.as_array().unwrap().len(), 4);
    assert!(metrics.as_array().unwrap().iter().all(|m| m["value"] == 1.0));

    let rel = d.join("rel.json");
    let half = write(
        d,
        "half.npy",
        &emb.iter_rows().take(5).map(<[f64]>::to_vec).collect::<Vec<_>>(),
    );
    ok(&[
        "eval",
        "relevance",
        "--concepts",
        s(&half),
        "--tokens",
        s(&half),
        "--out",
        s(&rel),
    ]);
    assert!(json(&rel)[0]["value"].as_f64().unwrap().abs() < 1e-12);

    let probe = d.join("probe.json");
    let probe_model = d.join("probe_model.json");
    ok(&[
        "eval",
        "probe",
        "--records",
        s(&dec),
        "--labels",
        s(&labels),
        "--dict-names",
        &concept_names,
        "--epochs",
        "300",
        "--step",
        "0.5",
        "--model-out",
        s(&probe_model),
        "--out",
        s(&probe),
    ]);
    let train_acc = json(&probe)[0]["value"].as_f64().unwrap();
    assert!(train_acc > 0.8, "train accuracy {train_acc}");

    let hist = d.join("hist.json");
    ok(&[
        "analyze",
        "histogram",
        "--records",
        s(&dec),
        "--dict-names",
        &concept_names,
        "--labels",
        s(&labels),
        "--class",
        "c0",
        "--format",
        "json",
        "--out",
        s(&hist),
    ]);
    assert_eq!(json(&hist)["class"], "c0");
    let csv = run(&[
        "analyze",
        "histogram",
        "--records",
        s(&dec),
        "--dict-names",
        &concept_names,
    ]);
    assert!(csv.status.success());
    let text = String::from_utf8(csv.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "concept,mean_weight,support_count");
    let used: std::collections::HashSet<String> = read_decompositions(&dec)
        .unwrap()
        .into_iter()
        .flat_map(|r| r.entries.into_iter().map(|e| e.0))
        .collect();
    assert_eq!(rows.len() - 1, used.len());

    let dist = d.join("dist.json");
    ok(&[
        "analyze",
        "distribution",
        "--records",
        s(&dec),
        "--concepts",
        &first[0],
        "--out",
        s(&dist),
    ]);
    assert!(json(&dist)["mean"].as_f64().unwrap() > 0.0);

    let edited = d.join("edited.jsonl");
    ok(&[
        "analyze",
        "intervene",
        "--records",
        s(&dec),
        "--exact",
        &first[0],
        "--out",
        s(&edited),
    ]);
    let text = fs::read_to_string(&edited).unwrap();
    assert!(!text.contains(&format!("\"{}\"", first[0])));
    assert_eq!(text.lines().count(), 150);
    let edited_probe = d.join("edited_probe.json");
    ok(&[
        "analyze",
        "intervene",
        "--probe",
        s(&probe_model),
        "--dict-names",
        &concept_names,
        "--exact",
        &first[0],
        "--out",
        s(&edited_probe),
    ]);
    let before = json(&probe_model)["weights"].as_array().unwrap().clone();
    let after = json(&edited_probe)["weights"].as_array().unwrap().clone();
    assert!(before.iter().any(|row| row[0] != 0.0));
    assert!(after.iter().all(|row| row[0] == 0.0));
    assert!(before.iter().zip(&after).all(|(a, b)| a[1] == b[1]));

    let drift = d.join("drift.json");
    ok(&[
        "analyze",
        "drift",
        "--records",
        s(&dec),
        s(&edited),
        "--dict-names",
        &concept_names,
        "--out",
        s(&drift),
    ]);
    let m = &json(&drift)["drift"];
    assert_eq!(m[0][0], 0.0);
    assert!(m[0][1].as_f64().unwrap() > 0.0);

    let trend = d.join("trend.json");
    ok(&[
        "analyze",
        "trend",
        "--records",
        s(&dec),
        "--groups",
        s(&labels),
        "--order",
        "c0,c1,c2",
        "--concepts",
        &first[0],
        "--out",
        s(&trend),
    ]);
    let series = json(&trend)["series"].as_array().unwrap().clone();
    assert_eq!(series.len(), 3);
    let weight = |i: usize| series[i]["mean_weight"].as_f64().unwrap();
    assert!(weight(0) > weight(1) && weight(0) > weight(2));
}
