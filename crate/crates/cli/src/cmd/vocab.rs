use anyhow::{Context, Result};
use serde_json::json;
use sparse_concepts::geometry::normalize_rows;
use sparse_concepts::io::{self, Precision, VocabEntry, VocabularyFile};
use sparse_concepts::vocab::{build_vocabulary, Candidate, VocabParams};

use super::matrix;
use crate::run::{with_prefix, Run};
use crate::BuildVocabArgs;

pub fn run(a: BuildVocabArgs, run: &mut Run) -> Result<()> {
    let vocab =
        io::read_vocab(run.input(&a.candidates)?).with_context(|| format!("reading {}", a.candidates.display()))?;
    let embeddings = matrix(run, &a.embeddings)?;
    if embeddings.rows() != vocab.len() {
        anyhow::bail!("{} candidates but {} embedding rows", vocab.len(), embeddings.rows());
    }
    // files may be f32; renormalize so the unit-norm checks see exact unit rows
    let embeddings = normalize_rows(&embeddings)?;
    let candidates: Vec<Candidate> = vocab
        .entries
        .iter()
        .zip(embeddings.iter_rows())
        .map(|(e, row)| Candidate {
            text: e.text.clone(),
            frequency: e.frequency,
            embedding: row.to_vec(),
        })
        .collect();
    let params = VocabParams {
        k_unigram: a.k_unigram,
        k_bigram: a.k_bigram,
        threshold: a.threshold,
    };
    let (dict, freqs) = build_vocabulary(&candidates, params)?;

    let dict_path = run.output(with_prefix(&a.out_prefix, ".dict.npy"));
    io::write_matrix(&dict.atoms, &dict_path, Precision::F64)?;
    let mu_path = run.output(with_prefix(&a.out_prefix, ".mu_con.npy"));
    io::write_vector(&dict.mu_con, &mu_path, Precision::F64)?;
    let names_path = run.output(with_prefix(&a.out_prefix, ".names.txt"));
    let mut names = dict.names.join("\n");
    names.push('\n');
    std::fs::write(&names_path, names).with_context(|| format!("writing {}", names_path.display()))?;
    let vocab_path = run.output(with_prefix(&a.out_prefix, ".vocab.tsv"));
    let selected = VocabularyFile {
        entries: dict
            .names
            .iter()
            .zip(&freqs)
            .map(|(text, &frequency)| VocabEntry {
                text: text.clone(),
                frequency,
            })
            .collect(),
    };
    io::write_vocab(&selected, &vocab_path)?;

    run.finish(
        with_prefix(&a.out_prefix, ".manifest.json"),
        "build-vocab",
        json!({
            "k_unigram": a.k_unigram,
            "k_bigram": a.k_bigram,
            "threshold": a.threshold,
        }),
        None,
        json!({ "candidates": vocab.len(), "concepts": dict.len(), "dim": dict.dim() }),
    )?;
    Ok(())
}
