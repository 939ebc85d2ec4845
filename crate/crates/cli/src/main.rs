mod cmd;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use sparse_concepts::SolverKind;

use crate::run::Run;

#[derive(Parser, Debug)]
#[command(
    name = "sparse-concepts",
    version,
    about = "Sparse nonnegative concept decompositions of embeddings"
)]
pub struct Cli {
    /// Worker threads for parallel solves; results do not depend on it
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decompose embeddings into named concept weights (JSON Lines)
    Decompose(DecomposeArgs),
    /// Prune candidate concepts and build a centered dictionary
    BuildVocab(BuildVocabArgs),
    /// Evaluation metrics
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Histograms, distributions, interventions and drift
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Least-squares composition check on stacked (a, b, ab) rows
    Linearity(LinearityArgs),
    /// Generate a synthetic fixture, or score decompositions against one
    Synth(SynthArgs),
    /// Column mean of a matrix, e.g. the image cone mean
    Mean(MeanArgs),
    /// Rerun the command recorded in a manifest and compare output digests
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Admm,
    Cd,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Admm => SolverKind::Admm,
            SolverArg::Cd => SolverKind::Cd,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DictArgs {
    /// Centered dictionary, one concept per row (c × d NPY)
    #[arg(long)]
    pub dict_matrix: PathBuf,
    /// Concept names, one per line, in dictionary row order
    #[arg(long)]
    pub dict_names: PathBuf,
    /// Image cone mean (NPY vector of length d)
    #[arg(long)]
    pub mu_img: PathBuf,
    /// Concept mean, recorded with the model (NPY vector); zeros when absent
    #[arg(long)]
    pub mu_con: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("sparsity").required(true).args(["lambda", "target_l0"])))]
pub struct DecomposeArgs {
    /// Image embeddings (n × d NPY)
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub dict: DictArgs,
    /// ℓ1 strength in ||Cw − z||² + 2λ Σw
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Calibrate λ so the mean number of concepts is close to this
    #[arg(long)]
    pub target_l0: Option<usize>,
    /// Samples (from the start of the file) used for calibration
    #[arg(long, default_value_t = 1024)]
    pub calibration_samples: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Admm)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 5.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Samples solved together; results do not depend on it
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    /// Output JSON Lines file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// Candidate texts with frequencies ("text<TAB>frequency" per line)
    #[arg(long)]
    pub candidates: PathBuf,
    /// Text embeddings of the candidates, one row per line of --candidates
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub k_unigram: usize,
    #[arg(long, default_value_t = 5_000)]
    pub k_bigram: usize,
    /// Cosine above which two concepts count as redundant
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    /// Writes <P>.dict.npy, <P>.names.txt, <P>.mu_con.npy and <P>.vocab.tsv
    #[arg(long)]
    pub out_prefix: String,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Zero-shot accuracy of embeddings or of reconstructed decompositions
    Zeroshot(ZeroshotArgs),
    /// Recall@k for paired queries and gallery, both directions
    Retrieval(RetrievalArgs),
    /// Hausdorff cosine distance between two embedding sets
    Relevance(RelevanceArgs),
    /// Train an ℓ1-penalized linear probe on decompositions
    Probe(ProbeArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["embeddings", "records"])))]
pub struct ZeroshotArgs {
    /// Prompt embeddings, one row per class
    #[arg(long)]
    pub prompts: PathBuf,
    /// Class names, one per line, in prompt order
    #[arg(long)]
    pub class_names: PathBuf,
    /// sample_id,label_name CSV
    #[arg(long)]
    pub labels: PathBuf,
    /// Score these embeddings directly (sample id = row index)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Score reconstructions of these decompositions (needs the dictionary)
    #[arg(long, requires = "dict_matrix")]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub dict_matrix: Option<PathBuf>,
    #[arg(long)]
    pub dict_names: Option<PathBuf>,
    #[arg(long)]
    pub mu_img: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RetrievalArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 1024)]
    pub subset_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RelevanceArgs {
    /// Embeddings of the decomposition's concepts
    #[arg(long)]
    pub concepts: PathBuf,
    /// Embeddings of the caption tokens
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("test").multiple(true).requires_all(["test_records", "test_labels"]).args(["test_records", "test_labels"])))]
pub struct ProbeArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub dict_names: PathBuf,
    #[arg(long)]
    pub test_records: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub l1_penalty: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    /// Save the trained probe as JSON
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct GroupArgs {
    /// sample_id,label_name CSV used with --class
    #[arg(long, requires = "class")]
    pub labels: Option<PathBuf>,
    /// Restrict to records whose label is this class
    #[arg(long, requires = "labels")]
    pub class: Option<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    /// Mean concept weights over a group of decompositions
    Histogram(HistogramArgs),
    /// Per-sample total weight on a set of concepts
    Distribution(DistributionArgs),
    /// Remove concepts from decompositions, or zero them in a probe
    Intervene(InterveneArgs),
    /// Pairwise histogram distances between splits
    Drift(DriftArgs),
    /// Concept-set weight per ordered group
    Trend(TrendArgs),
}

#[derive(Args, Debug)]
pub struct HistogramArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub dict_names: PathBuf,
    #[command(flatten)]
    pub group: GroupArgs,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistributionArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Comma-separated concept names whose weights are summed
    #[arg(long, value_delimiter = ',', required = true)]
    pub concepts: Vec<String>,
    #[command(flatten)]
    pub group: GroupArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("target").required(true).args(["records", "probe"])))]
#[command(group(ArgGroup::new("matchers").required(true).multiple(true).args(["exact", "substring"])))]
pub struct InterveneArgs {
    /// Decompositions to edit (JSON Lines)
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Probe to edit (JSON from `eval probe --model-out`); needs --dict-names
    #[arg(long, requires = "dict_names")]
    pub probe: Option<PathBuf>,
    #[arg(long)]
    pub dict_names: Option<PathBuf>,
    /// Concept names removed exactly
    #[arg(long, value_delimiter = ',')]
    pub exact: Vec<String>,
    /// Case-insensitive substrings; "forest" also removes "deforested"
    #[arg(long, value_delimiter = ',')]
    pub substring: Vec<String>,
    /// Embeddings the records came from, to recompute objectives
    #[arg(long, requires_all = ["dict_matrix", "mu_img", "lambda"])]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub dict_matrix: Option<PathBuf>,
    #[arg(long)]
    pub mu_img: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DriftArgs {
    /// One decomposition file per split (at least two)
    #[arg(long, required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    #[arg(long)]
    pub dict_names: PathBuf,
    /// One label file per split, used with --class
    #[arg(long, num_args = 1.., requires = "class")]
    pub labels: Vec<PathBuf>,
    #[arg(long, requires = "labels")]
    pub class: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrendArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// sample_id,label_name CSV whose label is the group
    #[arg(long)]
    pub groups: PathBuf,
    /// Group order; first appearance in --groups when absent
    #[arg(long, value_delimiter = ',')]
    pub order: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub concepts: Vec<String>,
    #[arg(long, value_enum, default_value_t = TableFormat::Json)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LinearityArgs {
    /// 3n × d rows ordered a, b, ab for each triple
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub verify: Option<SynthCommand>,
    /// Generative model as JSON
    #[arg(long, required = true)]
    pub spec: Option<PathBuf>,
    #[arg(long, required = true)]
    pub out_prefix: Option<String>,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Support precision/recall and weight error against true codes
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// True codes (n × k NPY) from `synth`
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long)]
    pub dict_names: PathBuf,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MeanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Invalid combination of otherwise well-formed arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let text = e.render().to_string();
                    let first = text
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("invalid arguments");
                    eprintln!("{}", one_line(first));
                    ExitCode::from(2)
                }
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure thread pool: {e}");
        }
    }

    let mut run = Run::new(args[1..].to_vec());
    match cmd::dispatch(cli.command, &mut run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            run.remove_outputs();
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_fit_on_one_line() {
        assert_eq!(
            one_line("reading a.npy:\n  not found\t(os error 2)"),
            "reading a.npy: not found (os error 2)"
        );
    }

    #[test]
    fn sparsity_flags_are_exclusive() {
        let base = [
            "sparse-concepts",
            "decompose",
            "--embeddings",
            "e",
            "--dict-matrix",
            "m",
            "--dict-names",
            "n",
            "--mu-img",
            "u",
            "--out",
            "o",
        ];
        let with = |extra: &[&str]| Cli::try_parse_from(base.iter().chain(extra));
        assert!(with(&["--lambda", "0.1"]).is_ok());
        assert!(with(&["--target-l0", "5"]).is_ok());
        assert!(with(&["--lambda", "0.1", "--target-l0", "5"]).is_err());
        assert!(with(&[]).is_err());
    }
}
