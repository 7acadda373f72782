use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "dialect-eval", version, about = "Metric robustness evaluation for dialect machine translation")]
pub struct Cli {
    /// More log output on stderr (repeat for debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

/// Every subcommand with its full configuration; serialized into run
/// manifests.
#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "subcommand")]
pub enum Command {
    /// Score a dataset with BLEU or chrF
    Score(ScoreArgs),
    /// Inject character-level noise into a dataset
    Noise(NoiseArgs),
    /// Build or evaluate a challenge set
    #[command(subcommand)]
    Challenge(ChallengeCommand),
    /// Meta-evaluate metrics against human judgments
    Evaluate(EvaluateArgs),
    /// Render a report TSV as a text table
    Report(ReportArgs),
    /// Re-run the command recorded in a run manifest
    Replay(ReplayArgs),
    /// Write a synthetic corpus bundle
    Synth(SynthArgs),
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "step")]
pub enum ChallengeCommand {
    /// Extract perfect-rated hypothesis pairs into an annotation worksheet
    Build(ChallengeBuildArgs),
    /// Compute success rates on completed triples
    Eval(ChallengeEvalArgs),
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Common {
    /// Random seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads (default: available cores)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Bleu,
    Chrf,
    #[value(name = "chrf++")]
    #[serde(rename = "chrf++")]
    ChrfPlusPlus,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricArgs {
    /// Metric to compute
    #[arg(long, value_enum)]
    pub metric: MetricKind,

    /// chrF word n-gram order (2 gives chrF++)
    #[arg(long)]
    pub word_order: Option<usize>,

    /// chrF character n-gram order
    #[arg(long, default_value_t = 6)]
    pub char_order: usize,

    /// chrF recall weight
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,

    /// BLEU maximum n-gram order
    #[arg(long, default_value_t = 4)]
    pub max_order: usize,

    /// Lower-case BLEU input
    #[arg(long)]
    pub lowercase: bool,

    /// Corpus-level BLEU with effective order
    #[arg(long)]
    pub effective_order: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArgs {
    /// Dataset JSONL file
    #[arg(long)]
    pub dataset: PathBuf,

    /// Language pair such as de-gsw_be; the target region selects the dialect
    #[arg(long)]
    pub lang_pair: String,

    /// Accept segments without a reference
    #[arg(long)]
    pub allow_missing_reference: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[command(flatten)]
    pub common: Common,

    /// Output directory for <metric>.seg.tsv and <metric>.sys.tsv
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Alphabet corpus per language, LANG=PATH (repeatable); languages
    /// without one use the dataset's own text
    #[arg(long = "corpus", value_parser = parse_labeled)]
    pub corpora: Vec<(String, PathBuf)>,

    /// Minimum character count for the alphabet
    #[arg(long, default_value_t = 1000)]
    pub min_count: u64,

    /// Fraction of tokens to edit
    #[arg(long, default_value_t = 0.15)]
    pub rate: f64,

    /// Edit operations (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec!["substitute".to_string(), "delete".to_string(), "insert".to_string()])]
    pub ops: Vec<String>,

    /// Fields to noise (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec!["source".to_string(), "reference".to_string(), "hypothesis".to_string()])]
    pub targets: Vec<String>,

    #[command(flatten)]
    pub common: Common,

    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeBuildArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Human judgments TSV
    #[arg(long)]
    pub judgments: PathBuf,

    /// Minimum aggregated human score of a perfect hypothesis
    #[arg(long, default_value_t = 100.0)]
    pub threshold: f64,

    #[command(flatten)]
    pub common: Common,

    /// Output directory for worksheet.tsv
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeEvalArgs {
    /// Completed triples, [LABEL=]PATH (repeatable)
    #[arg(long = "triples", value_parser = parse_maybe_labeled, required = true)]
    pub triples: Vec<(String, PathBuf)>,

    /// Internal scorer (repeatable): bleu, chrf, chrf++ or edit
    #[arg(long = "scorer", value_enum)]
    pub scorers: Vec<ScorerKind>,

    /// Precomputed triple scores, [LABEL=]PATH (repeatable)
    #[arg(long = "triple-scores", value_parser = parse_maybe_labeled)]
    pub triple_scores: Vec<(String, PathBuf)>,

    #[command(flatten)]
    pub common: Common,

    /// Optional output directory for per-triple outcomes
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Bleu,
    Chrf,
    #[value(name = "chrf++")]
    #[serde(rename = "chrf++")]
    ChrfPlusPlus,
    /// Negative character edit distance to the reference
    Edit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMetric {
    Bleu,
    Chrf,
    #[value(name = "chrf++")]
    #[serde(rename = "chrf++")]
    ChrfPlusPlus,
    /// The human scores themselves, as a sanity check
    Human,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Dataset per dialect, LABEL=PATH (repeatable)
    #[arg(long = "dataset", value_parser = parse_labeled, required = true)]
    pub datasets: Vec<(String, PathBuf)>,

    /// Judgments per dialect, LABEL=PATH
    #[arg(long = "judgments", value_parser = parse_labeled, required = true)]
    pub judgments: Vec<(String, PathBuf)>,

    /// Language pair per dialect, LABEL=PAIR (default de-gsw_<label>)
    #[arg(long = "lang-pair", value_parser = parse_labeled_str)]
    pub lang_pairs: Vec<(String, String)>,

    /// Internal metric to compute (repeatable)
    #[arg(long = "metric", value_enum)]
    pub metrics: Vec<EvalMetric>,

    /// External score table, LABEL=PATH (repeatable)
    #[arg(long = "scores", value_parser = parse_labeled)]
    pub scores: Vec<(String, PathBuf)>,

    /// Completed challenge triples, LABEL=PATH
    #[arg(long = "triples", value_parser = parse_labeled)]
    pub triples: Vec<(String, PathBuf)>,

    /// Precomputed triple scores, LABEL=PATH
    #[arg(long = "triple-scores", value_parser = parse_labeled)]
    pub triple_scores: Vec<(String, PathBuf)>,

    /// Metric id that p-values are computed against
    #[arg(long)]
    pub baseline: Option<String>,

    /// Wilcoxon significance level for pairwise accuracy
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Permutation-test iterations
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,

    /// Exit 0 even if a statistic is undefined
    #[arg(long)]
    pub allow_undefined: bool,

    #[command(flatten)]
    pub common: Common,

    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArgs {
    /// report.tsv written by evaluate
    pub input: PathBuf,

    /// Significance level for the `*` marker
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// manifest.json of a previous run
    pub manifest: PathBuf,

    /// Output directory for the replayed run
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub systems: usize,

    #[arg(long, default_value_t = 200)]
    pub segments: usize,

    /// Dialect labels (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec!["BE".to_string(), "ZH".to_string()])]
    pub dialects: Vec<String>,

    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn split_label(s: &str) -> Result<(&str, &str), String> {
    match s.split_once('=') {
        Some((l, v)) if !l.is_empty() && !v.is_empty() => Ok((l, v)),
        _ => Err(format!("expected LABEL=VALUE, got {s:?}")),
    }
}

pub fn parse_labeled(s: &str) -> Result<(String, PathBuf), String> {
    split_label(s).map(|(l, v)| (l.to_string(), PathBuf::from(v)))
}

fn parse_labeled_str(s: &str) -> Result<(String, String), String> {
    split_label(s).map(|(l, v)| (l.to_string(), v.to_string()))
}

/// `LABEL=PATH`, or a bare path labelled `all`.
fn parse_maybe_labeled(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some(_) => parse_labeled(s),
        None => Ok(("all".to_string(), PathBuf::from(s))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_values() {
        assert_eq!(parse_labeled("BE=a/b.tsv").unwrap(), ("BE".into(), PathBuf::from("a/b.tsv")));
        assert!(parse_labeled("a/b.tsv").is_err());
        assert!(parse_labeled("=x").is_err());
        assert_eq!(parse_maybe_labeled("x.tsv").unwrap().0, "all");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
