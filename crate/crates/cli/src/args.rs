use std::path::PathBuf;

use boostedprob::cluster::{CutRule, FinderKind, DEFAULT_EPSILON, DEFAULT_X_PERCENT};
use boostedprob::eval::{Averaging, Target};
use boostedprob::synthlab::ErrorMode;
use boostedprob::{Aggregation, ClusterFinderConfig, Method, MethodConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use crate::Failure;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "BOOSTEDPROB_WORKERS";

/// Parses a kebab-case enum name through its serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown value `{s}`"))
}

fn parse_cut_rule(s: &str) -> Result<CutRule, String> {
    kebab(s)
}

fn parse_averaging(s: &str) -> Result<Averaging, String> {
    kebab(s)
}

fn parse_error_mode(s: &str) -> Result<ErrorMode, String> {
    kebab(s)
}

#[derive(Debug, Parser)]
#[command(name = "boostedprob", version, about = "Unsupervised quality estimation with BoostedProb")]
pub struct Cli {
    /// JSON object whose keys mirror long flag names. Flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for record scoring. Output order never depends on it.
    #[arg(long, global = true, env = WORKERS_ENV, default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every record of a corpus.
    Score(ScoreArgs),
    /// Correlate sequence scores with gold scores, or token scores with OK/BAD labels.
    Eval(EvalArgs),
    /// Tune the OK/BAD threshold on a labeled corpus.
    Tune(TuneArgs),
    /// Jump-cut hyperparameter grid on a dev corpus.
    Sweep(SweepArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Check the 1/k cap and its removal on canonical ambiguous steps.
    Theory(TheoryArgs),
    /// Tune each cluster finder on dev and rank them on test.
    CompareFinders(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Score(_) => "score",
            Command::Eval(_) => "eval",
            Command::Tune(_) => "tune",
            Command::Sweep(_) => "sweep",
            Command::Synth(_) => "synth",
            Command::Theory(_) => "theory",
            Command::CompareFinders(_) => "compare-finders",
        }
    }
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Scoring methods, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "boostedprob")]
    pub method: Vec<Method>,

    /// Cluster finder used by boostedprob.
    #[arg(long, default_value = "jump-cut")]
    pub finder: FinderKind,

    /// Jump-cut relative drop threshold.
    #[arg(long, default_value_t = DEFAULT_X_PERCENT)]
    pub x: f64,

    /// Jump-cut absolute drop threshold, also the epsilon-cut threshold.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub eps: f64,

    /// Cluster size for top-k.
    #[arg(long)]
    pub k: Option<usize>,

    /// Mass for top-p, ratio for min-p.
    #[arg(long)]
    pub p: Option<f64>,

    /// Threshold for eta-cut.
    #[arg(long)]
    pub eta: Option<f64>,

    /// Which significant drop jump-cut cuts at.
    #[arg(long, value_parser = parse_cut_rule, default_value = "last")]
    pub cut_rule: CutRule,

    #[arg(long, default_value = "mean")]
    pub aggregation: Aggregation,

    /// Divide Monte-Carlo sample log-probabilities by their token counts.
    #[arg(long)]
    pub length_normalize: bool,

    /// Epsilon every input step must be complete for. Defaults to --eps.
    #[arg(long)]
    pub ingest_eps: Option<f64>,
}

impl MethodArgs {
    pub fn cluster(&self) -> Result<ClusterFinderConfig, Failure> {
        let need = |value: Option<f64>, flag: &str| {
            value.ok_or_else(|| Failure::usage(format!("--{flag} is required for --finder {}", self.finder)))
        };
        let config = match self.finder {
            FinderKind::JumpCut => ClusterFinderConfig::JumpCut {
                x_percent: self.x,
                epsilon: self.eps,
                rule: self.cut_rule,
            },
            FinderKind::TopK => ClusterFinderConfig::TopK {
                k: self.k.ok_or_else(|| Failure::usage("--k is required for --finder top-k"))?,
            },
            FinderKind::TopP => ClusterFinderConfig::TopP { p: need(self.p, "p")? },
            FinderKind::EpsilonCut => ClusterFinderConfig::EpsilonCut { epsilon: self.eps },
            FinderKind::EtaCut => ClusterFinderConfig::EtaCut { eta: need(self.eta, "eta")? },
            FinderKind::MinP => ClusterFinderConfig::MinP { p: need(self.p, "p")? },
        };
        config.validate().map_err(Failure::usage)?;
        Ok(config)
    }

    /// One validated configuration per requested method.
    pub fn configs(&self) -> Result<Vec<MethodConfig>, Failure> {
        if self.method.is_empty() {
            return Err(Failure::usage("empty method list"));
        }
        let cluster = self.cluster()?;
        self.method
            .iter()
            .map(|&method| {
                let config = MethodConfig {
                    method,
                    cluster,
                    aggregation: self.aggregation,
                    length_normalize: self.length_normalize,
                };
                config.validate().map_err(Failure::usage)?;
                Ok(config)
            })
            .collect()
    }

    pub fn ingest_epsilon(&self) -> f64 {
        self.ingest_eps.unwrap_or(self.eps)
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Input corpus (JSONL).
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,

    /// Per-record scores (JSONL).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Also write `id,method,sequence_score` as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,

    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpora to evaluate; each file is one group. `--test` is an alias.
    #[arg(long = "in", alias = "test", value_name = "FILE")]
    pub inputs: Vec<PathBuf>,

    /// Token-level MCC against OK/BAD labels instead of sequence Pearson.
    #[arg(long)]
    pub tokens: bool,

    /// Labeled corpus the token threshold is tuned on.
    #[arg(long, value_name = "FILE")]
    pub dev: Option<PathBuf>,

    /// Fixed token threshold; scores at or above it are OK.
    #[arg(long)]
    pub threshold: Option<f64>,

    #[arg(long, value_parser = parse_averaging, default_value = "micro")]
    pub averaging: Averaging,

    /// Metadata key naming each file's group; the file stem is used when absent.
    #[arg(long, default_value = "lang_pair")]
    pub group_key: String,

    /// Report as CSV. The table always goes to stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Labeled corpus.
    #[arg(long, alias = "in", value_name = "FILE")]
    pub dev: Option<PathBuf>,

    /// Chosen thresholds as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dev corpus.
    #[arg(long, alias = "in", value_name = "FILE")]
    pub dev: Option<PathBuf>,

    /// pearson-vs-gold (pearson) or mcc-vs-labels (mcc).
    #[arg(long, default_value = "pearson-vs-gold")]
    pub target: Target,

    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4,0.5,0.6")]
    pub grid_x: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_value = "0.005,0.01,0.1")]
    pub grid_eps: Vec<f64>,

    /// Epsilon every input step must be complete for. Defaults to the smallest grid epsilon.
    #[arg(long)]
    pub ingest_eps: Option<f64>,

    /// CSV destination; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Single correct token per competent step.
    Plain,
    /// Cluster sizes 2..=5, q in [0.85, 0.95], 80% competent steps.
    Ambiguous,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus destination (JSONL).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Full generator spec as JSON; overrides the preset.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "plain")]
    pub preset: Preset,

    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub competence: Option<f64>,

    #[arg(long, value_parser = parse_error_mode)]
    pub error_mode: Option<ErrorMode>,

    /// Monte-Carlo samples per sequence.
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,

    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95,0.99")]
    pub q: Vec<f64>,

    /// CSV destination. The table always goes to stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, value_name = "FILE")]
    pub dev: Option<PathBuf>,

    #[arg(long, value_name = "FILE")]
    pub test: Option<PathBuf>,

    /// Finders to compare, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "jump-cut,top-k,top-p,epsilon-cut,eta-cut,min-p"
    )]
    pub finders: Vec<String>,

    #[arg(long, default_value = "pearson-vs-gold")]
    pub target: Target,

    /// Epsilon every input step must be complete for.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub ingest_eps: f64,

    /// CSV destination. The table always goes to stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
