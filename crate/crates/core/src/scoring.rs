//! Token- and sequence-level quality scores.
//!
//! All scores are oriented higher-is-better. Entropy-based methods report the
//! negated entropy.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{find_cluster, ClusterError, ClusterFinderConfig, DominantCluster};
use crate::prob::{Corpus, SequenceRecord, StepDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
    Min,
    /// Fraction of steps whose chosen token is dominant.
    NrDominant,
}

impl Aggregation {
    pub const ALL: [Aggregation; 4] = [
        Aggregation::Mean,
        Aggregation::Median,
        Aggregation::Min,
        Aggregation::NrDominant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Median => "median",
            Aggregation::Min => "min",
            Aggregation::NrDominant => "nr-dominant",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Aggregation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown aggregation `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(rename = "boostedprob")]
    BoostedProb,
    RawProbability,
    Entropy,
    MonteCarloEntropy,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::BoostedProb,
        Method::RawProbability,
        Method::Entropy,
        Method::MonteCarloEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BoostedProb => "boostedprob",
            Method::RawProbability => "raw-probability",
            Method::Entropy => "entropy",
            Method::MonteCarloEntropy => "monte-carlo-entropy",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// Only consulted by BoostedProb.
    #[serde(default)]
    pub cluster: ClusterFinderConfig,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Monte-Carlo entropy only: divide each sample's log-probability by its
    /// token count.
    #[serde(default)]
    pub length_normalize: bool,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            cluster: ClusterFinderConfig::default(),
            aggregation: Aggregation::Mean,
            length_normalize: false,
        }
    }

    pub fn boosted(cluster: ClusterFinderConfig) -> Self {
        Self {
            cluster,
            ..Self::new(Method::BoostedProb)
        }
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.aggregation == Aggregation::NrDominant && self.method != Method::BoostedProb {
            return Err(ScoringError::InvalidConfig(format!(
                "nr-dominant aggregation requires boostedprob, not {}",
                self.method
            )));
        }
        if self.method == Method::BoostedProb {
            self.cluster.validate()?;
        }
        Ok(())
    }

    /// Label used in score and report files.
    pub fn label(&self) -> String {
        let mut label = match self.method {
            Method::BoostedProb => format!("boostedprob/{}", self.cluster),
            other => other.name().to_string(),
        };
        if self.aggregation != Aggregation::Mean {
            label.push_str(&format!("/{}", self.aggregation));
        }
        if self.method == Method::MonteCarloEntropy && self.length_normalize {
            label.push_str("/length-normalized");
        }
        label
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("{0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("cannot aggregate an empty score list")]
    Empty,
    #[error("nr-dominant aggregation needs dominant flags aligned with the scores")]
    MissingDominantFlags,
    #[error("record has no sampled sequence log-probabilities")]
    MissingSamples,
    #[error("length normalization needs sample_lengths aligned with sample_logprobs")]
    MissingSampleLengths,
}

/// A per-record scoring failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{sequence_id}: {source}")]
pub struct RecordError {
    pub sequence_id: String,
    #[source]
    pub source: ScoringError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEResult {
    pub id: String,
    pub method: String,
    /// One score per step. Empty for sequence-only methods (Monte-Carlo entropy).
    pub token_scores: Vec<f64>,
    pub sequence_score: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

/// BoostedProb score of the chosen token: the cluster mass when the token is
/// dominant, otherwise its own probability.
pub fn token_boostedprob(step: &StepDistribution, cluster: &DominantCluster) -> f64 {
    match step.chosen_index() {
        Some(index) if cluster.contains(index) => cluster.mass,
        _ => step.chosen_prob(),
    }
}

pub fn token_raw(step: &StepDistribution) -> f64 {
    step.chosen_prob()
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats. The tail is treated as `tail_count` tokens sharing
/// `tail_mass` uniformly.
pub fn step_entropy(step: &StepDistribution) -> f64 {
    let head: f64 = step.head_probs().map(plogp).sum();
    let tail = match step.tail_mean() {
        Some(mean) if step.tail_mass > 0.0 => step.tail_mass * mean.ln(),
        _ => 0.0,
    };
    (-(head + tail)).max(0.0)
}

fn median(scores: &[f64]) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

/// Reduces token scores to one sequence score.
pub fn sequence_score(
    token_scores: &[f64],
    aggregation: Aggregation,
    dominant_flags: Option<&[bool]>,
) -> Result<f64, ScoringError> {
    if token_scores.is_empty() {
        return Err(ScoringError::Empty);
    }
    let n = token_scores.len() as f64;
    Ok(match aggregation {
        Aggregation::Mean => token_scores.iter().sum::<f64>() / n,
        Aggregation::Median => median(token_scores),
        Aggregation::Min => token_scores.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::NrDominant => {
            let flags = dominant_flags
                .filter(|flags| flags.len() == token_scores.len())
                .ok_or(ScoringError::MissingDominantFlags)?;
            flags.iter().filter(|&&dominant| dominant).count() as f64 / n
        }
    })
}

/// Negated Monte-Carlo sequence entropy estimate `-(1/M) Σ log p(sample)`.
pub fn monte_carlo_entropy(
    record: &SequenceRecord,
    length_normalize: bool,
) -> Result<f64, ScoringError> {
    let logprobs = record
        .sampled_sequence_logprobs
        .as_deref()
        .filter(|lp| !lp.is_empty())
        .ok_or(ScoringError::MissingSamples)?;
    let total: f64 = if length_normalize {
        let lengths = record
            .sample_lengths
            .as_deref()
            .filter(|lengths| lengths.len() == logprobs.len() && lengths.iter().all(|&l| l > 0))
            .ok_or(ScoringError::MissingSampleLengths)?;
        logprobs
            .iter()
            .zip(lengths)
            .map(|(lp, &len)| lp / len as f64)
            .sum()
    } else {
        logprobs.iter().sum()
    };
    let estimate = -total / logprobs.len() as f64;
    Ok(-estimate)
}

/// Scores one record.
pub fn score_record(record: &SequenceRecord, config: &MethodConfig) -> Result<QEResult, ScoringError> {
    let (token_scores, sequence) = match config.method {
        Method::BoostedProb => {
            let mut scores = Vec::with_capacity(record.steps.len());
            let mut flags = Vec::with_capacity(record.steps.len());
            for step in &record.steps {
                let cluster = find_cluster(step, &config.cluster)?;
                scores.push(token_boostedprob(step, &cluster));
                flags.push(step.chosen_index().is_some_and(|i| cluster.contains(i)));
            }
            let sequence = sequence_score(&scores, config.aggregation, Some(&flags))?;
            (scores, sequence)
        }
        Method::RawProbability => {
            let scores: Vec<f64> = record.steps.iter().map(token_raw).collect();
            let sequence = sequence_score(&scores, config.aggregation, None)?;
            (scores, sequence)
        }
        Method::Entropy => {
            let scores: Vec<f64> = record.steps.iter().map(|s| -step_entropy(s)).collect();
            let sequence = sequence_score(&scores, config.aggregation, None)?;
            (scores, sequence)
        }
        Method::MonteCarloEntropy => (
            Vec::new(),
            monte_carlo_entropy(record, config.length_normalize)?,
        ),
    };
    Ok(QEResult {
        id: record.sequence_id.clone(),
        method: config.label(),
        token_scores,
        sequence_score: sequence,
        aggregation: config.aggregation,
    })
}

/// Scores every record in input order. A failing record yields an error
/// entry and does not stop the others. `workers` of 0 or 1 runs on the
/// calling thread.
pub fn score_corpus(
    corpus: &Corpus,
    config: &MethodConfig,
    workers: usize,
) -> Result<Vec<Result<QEResult, RecordError>>, ScoringError> {
    config.validate()?;
    let score = |record: &SequenceRecord| {
        score_record(record, config).map_err(|source| RecordError {
            sequence_id: record.sequence_id.clone(),
            source,
        })
    };
    if workers <= 1 {
        return Ok(corpus.records.iter().map(score).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ScoringError::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| corpus.records.par_iter().map(score).collect()))
}

/// Like [`score_corpus`] but fails on the first record error.
pub fn score_corpus_strict(
    corpus: &Corpus,
    config: &MethodConfig,
    workers: usize,
) -> Result<Vec<QEResult>, RecordError> {
    let results = score_corpus(corpus, config, workers).map_err(|source| RecordError {
        sequence_id: String::new(),
        source,
    })?;
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::jump_cut;
    use crate::prob::{Chosen, TokenProb};

    fn step(probs: &[f64], tail_mass: f64, tail_count: u64, chosen: Chosen) -> StepDistribution {
        StepDistribution {
            head: probs
                .iter()
                .enumerate()
                .map(|(i, &p)| TokenProb::new(i as u32, p))
                .collect(),
            tail_mass,
            tail_count,
            chosen,
        }
    }

    fn ambiguous_step(chosen: Chosen) -> StepDistribution {
        step(&[0.48, 0.47, 0.004, 0.004], 0.042, 20, chosen)
    }

    #[test]
    fn boostedprob_examples() {
        let one_hot = StepDistribution::one_hot(1);
        let c = jump_cut(&one_hot, 0.3, 0.005).unwrap();
        assert_eq!(token_boostedprob(&one_hot, &c), 1.0);

        let s = ambiguous_step(Chosen::Index(1));
        let c = jump_cut(&s, 0.3, 0.005).unwrap();
        assert_eq!(c.size, 2);
        assert!((token_boostedprob(&s, &c) - 0.95).abs() < 1e-12);
        assert_eq!(token_raw(&s), 0.47);

        let s = ambiguous_step(Chosen::Prob(0.002));
        let c = jump_cut(&s, 0.3, 0.005).unwrap();
        assert_eq!(token_boostedprob(&s, &c), 0.002);
        assert_eq!(token_raw(&s), 0.002);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(step_entropy(&StepDistribution::one_hot(0)), 0.0);
        let uniform = step(&[0.25; 4], 0.0, 0, Chosen::Index(0));
        assert!((step_entropy(&uniform) - 4f64.ln()).abs() < 1e-12);
        let half = step(&[0.5, 0.5], 0.0, 0, Chosen::Index(0));
        assert!((step_entropy(&half) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_uniform_tail_matches_enumeration() {
        // Head 0.5, 0.004 and 124 tail tokens of 0.004 each.
        let s = step(&[0.5, 0.004], 0.496, 124, Chosen::Index(0));
        let expected = -(0.5 * 0.5f64.ln() + 125.0 * 0.004 * 0.004f64.ln());
        assert!((step_entropy(&s) - expected).abs() < 1e-10);
    }

    #[test]
    fn aggregation_examples() {
        let scores = [0.9, 0.5, 0.7];
        assert!((sequence_score(&scores, Aggregation::Mean, None).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(sequence_score(&scores, Aggregation::Min, None).unwrap(), 0.5);
        assert_eq!(sequence_score(&scores, Aggregation::Median, None).unwrap(), 0.7);
        assert_eq!(sequence_score(&[0.1, 0.4, 0.2, 0.9], Aggregation::Median, None).unwrap(), 0.30000000000000004);
        let flags = [true, false, true];
        assert!(
            (sequence_score(&scores, Aggregation::NrDominant, Some(&flags)).unwrap() - 2.0 / 3.0)
                .abs()
                < 1e-12
        );
        assert_eq!(
            sequence_score(&scores, Aggregation::NrDominant, None),
            Err(ScoringError::MissingDominantFlags)
        );
        assert_eq!(sequence_score(&[], Aggregation::Mean, None), Err(ScoringError::Empty));
    }

    fn sampled(logprobs: &[f64]) -> SequenceRecord {
        let mut r = SequenceRecord::new("mc", vec![StepDistribution::one_hot(0)]);
        r.sampled_sequence_logprobs = Some(logprobs.to_vec());
        r
    }

    #[test]
    fn monte_carlo_examples() {
        assert_eq!(monte_carlo_entropy(&sampled(&[-1.0]), false).unwrap(), -1.0);
        assert_eq!(monte_carlo_entropy(&sampled(&[-1.0, -3.0]), false).unwrap(), -2.0);
        assert_eq!(monte_carlo_entropy(&sampled(&[0.0, 0.0]), false).unwrap(), 0.0);
        assert_eq!(
            monte_carlo_entropy(&sampled(&[]), false),
            Err(ScoringError::MissingSamples)
        );
        let mut r = sampled(&[-2.0, -6.0]);
        assert_eq!(
            monte_carlo_entropy(&r, true),
            Err(ScoringError::MissingSampleLengths)
        );
        r.sample_lengths = Some(vec![2, 3]);
        assert_eq!(monte_carlo_entropy(&r, true).unwrap(), -1.5);
    }

    #[test]
    fn score_corpus_examples() {
        let mut corpus = Corpus::default();
        for id in ["a", "b"] {
            corpus.records.push(SequenceRecord::new(
                id,
                vec![StepDistribution::one_hot(1), StepDistribution::one_hot(2)],
            ));
        }
        corpus.records.push(SequenceRecord::new(
            "mixed",
            vec![ambiguous_step(Chosen::Index(1)), ambiguous_step(Chosen::Prob(0.002))],
        ));
        let boosted = score_corpus_strict(&corpus, &MethodConfig::new(Method::BoostedProb), 1).unwrap();
        assert_eq!(boosted[0].sequence_score, 1.0);
        assert_eq!(boosted[1].sequence_score, 1.0);
        assert!((boosted[2].sequence_score - 0.476).abs() < 1e-12);

        let raw = score_corpus_strict(&corpus, &MethodConfig::new(Method::RawProbability), 1).unwrap();
        assert_eq!(raw[2].token_scores, vec![0.47, 0.002]);
        assert!((raw[2].sequence_score - 0.236).abs() < 1e-12);
    }

    #[test]
    fn score_corpus_collects_record_errors() {
        let mut corpus = Corpus::default();
        corpus.records.push(sampled(&[-1.0]));
        corpus
            .records
            .push(SequenceRecord::new("no-samples", vec![StepDistribution::one_hot(0)]));
        corpus.records.push({
            let mut r = sampled(&[-3.0]);
            r.sequence_id = "last".into();
            r
        });
        let results = score_corpus(&corpus, &MethodConfig::new(Method::MonteCarloEntropy), 1).unwrap();
        assert_eq!(results.len(), 3);
        assert!(results[0].is_ok());
        let err = results[1].as_ref().unwrap_err();
        assert_eq!(err.sequence_id, "no-samples");
        assert_eq!(err.source, ScoringError::MissingSamples);
        assert_eq!(results[2].as_ref().unwrap().sequence_score, -3.0);
    }

    #[test]
    fn nr_dominant_requires_boostedprob() {
        let config = MethodConfig::new(Method::RawProbability).with_aggregation(Aggregation::NrDominant);
        assert!(config.validate().is_err());
        let config = MethodConfig::new(Method::BoostedProb).with_aggregation(Aggregation::NrDominant);
        let record = SequenceRecord::new(
            "r",
            vec![ambiguous_step(Chosen::Index(1)), ambiguous_step(Chosen::Index(3))],
        );
        assert_eq!(score_record(&record, &config).unwrap().sequence_score, 0.5);
    }

    #[test]
    fn labels() {
        assert_eq!(
            MethodConfig::new(Method::BoostedProb).label(),
            "boostedprob/jump-cut(x=0.3,eps=0.005)"
        );
        assert_eq!(
            MethodConfig::new(Method::Entropy).with_aggregation(Aggregation::Min).label(),
            "entropy/min"
        );
    }
}
