//! Step distributions, sequence records and the newline-delimited corpus format.
//!
//! A step stores only the sorted head of the model's output distribution plus a
//! summary of everything else (`tail_mass` spread over `tail_count` tokens).
//! The head must be *ε-complete*: either it covers the whole vocabulary or its
//! last entry is already at or below ε, so no drop larger than ε can hide in
//! the tail.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of `sum(head) + tail_mass` from 1.
pub const MASS_TOLERANCE: f64 = 1e-4;

/// One `(token_id, probability)` head entry, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u32, f64)", into = "(u32, f64)")]
pub struct TokenProb {
    pub token: u32,
    pub prob: f64,
}

impl TokenProb {
    pub fn new(token: u32, prob: f64) -> Self {
        Self { token, prob }
    }
}

impl From<(u32, f64)> for TokenProb {
    fn from((token, prob): (u32, f64)) -> Self {
        Self { token, prob }
    }
}

impl From<TokenProb> for (u32, f64) {
    fn from(tp: TokenProb) -> Self {
        (tp.token, tp.prob)
    }
}

/// The token that was finally emitted at a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chosen {
    /// Zero-based position in the head.
    Index(usize),
    /// The token fell outside the head; carries its own probability.
    Prob(f64),
}

/// Truncated, sorted output distribution of one generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub head: Vec<TokenProb>,
    pub tail_mass: f64,
    pub tail_count: u64,
    pub chosen: Chosen,
}

impl StepDistribution {
    /// Builds a step and rejects it if any structural invariant fails.
    /// ε-completeness is checked separately, see [`Self::is_epsilon_complete`].
    pub fn new(
        head: Vec<TokenProb>,
        tail_mass: f64,
        tail_count: u64,
        chosen: Chosen,
    ) -> Result<Self, Vec<Violation>> {
        let step = Self {
            head,
            tail_mass,
            tail_count,
            chosen,
        };
        let violations = validate_step(&step, None);
        if violations.is_empty() {
            Ok(step)
        } else {
            Err(violations)
        }
    }

    /// A one-hot step over a single token, chosen.
    pub fn one_hot(token: u32) -> Self {
        Self {
            head: vec![TokenProb::new(token, 1.0)],
            tail_mass: 0.0,
            tail_count: 0,
            chosen: Chosen::Index(0),
        }
    }

    pub fn head_probs(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.head.iter().map(|tp| tp.prob)
    }

    /// Probability of the emitted token.
    pub fn chosen_prob(&self) -> f64 {
        match self.chosen {
            Chosen::Index(i) => self.head[i].prob,
            Chosen::Prob(p) => p,
        }
    }

    /// Head position of the emitted token, `None` when it lies in the tail.
    pub fn chosen_index(&self) -> Option<usize> {
        match self.chosen {
            Chosen::Index(i) => Some(i),
            Chosen::Prob(_) => None,
        }
    }

    pub fn head_mass(&self) -> f64 {
        self.head_probs().sum()
    }

    /// Mean probability of a tail token, or `None` without a tail.
    pub fn tail_mean(&self) -> Option<f64> {
        (self.tail_count > 0).then(|| self.tail_mass / self.tail_count as f64)
    }

    pub fn is_epsilon_complete(&self, epsilon: f64) -> bool {
        self.tail_count == 0 || self.head.last().is_some_and(|tp| tp.prob <= epsilon)
    }
}

/// A broken step invariant. Violations are reported as data, not errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyHead,
    NonFinite { field: &'static str, value: f64 },
    NegativeProbability { position: usize, prob: f64 },
    NegativeTailMass { tail_mass: f64 },
    NotNonIncreasing { position: usize, prev: f64, next: f64 },
    MassOutOfTolerance { total: f64 },
    TailMassWithoutTail { tail_mass: f64 },
    ChosenIndexOutOfRange { index: usize, head_len: usize },
    ChosenOutsideInconsistent { prob: f64 },
    NotEpsilonComplete { last: f64, epsilon: f64, tail_count: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyHead => write!(f, "head is empty"),
            Violation::NonFinite { field, value } => write!(f, "{field} is not finite ({value})"),
            Violation::NegativeProbability { position, prob } => {
                write!(f, "negative probability {prob} at head position {position}")
            }
            Violation::NegativeTailMass { tail_mass } => {
                write!(f, "negative tail_mass {tail_mass}")
            }
            Violation::NotNonIncreasing {
                position,
                prev,
                next,
            } => write!(
                f,
                "head not non-increasing at position {position} ({prev} < {next})"
            ),
            Violation::MassOutOfTolerance { total } => {
                write!(f, "mass {total} outside tolerance {MASS_TOLERANCE}")
            }
            Violation::TailMassWithoutTail { tail_mass } => {
                write!(f, "tail_mass {tail_mass} with tail_count 0")
            }
            Violation::ChosenIndexOutOfRange { index, head_len } => {
                write!(f, "chosen index {index} outside head of length {head_len}")
            }
            Violation::ChosenOutsideInconsistent { prob } => write!(
                f,
                "chosen probability {prob} outside head is inconsistent with the tail"
            ),
            Violation::NotEpsilonComplete {
                last,
                epsilon,
                tail_count,
            } => write!(
                f,
                "head not epsilon-complete: last head probability {last} > epsilon {epsilon} with {tail_count} tail tokens"
            ),
        }
    }
}

/// Checks every step invariant. With `epsilon` set, ε-completeness is checked too.
pub fn validate_step(step: &StepDistribution, epsilon: Option<f64>) -> Vec<Violation> {
    let mut out = Vec::new();
    if step.head.is_empty() {
        out.push(Violation::EmptyHead);
    }
    for (position, tp) in step.head.iter().enumerate() {
        if !tp.prob.is_finite() {
            out.push(Violation::NonFinite {
                field: "head probability",
                value: tp.prob,
            });
        } else if tp.prob < 0.0 {
            out.push(Violation::NegativeProbability {
                position,
                prob: tp.prob,
            });
        }
    }
    if !step.tail_mass.is_finite() {
        out.push(Violation::NonFinite {
            field: "tail_mass",
            value: step.tail_mass,
        });
    } else if step.tail_mass < 0.0 {
        out.push(Violation::NegativeTailMass {
            tail_mass: step.tail_mass,
        });
    }
    if let Some(position) = step
        .head
        .windows(2)
        .position(|w| w[0].prob < w[1].prob)
    {
        out.push(Violation::NotNonIncreasing {
            position: position + 1,
            prev: step.head[position].prob,
            next: step.head[position + 1].prob,
        });
    }
    let total = step.head_mass() + step.tail_mass;
    if total.is_finite() && (total - 1.0).abs() > MASS_TOLERANCE {
        out.push(Violation::MassOutOfTolerance { total });
    }
    if step.tail_count == 0 && step.tail_mass > MASS_TOLERANCE {
        out.push(Violation::TailMassWithoutTail {
            tail_mass: step.tail_mass,
        });
    }
    match step.chosen {
        Chosen::Index(index) if index >= step.head.len() => {
            out.push(Violation::ChosenIndexOutOfRange {
                index,
                head_len: step.head.len(),
            });
        }
        Chosen::Index(_) => {}
        Chosen::Prob(prob) => {
            let last = step.head.last().map_or(1.0, |tp| tp.prob);
            let consistent = prob.is_finite()
                && prob >= 0.0
                && step.tail_count > 0
                && prob <= step.tail_mass + MASS_TOLERANCE
                && prob <= last;
            if !consistent {
                out.push(Violation::ChosenOutsideInconsistent { prob });
            }
        }
    }
    if let Some(epsilon) = epsilon {
        if !step.head.is_empty() && !step.is_epsilon_complete(epsilon) {
            out.push(Violation::NotEpsilonComplete {
                last: step.head[step.head.len() - 1].prob,
                epsilon,
                tail_count: step.tail_count,
            });
        }
    }
    out
}

/// Word-level quality label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "BAD")]
    Bad,
}

/// One generated (or force-decoded) output sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    #[serde(rename = "id")]
    pub sequence_id: String,
    pub steps: Vec<StepDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_score: Option<f64>,
    #[serde(rename = "labels", default, skip_serializing_if = "Option::is_none")]
    pub token_labels: Option<Vec<Label>>,
    #[serde(
        rename = "sample_logprobs",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub sampled_sequence_logprobs: Option<Vec<f64>>,
    /// Token counts of the sampled sequences, aligned with
    /// `sampled_sequence_logprobs`. Only needed for length normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_lengths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl SequenceRecord {
    pub fn new(sequence_id: impl Into<String>, steps: Vec<StepDistribution>) -> Self {
        Self {
            sequence_id: sequence_id.into(),
            steps,
            gold_score: None,
            token_labels: None,
            sampled_sequence_logprobs: None,
            sample_lengths: None,
            text: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub records: Vec<SequenceRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("read error at line {line}: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line} ({id}): record has no steps")]
    EmptySteps { line: usize, id: String },
    #[error("line {line} ({id}): step {step}: {}", join(violations))]
    InvalidStep {
        line: usize,
        id: String,
        step: usize,
        violations: Vec<Violation>,
    },
    #[error("line {line} ({id}): {labels} labels for {steps} steps")]
    LabelLengthMismatch {
        line: usize,
        id: String,
        labels: usize,
        steps: usize,
    },
    #[error("line {line}: duplicate sequence id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: metadata header must be the first record")]
    MisplacedMetadata { line: usize },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Io { line, .. }
            | ParseError::Malformed { line, .. }
            | ParseError::EmptySteps { line, .. }
            | ParseError::InvalidStep { line, .. }
            | ParseError::LabelLengthMismatch { line, .. }
            | ParseError::DuplicateId { line, .. }
            | ParseError::MisplacedMetadata { line } => *line,
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MetadataLine {
    metadata: BTreeMap<String, String>,
}

enum Line {
    Metadata(MetadataLine),
    Record(SequenceRecord),
}

/// Checks record-level invariants and every step against `epsilon`.
pub fn validate_record(
    record: &SequenceRecord,
    epsilon: f64,
    line: usize,
) -> Result<(), ParseError> {
    if record.steps.is_empty() {
        return Err(ParseError::EmptySteps {
            line,
            id: record.sequence_id.clone(),
        });
    }
    for (step_index, step) in record.steps.iter().enumerate() {
        let violations = validate_step(step, Some(epsilon));
        if !violations.is_empty() {
            return Err(ParseError::InvalidStep {
                line,
                id: record.sequence_id.clone(),
                step: step_index,
                violations,
            });
        }
    }
    if let Some(labels) = &record.token_labels {
        if labels.len() != record.steps.len() {
            return Err(ParseError::LabelLengthMismatch {
                line,
                id: record.sequence_id.clone(),
                labels: labels.len(),
                steps: record.steps.len(),
            });
        }
    }
    Ok(())
}

/// Reads a newline-delimited corpus and validates every record.
///
/// Blank lines are skipped. An optional first line of the form
/// `{"metadata": {...}}` fills [`Corpus::metadata`]. Line numbers in errors
/// are 1-based.
pub fn parse_corpus<R: BufRead>(source: R, epsilon: f64) -> Result<Corpus, ParseError> {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (index, line) in source.lines().enumerate() {
        let line_no = index + 1;
        let text = line.map_err(|source| ParseError::Io {
            line: line_no,
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed = match serde_json::from_str::<SequenceRecord>(&text) {
            Ok(record) => Line::Record(record),
            Err(source) => serde_json::from_str::<MetadataLine>(&text)
                .map(Line::Metadata)
                .map_err(|_| ParseError::Malformed {
                    line: line_no,
                    source,
                })?,
        };
        match parsed {
            Line::Metadata(meta) => {
                if !corpus.records.is_empty() || !corpus.metadata.is_empty() {
                    return Err(ParseError::MisplacedMetadata { line: line_no });
                }
                corpus.metadata = meta.metadata;
            }
            Line::Record(record) => {
                validate_record(&record, epsilon, line_no)?;
                if !seen.insert(record.sequence_id.clone()) {
                    return Err(ParseError::DuplicateId {
                        line: line_no,
                        id: record.sequence_id,
                    });
                }
                corpus.records.push(record);
            }
        }
    }
    Ok(corpus)
}

/// Writes a corpus in the format read by [`parse_corpus`].
pub fn write_corpus<W: Write>(corpus: &Corpus, out: &mut W) -> std::io::Result<()> {
    if !corpus.metadata.is_empty() {
        let header = MetadataLine {
            metadata: corpus.metadata.clone(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
    }
    for record in &corpus.records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
