//! Synthetic corpora with controlled ambiguity and known quality.
//!
//! Each step is either *competent* (mass `q` shared uniformly by `k` correct
//! tokens) or *incompetent* (mass on wrong tokens). Leftover mass is spread
//! uniformly over the rest of the vocabulary, every such token staying below
//! `epsilon / 2`. The emitted token is sampled from the step distribution and
//! labeled OK iff it is one of the correct tokens; a sequence's gold score is
//! its OK fraction.
//!
//! Randomness comes from a single `ChaCha8Rng` seeded with `SynthSpec::seed`,
//! so corpora are reproducible across platforms.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{jump_cut, DEFAULT_EPSILON, DEFAULT_X_PERCENT};
use crate::prob::{Chosen, Corpus, Label, SequenceRecord, StepDistribution, TokenProb};
use crate::scoring::{token_boostedprob, token_raw};

/// Inclusive range `[lo, hi]`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(T, T)", into = "(T, T)")]
pub struct Span<T: Copy> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy> Span<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn fixed(v: T) -> Self {
        Self { lo: v, hi: v }
    }
}

impl<T: Copy> From<(T, T)> for Span<T> {
    fn from((lo, hi): (T, T)) -> Self {
        Self { lo, hi }
    }
}

impl<T: Copy> From<Span<T>> for (T, T) {
    fn from(s: Span<T>) -> Self {
        (s.lo, s.hi)
    }
}

/// How incompetent steps distribute their mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    /// One wrong token takes `error_mass`.
    #[default]
    Overconfident,
    /// Mass decays geometrically over many wrong tokens with no significant drop.
    Uncertain,
    /// Each incompetent step picks one of the two modes with equal odds.
    Mixed,
}

/// Number of wrong tokens sharing mass in an uncertain step.
const DIFFUSE_TOKENS: usize = 40;
/// Ratio between consecutive probabilities of an uncertain step.
const DIFFUSE_RATIO: f64 = 0.85;
/// Mass left for the residue in an uncertain step.
const DIFFUSE_RESIDUE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_sequences: usize,
    pub steps_per_seq: Span<usize>,
    /// Number of correct tokens at a competent step.
    pub k_correct: Span<usize>,
    /// Mass `q` shared by the correct tokens.
    pub correct_mass: Span<f64>,
    /// Probability that a step is competent.
    pub competence: f64,
    #[serde(default)]
    pub error_mode: ErrorMode,
    /// Mass of the single wrong token in overconfident error steps.
    pub error_mass: Span<f64>,
    /// Residue tokens stay below `epsilon / 2`.
    pub epsilon: f64,
    pub vocab_size: u32,
    /// Monte-Carlo samples per sequence; 0 leaves `sample_logprobs` unset.
    #[serde(default)]
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_sequences: 100,
            steps_per_seq: Span::new(5, 20),
            k_correct: Span::new(1, 1),
            correct_mass: Span::fixed(1.0),
            competence: 1.0,
            error_mode: ErrorMode::Overconfident,
            error_mass: Span::new(0.3, 0.7),
            epsilon: DEFAULT_EPSILON,
            vocab_size: 32_000,
            mc_samples: 0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// The mixed ambiguous corpus: variable cluster sizes 2..=5, `q` in
    /// [0.85, 0.95], 80% competent steps, overconfident errors.
    pub fn ambiguous(n_sequences: usize, seed: u64) -> Self {
        Self {
            n_sequences,
            k_correct: Span::new(2, 5),
            correct_mass: Span::new(0.85, 0.95),
            competence: 0.8,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.n_sequences == 0 {
            return fail("n_sequences must be positive".into());
        }
        if self.steps_per_seq.lo == 0 || self.steps_per_seq.lo > self.steps_per_seq.hi {
            return fail(format!("bad steps_per_seq {:?}", self.steps_per_seq));
        }
        if self.k_correct.lo == 0 || self.k_correct.lo > self.k_correct.hi {
            return fail(format!("bad k_correct {:?}", self.k_correct));
        }
        let q = self.correct_mass;
        if !(q.lo > 0.0 && q.lo <= q.hi && q.hi <= 1.0) {
            return fail(format!("correct_mass must lie in (0, 1], got {q:?}"));
        }
        let w = self.error_mass;
        if !(w.lo > 0.0 && w.lo <= w.hi && w.hi <= 1.0) {
            return fail(format!("error_mass must lie in (0, 1], got {w:?}"));
        }
        if !(0.0..=1.0).contains(&self.competence) {
            return fail(format!("competence must lie in [0, 1], got {}", self.competence));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        let min_vocab = self.k_correct.hi.max(DIFFUSE_TOKENS) + 1;
        if (self.vocab_size as usize) <= min_vocab {
            return fail(format!("vocab_size must exceed {min_vocab}"));
        }
        // The largest residue share must stay below epsilon / 2.
        let residue_tokens = self.vocab_size as usize - min_vocab;
        let worst_residue = (1.0 - q.lo).max(1.0 - w.lo).max(DIFFUSE_RESIDUE);
        if worst_residue / residue_tokens as f64 >= self.epsilon / 2.0 {
            return fail(format!(
                "vocab_size {} too small to keep residue tokens below epsilon/2",
                self.vocab_size
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
}

/// A step under construction: explicit tokens (sorted by probability, then
/// id) plus uniform residue over every other vocabulary token.
struct Layout {
    explicit: Vec<(u32, f64)>,
    residue_mass: f64,
    residue_count: u64,
    correct: Vec<u32>,
}

impl Layout {
    fn new(mut explicit: Vec<(u32, f64)>, vocab_size: u32, correct: Vec<u32>) -> Self {
        explicit.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let explicit_mass: f64 = explicit.iter().map(|e| e.1).sum();
        let residue_mass = (1.0 - explicit_mass).max(0.0);
        let residue_count = if residue_mass > 0.0 {
            u64::from(vocab_size) - explicit.len() as u64
        } else {
            0
        };
        Self {
            explicit,
            residue_mass,
            residue_count,
            correct,
        }
    }

    fn residue_prob(&self) -> f64 {
        if self.residue_count == 0 {
            0.0
        } else {
            self.residue_mass / self.residue_count as f64
        }
    }

    /// The `j`-th smallest token id not listed explicitly.
    fn residue_token(&self, j: u64) -> u32 {
        let mut taken: Vec<u32> = self.explicit.iter().map(|e| e.0).collect();
        taken.sort_unstable();
        let mut candidate = j as u32;
        for &t in &taken {
            if t <= candidate {
                candidate += 1;
            } else {
                break;
            }
        }
        candidate
    }

    fn is_correct(&self, token: u32) -> bool {
        self.correct.contains(&token)
    }

    /// Draws a token; returns its id and how it appears in the step.
    fn sample(&self, rng: &mut ChaCha8Rng) -> (u32, Chosen, f64) {
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        for (i, &(token, p)) in self.explicit.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return (token, Chosen::Index(i), p);
            }
        }
        if self.residue_count == 0 {
            // Rounding left u above the explicit mass; take the last entry.
            let i = self.explicit.len() - 1;
            return (self.explicit[i].0, Chosen::Index(i), self.explicit[i].1);
        }
        let j = rng.gen_range(0..self.residue_count);
        let token = self.residue_token(j);
        let r = self.residue_prob();
        let chosen = if j == 0 {
            Chosen::Index(self.explicit.len())
        } else {
            Chosen::Prob(r)
        };
        (token, chosen, r)
    }

    fn into_step(self, chosen: Chosen) -> StepDistribution {
        let r = self.residue_prob();
        let mut head: Vec<TokenProb> = self
            .explicit
            .iter()
            .map(|&(t, p)| TokenProb::new(t, p))
            .collect();
        let (tail_mass, tail_count) = if self.residue_count > 0 {
            head.push(TokenProb::new(self.residue_token(0), r));
            let tail_count = self.residue_count - 1;
            (r * tail_count as f64, tail_count)
        } else {
            (0.0, 0)
        };
        StepDistribution {
            head,
            tail_mass,
            tail_count,
            chosen,
        }
    }
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab_size: u32, n: usize) -> Vec<u32> {
    index::sample(rng, vocab_size as usize, n)
        .into_iter()
        .map(|i| i as u32)
        .collect()
}

fn competent_layout(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Layout {
    let k = rng.gen_range(spec.k_correct.lo..=spec.k_correct.hi);
    let q = rng.gen_range(spec.correct_mass.lo..=spec.correct_mass.hi);
    let correct = random_tokens(rng, spec.vocab_size, k);
    let share = q / k as f64;
    let explicit = correct.iter().map(|&t| (t, share)).collect();
    Layout::new(explicit, spec.vocab_size, correct)
}

fn incompetent_layout(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Layout {
    let mode = match spec.error_mode {
        ErrorMode::Mixed if rng.gen_bool(0.5) => ErrorMode::Overconfident,
        ErrorMode::Mixed => ErrorMode::Uncertain,
        other => other,
    };
    let k = rng.gen_range(spec.k_correct.lo..=spec.k_correct.hi);
    match mode {
        ErrorMode::Overconfident => {
            let tokens = random_tokens(rng, spec.vocab_size, k + 1);
            let w = rng.gen_range(spec.error_mass.lo..=spec.error_mass.hi);
            Layout::new(vec![(tokens[0], w)], spec.vocab_size, tokens[1..].to_vec())
        }
        _ => {
            let tokens = random_tokens(rng, spec.vocab_size, DIFFUSE_TOKENS + k);
            let norm: f64 = (0..DIFFUSE_TOKENS).map(|i| DIFFUSE_RATIO.powi(i as i32)).sum();
            let scale = (1.0 - DIFFUSE_RESIDUE) / norm;
            let explicit = tokens[..DIFFUSE_TOKENS]
                .iter()
                .enumerate()
                .map(|(i, &t)| (t, scale * DIFFUSE_RATIO.powi(i as i32)))
                .collect();
            Layout::new(explicit, spec.vocab_size, tokens[DIFFUSE_TOKENS..].to_vec())
        }
    }
}

/// Generates a labeled corpus. Deterministic for a given spec.
pub fn generate(spec: &SynthSpec) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_sequences.to_string().len();
    let mut records = Vec::with_capacity(spec.n_sequences);
    for n in 0..spec.n_sequences {
        let len = rng.gen_range(spec.steps_per_seq.lo..=spec.steps_per_seq.hi);
        let mut layouts = Vec::with_capacity(len);
        let mut steps = Vec::with_capacity(len);
        let mut labels = Vec::with_capacity(len);
        for _ in 0..len {
            let layout = if rng.gen_bool(spec.competence) {
                competent_layout(&mut rng, spec)
            } else {
                incompetent_layout(&mut rng, spec)
            };
            let (token, chosen, _) = layout.sample(&mut rng);
            labels.push(if layout.is_correct(token) {
                Label::Ok
            } else {
                Label::Bad
            });
            layouts.push(layout);
            steps.push(chosen);
        }
        let mut logprobs = Vec::with_capacity(spec.mc_samples);
        for _ in 0..spec.mc_samples {
            logprobs.push(
                layouts
                    .iter()
                    .map(|layout| layout.sample(&mut rng).2.ln())
                    .sum::<f64>(),
            );
        }
        let ok = labels.iter().filter(|&&l| l == Label::Ok).count();
        let mut record = SequenceRecord::new(
            format!("synth-{n:0width$}"),
            layouts
                .into_iter()
                .zip(steps)
                .map(|(layout, chosen)| layout.into_step(chosen))
                .collect(),
        );
        record.gold_score = Some(ok as f64 / len as f64);
        record.token_labels = Some(labels);
        if spec.mc_samples > 0 {
            record.sampled_sequence_logprobs = Some(logprobs);
            record.sample_lengths = Some(vec![len; spec.mc_samples]);
        }
        records.push(record);
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("source".to_string(), "synthlab".to_string());
    metadata.insert("seed".to_string(), spec.seed.to_string());
    Ok(Corpus { records, metadata })
}

/// The canonical ambiguous step: `k` correct tokens share `q` uniformly and
/// the remaining mass is spread over tokens below `epsilon / 2`.
pub fn canonical_step(k: usize, q: f64, epsilon: f64, chosen: usize) -> StepDistribution {
    let residue = 1.0 - q;
    let residue_tokens = if residue > 0.0 {
        ((4.0 * residue / epsilon).ceil() as u32).max(2)
    } else {
        0
    };
    let vocab = k as u32 + residue_tokens;
    let layout = Layout::new(
        (0..k as u32).map(|t| (t, q / k as f64)).collect(),
        vocab,
        (0..k as u32).collect(),
    );
    layout.into_step(Chosen::Index(chosen))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCell {
    pub k: usize,
    pub q: f64,
    /// Largest raw probability over the correct tokens.
    pub raw: f64,
    /// Smallest BoostedProb score over the correct tokens.
    pub boosted: f64,
    pub cluster_size: usize,
    pub pass: bool,
}

const THEORY_TOLERANCE: f64 = 1e-12;

/// Checks the `1/k` cap on correct-token probability and its removal by
/// BoostedProb for every `k` in `1..=k_max` and every `q`.
pub fn theory_check(k_max: usize, q_list: &[f64]) -> Vec<TheoryCell> {
    let mut cells = Vec::new();
    for k in 1..=k_max {
        for &q in q_list {
            let mut raw_max: f64 = 0.0;
            let mut boosted_min = f64::INFINITY;
            let mut pass = true;
            let mut cluster_size = 0;
            for chosen in 0..k {
                let step = canonical_step(k, q, DEFAULT_EPSILON, chosen);
                let raw = token_raw(&step);
                raw_max = raw_max.max(raw);
                pass &= (raw - q / k as f64).abs() <= THEORY_TOLERANCE;
                pass &= raw <= 1.0 / k as f64 + THEORY_TOLERANCE;
                match jump_cut(&step, DEFAULT_X_PERCENT, DEFAULT_EPSILON) {
                    Ok(cluster) => {
                        cluster_size = cluster.size;
                        let boosted = token_boostedprob(&step, &cluster);
                        boosted_min = boosted_min.min(boosted);
                        pass &= cluster.size == k;
                        pass &= (boosted - q).abs() <= THEORY_TOLERANCE;
                    }
                    Err(_) => pass = false,
                }
            }
            cells.push(TheoryCell {
                k,
                q,
                raw: raw_max,
                boosted: boosted_min,
                cluster_size,
                pass,
            });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{validate_record, write_corpus};

    #[test]
    fn asr_like_regime_is_one_hot() {
        let spec = SynthSpec {
            n_sequences: 20,
            ..SynthSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        for record in &corpus.records {
            assert_eq!(record.gold_score, Some(1.0));
            assert!(record.token_labels.as_ref().unwrap().iter().all(|&l| l == Label::Ok));
            for step in &record.steps {
                assert_eq!(step.head.len(), 1);
                assert_eq!(step.head[0].prob, 1.0);
                assert_eq!(step.tail_count, 0);
            }
        }
    }

    #[test]
    fn three_way_ambiguity_caps_raw_probability() {
        let spec = SynthSpec {
            n_sequences: 30,
            k_correct: Span::fixed(3),
            correct_mass: Span::fixed(0.9),
            ..SynthSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        for record in &corpus.records {
            for step in &record.steps {
                assert!((step.head[0].prob - 0.3).abs() < 1e-15);
                let cluster = jump_cut(step, 0.3, 0.005).unwrap();
                assert_eq!(cluster.size, 3);
                assert!((cluster.mass - 0.9).abs() < 1e-12);
                assert!(token_raw(step) <= 1.0 / 3.0 + 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            mc_samples: 3,
            error_mode: ErrorMode::Mixed,
            ..SynthSpec::ambiguous(50, 7)
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_corpus(&generate(&spec).unwrap(), &mut a).unwrap();
        write_corpus(&generate(&spec).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let other = SynthSpec { seed: 8, ..spec };
        let mut c = Vec::new();
        write_corpus(&generate(&other).unwrap(), &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_records_are_valid() {
        for mode in [ErrorMode::Overconfident, ErrorMode::Uncertain, ErrorMode::Mixed] {
            let spec = SynthSpec {
                error_mode: mode,
                competence: 0.5,
                mc_samples: 2,
                ..SynthSpec::ambiguous(40, 3)
            };
            let corpus = generate(&spec).unwrap();
            for (i, record) in corpus.records.iter().enumerate() {
                validate_record(record, spec.epsilon, i + 1).unwrap();
                let gold = record.gold_score.unwrap();
                assert!((0.0..=1.0).contains(&gold));
            }
        }
    }

    #[test]
    fn residue_tokens_skip_explicit_ids() {
        let layout = Layout::new(vec![(0, 0.5), (2, 0.3)], 10, vec![0]);
        assert_eq!(layout.residue_token(0), 1);
        assert_eq!(layout.residue_token(1), 3);
        assert_eq!(layout.residue_token(7), 9);
    }

    #[test]
    fn uncertain_steps_have_no_significant_drop() {
        let spec = SynthSpec {
            competence: 0.0,
            error_mode: ErrorMode::Uncertain,
            ..SynthSpec::ambiguous(10, 1)
        };
        for record in &generate(&spec).unwrap().records {
            for step in &record.steps {
                assert_eq!(jump_cut(step, 0.2, 0.005).unwrap().size, 1);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec::default().validate().is_ok());
        let bad = SynthSpec {
            k_correct: Span::new(3, 2),
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            correct_mass: Span::new(0.0, 0.5),
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            vocab_size: 100,
            correct_mass: Span::fixed(0.5),
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn theory_examples() {
        let cells = theory_check(10, &[0.9, 0.95]);
        let cell = |k, q| cells.iter().find(|c| c.k == k && c.q == q).unwrap();
        let two = cell(2, 0.95);
        assert!(two.pass);
        assert!((two.raw - 0.475).abs() < 1e-12);
        assert!((two.boosted - 0.95).abs() < 1e-12);
        let ten = cell(10, 0.9);
        assert!(ten.pass);
        assert!((ten.raw - 0.09).abs() < 1e-12);
        assert!((ten.boosted - 0.9).abs() < 1e-12);
        let one = &theory_check(1, &[1.0])[0];
        assert!(one.pass);
        assert_eq!((one.raw, one.boosted), (1.0, 1.0));
    }
}
