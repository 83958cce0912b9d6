//! Test-only generators and oracles. Nothing here calls into the code paths it
//! is used to check.

#![allow(dead_code)]

use boostedprob::prob::{Chosen, Label, StepDistribution, TokenProb};
use rand::seq::SliceRandom;
use rand::Rng;

/// A random full-vocabulary distribution, unsorted, with structure that
/// exercises clusters, ties, smooth decay and long sub-ε tails. The last
/// vocabulary entries have probability exactly 0.
pub fn random_vocab<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut weights: Vec<f64> = Vec::new();
    let groups = rng.gen_range(1..=4);
    for _ in 0..groups {
        match rng.gen_range(0..4) {
            0 => {
                // Tied cluster.
                let size = rng.gen_range(1..=6);
                let w = rng.gen_range(0.05..1.0);
                weights.extend(std::iter::repeat_n(w, size));
            }
            1 => {
                // Geometric decay.
                let start: f64 = rng.gen_range(0.05..1.0);
                let ratio: f64 = rng.gen_range(0.5..0.95);
                let len = rng.gen_range(2..30);
                weights.extend((0..len).map(|i| start * ratio.powi(i)));
            }
            2 => {
                let len = rng.gen_range(1..10);
                weights.extend((0..len).map(|_| rng.gen_range(0.0..1.0)));
            }
            _ => {
                // Long flat low tail.
                let len = rng.gen_range(10..300);
                let w = rng.gen_range(1e-5..2e-3);
                weights.extend(std::iter::repeat_n(w, len));
            }
        }
    }
    let zeros = rng.gen_range(1..5);
    let total: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    probs.extend(std::iter::repeat_n(0.0, zeros));
    probs.shuffle(rng);
    probs
}

/// Sorted `(token, prob)` pairs, descending by probability then ascending id.
pub fn sorted_vocab(probs: &[f64]) -> Vec<(u32, f64)> {
    let mut pairs: Vec<(u32, f64)> = probs.iter().enumerate().map(|(i, &p)| (i as u32, p)).collect();
    pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    pairs
}

/// Truncates a full distribution to its ε-complete head: every entry above
/// `epsilon`, then the first entry at or below it. Zero-probability tokens
/// are dropped from the vocabulary when `drop_zeros` is set.
pub fn truncate(
    probs: &[f64],
    epsilon: f64,
    drop_zeros: bool,
    chosen_token: u32,
) -> StepDistribution {
    let mut sorted = sorted_vocab(probs);
    if drop_zeros {
        sorted.retain(|&(_, p)| p > 0.0);
    }
    let above = sorted.iter().take_while(|&&(_, p)| p > epsilon).count();
    let head_len = (above + 1).min(sorted.len());
    let head: Vec<TokenProb> = sorted[..head_len]
        .iter()
        .map(|&(t, p)| TokenProb::new(t, p))
        .collect();
    let tail = &sorted[head_len..];
    let chosen = match head.iter().position(|tp| tp.token == chosen_token) {
        Some(i) => Chosen::Index(i),
        None => Chosen::Prob(probs[chosen_token as usize]),
    };
    StepDistribution {
        head,
        tail_mass: tail.iter().map(|&(_, p)| p).sum(),
        tail_count: tail.len() as u64,
        chosen,
    }
}

/// Direct transcription of the jump-cut definition over a full vocabulary:
/// sort, take consecutive differences, flag each position whose drop exceeds
/// both `x · p_i` and `epsilon`, and cut at the largest flagged position.
/// Vocabulary tokens not listed are probability 0; one such 0 closes the
/// vector. Returns `(c, Σ_{j≤c} p_j)`, with `c = 1` when nothing is flagged.
pub fn jump_cut_oracle(vocab: &[f64], x: f64, epsilon: f64) -> (usize, f64) {
    let mut sorted: Vec<f64> = vocab.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted.push(0.0);
    let diffs: Vec<f64> = (0..sorted.len() - 1).map(|i| sorted[i] - sorted[i + 1]).collect();
    let significant: Vec<bool> = (0..diffs.len())
        .map(|i| diffs[i] > sorted[i] * x && diffs[i] > epsilon)
        .collect();
    let c = significant
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| i + 1)
        .max()
        .unwrap_or(1);
    let mut mass = 0.0;
    for p in &sorted[..c] {
        mass += p;
    }
    (c, mass)
}

/// MCC straight from the textbook formula, 0 for an empty marginal.
pub fn mcc_oracle(tp: f64, fp: f64, tn: f64, fn_: f64) -> f64 {
    let d = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if d == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / d.sqrt()
    }
}

/// Exhaustive threshold scan: every midpoint between distinct scores plus
/// both extremes, each scored by counting the confusion matrix afresh.
/// Returns `(threshold, mcc)` maximizing MCC, smallest threshold on ties.
pub fn threshold_oracle(scores: &[f64], labels: &[Label]) -> (f64, f64) {
    let mut distinct = scores.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut candidates = vec![distinct[0]];
    for w in distinct.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(distinct[distinct.len() - 1] + 1.0);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &t in &candidates {
        let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= t, l) {
                (true, Label::Ok) => tp += 1.0,
                (true, Label::Bad) => fp += 1.0,
                (false, Label::Bad) => tn += 1.0,
                (false, Label::Ok) => fn_ += 1.0,
            }
        }
        let m = mcc_oracle(tp, fp, tn, fn_);
        if m > best.1 {
            best = (t, m);
        }
    }
    best
}
