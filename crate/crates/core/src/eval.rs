//! Correlation and classification metrics, OK/BAD threshold tuning,
//! hyperparameter sweeps and cluster-finder comparison.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterFinderConfig;
use crate::prob::{Corpus, Label};
use crate::scoring::{score_corpus_strict, MethodConfig, QEResult, RecordError};

/// Candidate values for the jump-cut relative threshold.
pub const DEFAULT_GRID_X: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.6];
/// Candidate values for the jump-cut absolute threshold.
pub const DEFAULT_GRID_EPSILON: [f64; 3] = [0.005, 0.01, 0.1];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFew(usize),
    #[error("correlation undefined: input is constant")]
    Undefined,
    #[error("dev labels contain a single class")]
    SingleClass,
    #[error("record {0} has no gold score")]
    MissingGold(String),
    #[error("record {0} has no token labels")]
    MissingLabels(String),
    #[error("no score for record {0}")]
    MissingResult(String),
    #[error("record {id}: {scores} token scores for {labels} labels")]
    TokenCountMismatch {
        id: String,
        scores: usize,
        labels: usize,
    },
    #[error("empty grid")]
    EmptyGrid,
    #[error("scoring failed: {0}")]
    Scoring(#[from] RecordError),
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFew(xs.len()));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut cov, mut var_x, mut var_y) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(EvalError::Undefined);
    }
    Ok((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Binary confusion counts with OK as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, predicted: Label, gold: Label) {
        match (predicted, gold) {
            (Label::Ok, Label::Ok) => self.tp += 1,
            (Label::Ok, Label::Bad) => self.fp += 1,
            (Label::Bad, Label::Bad) => self.tn += 1,
            (Label::Bad, Label::Ok) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn mcc(&self) -> f64 {
        mcc(self.tp, self.fp, self.tn, self.fn_)
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(tp: u64, fp: u64, tn: u64, fn_: u64) -> f64 {
    let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let denominator = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denominator == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / denominator.sqrt()).clamp(-1.0, 1.0)
}

/// Score at or above the threshold means OK.
pub fn classify(score: f64, threshold: f64) -> Label {
    if score >= threshold {
        Label::Ok
    } else {
        Label::Bad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub mcc: f64,
}

/// Candidate thresholds: the smallest score, every midpoint between
/// consecutive distinct scores, and the next float above the largest score.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut out = Vec::with_capacity(distinct.len() + 1);
    if let (Some(&first), Some(&last)) = (distinct.first(), distinct.last()) {
        out.push(first);
        out.extend(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        out.push(last.next_up());
    }
    out
}

/// Picks the threshold maximizing dev MCC; ties go to the smallest threshold.
pub fn tune_threshold(scores: &[f64], labels: &[Label]) -> Result<ThresholdChoice, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let ok_total = labels.iter().filter(|&&l| l == Label::Ok).count() as u64;
    let bad_total = labels.len() as u64 - ok_total;
    if ok_total == 0 || bad_total == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sweep upwards: the threshold starts at the smallest score (everything
    // OK) and each group of equal scores flips to BAD once passed.
    let mut confusion = Confusion::new(ok_total, bad_total, 0, 0);
    let mut best = ThresholdChoice {
        threshold: scores[order[0]],
        mcc: confusion.mcc(),
    };
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            match labels[order[i]] {
                Label::Ok => {
                    confusion.tp -= 1;
                    confusion.fn_ += 1;
                }
                Label::Bad => {
                    confusion.fp -= 1;
                    confusion.tn += 1;
                }
            }
            i += 1;
        }
        let threshold = match order.get(i) {
            Some(&next) => value + (scores[next] - value) / 2.0,
            None => value.next_up(),
        };
        let candidate = confusion.mcc();
        if candidate > best.mcc {
            best = ThresholdChoice {
                threshold,
                mcc: candidate,
            };
        }
    }
    Ok(best)
}

/// Correlation and classification numbers for one method on one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub grouping: String,
    pub pearson: Option<f64>,
    pub mcc: Option<f64>,
    pub threshold: Option<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl EvalReport {
    fn empty(method: &str, grouping: &str, n: usize) -> Self {
        Self {
            method: method.to_string(),
            grouping: grouping.to_string(),
            pearson: None,
            mcc: None,
            threshold: None,
            n,
            x: None,
            epsilon: None,
        }
    }

    /// Attaches the jump-cut hyperparameters of `config`, if any.
    pub fn with_finder(mut self, config: &ClusterFinderConfig) -> Self {
        if let ClusterFinderConfig::JumpCut {
            x_percent, epsilon, ..
        } = *config
        {
            self.x = Some(x_percent);
            self.epsilon = Some(epsilon);
        }
        self
    }
}

fn results_by_id(results: &[QEResult]) -> HashMap<&str, &QEResult> {
    results.iter().map(|r| (r.id.as_str(), r)).collect()
}

fn method_of(results: &[QEResult]) -> &str {
    results.first().map_or("", |r| r.method.as_str())
}

/// Sequence scores and gold scores, paired in corpus order.
pub fn sequence_pairs(corpus: &Corpus, results: &[QEResult]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let by_id = results_by_id(results);
    let mut scores = Vec::with_capacity(corpus.len());
    let mut gold = Vec::with_capacity(corpus.len());
    for record in &corpus.records {
        let g = record
            .gold_score
            .ok_or_else(|| EvalError::MissingGold(record.sequence_id.clone()))?;
        let r = by_id
            .get(record.sequence_id.as_str())
            .ok_or_else(|| EvalError::MissingResult(record.sequence_id.clone()))?;
        scores.push(r.sequence_score);
        gold.push(g);
    }
    Ok((scores, gold))
}

/// Pearson between sequence scores and gold scores. A constant input yields
/// a report without a Pearson value.
pub fn evaluate_sequence(
    corpus: &Corpus,
    results: &[QEResult],
    grouping: &str,
) -> Result<EvalReport, EvalError> {
    let (scores, gold) = sequence_pairs(corpus, results)?;
    let mut report = EvalReport::empty(method_of(results), grouping, scores.len());
    report.pearson = match pearson(&scores, &gold) {
        Ok(r) => Some(r),
        Err(EvalError::Undefined) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

/// One record's token scores with their labels.
pub type TokenPairs = (Vec<f64>, Vec<Label>);

/// Token scores and labels per record, in corpus order.
pub fn token_pairs(
    corpus: &Corpus,
    results: &[QEResult],
) -> Result<Vec<TokenPairs>, EvalError> {
    let by_id = results_by_id(results);
    corpus
        .records
        .iter()
        .map(|record| {
            let labels = record
                .token_labels
                .as_ref()
                .ok_or_else(|| EvalError::MissingLabels(record.sequence_id.clone()))?;
            let r = by_id
                .get(record.sequence_id.as_str())
                .ok_or_else(|| EvalError::MissingResult(record.sequence_id.clone()))?;
            if r.token_scores.len() != labels.len() {
                return Err(EvalError::TokenCountMismatch {
                    id: record.sequence_id.clone(),
                    scores: r.token_scores.len(),
                    labels: labels.len(),
                });
            }
            Ok((r.token_scores.clone(), labels.clone()))
        })
        .collect()
}

/// How token-level confusion counts are combined across sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// One confusion matrix over all tokens of all records.
    #[default]
    Micro,
    /// MCC per record, then averaged.
    Macro,
}

/// Token-level MCC at a fixed threshold.
pub fn evaluate_tokens(
    corpus: &Corpus,
    results: &[QEResult],
    threshold: f64,
    averaging: Averaging,
    grouping: &str,
) -> Result<EvalReport, EvalError> {
    let pairs = token_pairs(corpus, results)?;
    let mut total = Confusion::default();
    let mut per_record = Vec::with_capacity(pairs.len());
    for (scores, labels) in &pairs {
        let mut confusion = Confusion::default();
        for (&score, &label) in scores.iter().zip(labels) {
            confusion.record(classify(score, threshold), label);
        }
        per_record.push(confusion.mcc());
        total.tp += confusion.tp;
        total.fp += confusion.fp;
        total.tn += confusion.tn;
        total.fn_ += confusion.fn_;
    }
    let mut report = EvalReport::empty(method_of(results), grouping, total.total() as usize);
    report.threshold = Some(threshold);
    report.mcc = Some(match averaging {
        Averaging::Micro => total.mcc(),
        Averaging::Macro if per_record.is_empty() => 0.0,
        Averaging::Macro => per_record.iter().sum::<f64>() / per_record.len() as f64,
    });
    Ok(report)
}

/// Tunes the OK/BAD threshold on `dev` token scores.
pub fn tune_on(dev: &Corpus, dev_results: &[QEResult]) -> Result<ThresholdChoice, EvalError> {
    let (scores, labels): (Vec<f64>, Vec<Label>) = token_pairs(dev, dev_results)?
        .into_iter()
        .flat_map(|(s, l)| s.into_iter().zip(l))
        .unzip();
    tune_threshold(&scores, &labels)
}

/// What a sweep or comparison optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Sequence-level Pearson against gold scores.
    PearsonVsGold,
    /// Token-level MCC against OK/BAD labels at the dev-tuned threshold.
    MccVsLabels,
}

impl Target {
    pub fn metric_name(self) -> &'static str {
        match self {
            Target::PearsonVsGold => "pearson",
            Target::MccVsLabels => "mcc",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::PearsonVsGold => "pearson-vs-gold",
            Target::MccVsLabels => "mcc-vs-labels",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pearson-vs-gold" | "pearson" => Ok(Target::PearsonVsGold),
            "mcc-vs-labels" | "mcc" => Ok(Target::MccVsLabels),
            other => Err(format!("unknown target `{other}`")),
        }
    }
}

/// Evaluates one BoostedProb configuration on a single corpus. For MCC the
/// threshold is tuned on the same corpus.
fn evaluate_on_dev(
    corpus: &Corpus,
    config: &MethodConfig,
    target: Target,
    workers: usize,
) -> Result<EvalReport, EvalError> {
    let results = score_corpus_strict(corpus, config, workers)?;
    let report = match target {
        Target::PearsonVsGold => evaluate_sequence(corpus, &results, "dev")?,
        Target::MccVsLabels => {
            let choice = tune_on(corpus, &results)?;
            let mut report = EvalReport::empty(method_of(&results), "dev", 0);
            report.n = token_pairs(corpus, &results)?.iter().map(|(s, _)| s.len()).sum();
            report.mcc = Some(choice.mcc);
            report.threshold = Some(choice.threshold);
            report
        }
    };
    Ok(report.with_finder(&config.cluster))
}

fn metric_value(report: &EvalReport, target: Target) -> Option<f64> {
    match target {
        Target::PearsonVsGold => report.pearson,
        Target::MccVsLabels => report.mcc,
    }
}

/// Descending by value, missing values last.
fn by_metric_desc(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => b.total_cmp(&a),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub x_percent: f64,
    pub epsilon: f64,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub target: Target,
    pub entries: Vec<SweepEntry>,
}

impl SweepTable {
    pub fn best(&self) -> Option<&SweepEntry> {
        self.entries.first().filter(|e| e.value.is_some())
    }

    pub fn to_rows(&self, grouping: &str) -> Vec<ReportRow> {
        self.entries
            .iter()
            .map(|e| ReportRow {
                method: format!(
                    "boostedprob/{}",
                    ClusterFinderConfig::jump_cut(e.x_percent, e.epsilon)
                ),
                grouping: grouping.to_string(),
                metric: self.target.metric_name().to_string(),
                value: e.value,
                n: e.n,
                threshold: e.threshold,
                x: Some(e.x_percent),
                epsilon: Some(e.epsilon),
            })
            .collect()
    }
}

/// Evaluates jump-cut BoostedProb over the full `grid_x × grid_eps` grid.
/// Cells that fail keep their error message and sort last.
pub fn sweep(
    dev: &Corpus,
    grid_x: &[f64],
    grid_eps: &[f64],
    target: Target,
    workers: usize,
) -> Result<SweepTable, EvalError> {
    if grid_x.is_empty() || grid_eps.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let cells: Vec<(f64, f64)> = grid_x
        .iter()
        .flat_map(|&x| grid_eps.iter().map(move |&eps| (x, eps)))
        .collect();
    let run = |&(x, eps): &(f64, f64)| {
        let config = MethodConfig::boosted(ClusterFinderConfig::jump_cut(x, eps));
        match config
            .validate()
            .map_err(|e| e.to_string())
            .and_then(|_| evaluate_on_dev(dev, &config, target, 1).map_err(|e| e.to_string()))
        {
            Ok(report) => SweepEntry {
                x_percent: x,
                epsilon: eps,
                value: metric_value(&report, target),
                threshold: report.threshold,
                n: report.n,
                error: None,
            },
            Err(error) => SweepEntry {
                x_percent: x,
                epsilon: eps,
                value: None,
                threshold: None,
                n: 0,
                error: Some(error),
            },
        }
    };
    let mut entries: Vec<SweepEntry> = if workers <= 1 {
        cells.iter().map(run).collect()
    } else {
        cells.par_iter().map(run).collect()
    };
    // Stable sort keeps grid order among equal values.
    entries.sort_by(|a, b| by_metric_desc(a.value, b.value));
    Ok(SweepTable { target, entries })
}

/// One finder's tuned result in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinderResult {
    pub finder: String,
    pub best_config: Option<ClusterFinderConfig>,
    pub dev_value: Option<f64>,
    pub test_value: Option<f64>,
    pub threshold: Option<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A named set of candidate configurations for one finder.
#[derive(Debug, Clone, PartialEq)]
pub struct FinderGrid {
    pub name: String,
    pub candidates: Vec<ClusterFinderConfig>,
}

impl FinderGrid {
    pub fn new(name: impl Into<String>, candidates: Vec<ClusterFinderConfig>) -> Self {
        Self {
            name: name.into(),
            candidates,
        }
    }

    /// Default candidate lists per finder.
    pub fn defaults() -> Vec<FinderGrid> {
        use ClusterFinderConfig as C;
        vec![
            FinderGrid::new(
                "jump-cut",
                DEFAULT_GRID_X
                    .iter()
                    .flat_map(|&x| DEFAULT_GRID_EPSILON.iter().map(move |&e| C::jump_cut(x, e)))
                    .collect(),
            ),
            FinderGrid::new("top-k", (1..=10).map(|k| C::TopK { k }).collect()),
            FinderGrid::new(
                "top-p",
                [0.5, 0.6, 0.7, 0.8, 0.9, 0.95]
                    .into_iter()
                    .map(|p| C::TopP { p })
                    .collect(),
            ),
            FinderGrid::new(
                "epsilon-cut",
                [0.001, 0.005, 0.01, 0.05, 0.1, 0.2]
                    .into_iter()
                    .map(|epsilon| C::EpsilonCut { epsilon })
                    .collect(),
            ),
            FinderGrid::new(
                "eta-cut",
                [0.001, 0.005, 0.01, 0.05, 0.1, 0.2]
                    .into_iter()
                    .map(|eta| C::EtaCut { eta })
                    .collect(),
            ),
            FinderGrid::new(
                "min-p",
                [0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95]
                    .into_iter()
                    .map(|p| C::MinP { p })
                    .collect(),
            ),
        ]
    }
}

fn compare_one(
    dev: &Corpus,
    test: &Corpus,
    grid: &FinderGrid,
    target: Target,
) -> Result<FinderResult, EvalError> {
    if grid.candidates.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut best: Option<(ClusterFinderConfig, EvalReport)> = None;
    let mut last_error = None;
    for candidate in &grid.candidates {
        let config = MethodConfig::boosted(*candidate);
        if let Err(e) = config.validate() {
            last_error = Some(e.to_string());
            continue;
        }
        match evaluate_on_dev(dev, &config, target, 1) {
            Ok(report) => {
                let better = match &best {
                    None => true,
                    Some((_, current)) => {
                        by_metric_desc(metric_value(&report, target), metric_value(current, target))
                            == Ordering::Less
                    }
                };
                if better {
                    best = Some((*candidate, report));
                }
            }
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    let Some((config, dev_report)) = best else {
        return Ok(FinderResult {
            finder: grid.name.clone(),
            best_config: None,
            dev_value: None,
            test_value: None,
            threshold: None,
            n: 0,
            error: last_error,
        });
    };
    let method = MethodConfig::boosted(config);
    let results = score_corpus_strict(test, &method, 1)?;
    let test_report = match target {
        Target::PearsonVsGold => evaluate_sequence(test, &results, "test")?,
        Target::MccVsLabels => {
            let threshold = dev_report.threshold.ok_or(EvalError::SingleClass)?;
            evaluate_tokens(test, &results, threshold, Averaging::Micro, "test")?
        }
    };
    Ok(FinderResult {
        finder: grid.name.clone(),
        best_config: Some(config),
        dev_value: metric_value(&dev_report, target),
        test_value: metric_value(&test_report, target),
        threshold: test_report.threshold,
        n: test_report.n,
        error: None,
    })
}

/// For each finder, picks the best candidate on `dev` and evaluates it on
/// `test`. Failing finders are kept with their error. Rows are ranked by test
/// metric, descending.
pub fn compare_finders(
    dev: &Corpus,
    test: &Corpus,
    grids: &[FinderGrid],
    target: Target,
) -> Vec<FinderResult> {
    let mut rows: Vec<FinderResult> = grids
        .par_iter()
        .map(|grid| {
            compare_one(dev, test, grid, target).unwrap_or_else(|e| FinderResult {
                finder: grid.name.clone(),
                best_config: None,
                dev_value: None,
                test_value: None,
                threshold: None,
                n: 0,
                error: Some(e.to_string()),
            })
        })
        .collect();
    rows.sort_by(|a, b| by_metric_desc(a.test_value, b.test_value));
    rows
}

/// One CSV line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub grouping: String,
    pub metric: String,
    pub value: Option<f64>,
    pub n: usize,
    pub threshold: Option<f64>,
    pub x: Option<f64>,
    pub epsilon: Option<f64>,
}

impl From<&EvalReport> for Vec<ReportRow> {
    fn from(report: &EvalReport) -> Self {
        let mut rows = Vec::new();
        let mut push = |metric: &str, value| {
            rows.push(ReportRow {
                method: report.method.clone(),
                grouping: report.grouping.clone(),
                metric: metric.to_string(),
                value,
                n: report.n,
                threshold: report.threshold,
                x: report.x,
                epsilon: report.epsilon,
            })
        };
        if report.mcc.is_some() || report.pearson.is_none() && report.threshold.is_some() {
            push("mcc", report.mcc);
        }
        if report.pearson.is_some() || report.mcc.is_none() {
            push("pearson", report.pearson);
        }
        rows
    }
}

/// Writes rows as CSV with the header
/// `method,grouping,metric,value,n,threshold,x,epsilon`.
/// Missing values are empty cells.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record([
            "method", "grouping", "metric", "value", "n", "threshold", "x", "epsilon",
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Aligned plain-text table of report rows.
pub fn format_report_table(rows: &[ReportRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut lines = vec![[
        "method".to_string(),
        "grouping".to_string(),
        "metric".to_string(),
        "value".to_string(),
        "n".to_string(),
        "threshold".to_string(),
    ]];
    for row in rows {
        lines.push([
            row.method.clone(),
            row.grouping.clone(),
            row.metric.clone(),
            cell(row.value),
            row.n.to_string(),
            cell(row.threshold),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
