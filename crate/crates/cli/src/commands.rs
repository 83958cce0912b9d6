use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use boostedprob::cluster::FinderKind;
use boostedprob::eval::{
    compare_finders, evaluate_sequence, evaluate_tokens, format_report_table, pearson,
    sequence_pairs, sweep, tune_on, EvalError, EvalReport, FinderGrid, ReportRow,
};
use boostedprob::scoring::score_corpus;
use boostedprob::synthlab::{generate, theory_check, SynthSpec};
use boostedprob::{parse_corpus, write_corpus, Corpus, Method, MethodConfig, QEResult};
use serde::Serialize;

use crate::args::{
    Cli, Command, CompareArgs, EvalArgs, Preset, ScoreArgs, SweepArgs, SynthArgs, TheoryArgs,
    TuneArgs,
};
use crate::output::{write_atomic, write_sidecar};
use crate::Failure;

pub fn execute(cli: &Cli, argv: &[OsString]) -> Result<(), Failure> {
    if cli.workers == 0 {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    let ctx = RunContext {
        command: cli.command.name(),
        argv,
        workers: cli.workers,
    };
    match &cli.command {
        Command::Score(args) => score(&ctx, args),
        Command::Eval(args) => eval(&ctx, args),
        Command::Tune(args) => tune(&ctx, args),
        Command::Sweep(args) => run_sweep(&ctx, args),
        Command::Synth(args) => synth(&ctx, args),
        Command::Theory(args) => theory(&ctx, args),
        Command::CompareFinders(args) => compare(&ctx, args),
    }
}

struct RunContext<'a> {
    command: &'static str,
    argv: &'a [OsString],
    workers: usize,
}

impl RunContext<'_> {
    fn write<F>(&self, path: &Path, inputs: &[&Path], fill: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut dyn Write) -> anyhow::Result<()>,
    {
        write_atomic(path, fill)?;
        write_sidecar(path, self.command, self.argv, self.workers, inputs)
    }
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    value
        .as_deref()
        .ok_or_else(|| Failure::usage(format!("--{flag} is required")))
}

fn load(path: &Path, epsilon: f64) -> Result<Corpus, Failure> {
    let file = File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let corpus = parse_corpus(BufReader::new(file), epsilon)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    if corpus.is_empty() {
        return Err(Failure::data(format!("{}: no records", path.display())));
    }
    Ok(corpus)
}

/// Scores a whole corpus, reporting every failing record before giving up.
fn score_all(
    corpus: &Corpus,
    path: &Path,
    config: &MethodConfig,
    workers: usize,
) -> Result<Vec<QEResult>, Failure> {
    let results = score_corpus(corpus, config, workers).map_err(Failure::usage)?;
    let mut scored = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (index, result) in results.into_iter().enumerate() {
        match result {
            Ok(r) => scored.push(r),
            Err(e) => {
                failures += 1;
                eprintln!(
                    "error: {} record {} ({}): {}",
                    path.display(),
                    index + 1,
                    e.sequence_id,
                    e.source
                );
            }
        }
    }
    if failures > 0 {
        return Err(Failure::data(format!(
            "{}: {failures} record(s) could not be scored with {}",
            path.display(),
            config.label()
        )));
    }
    Ok(scored)
}

trait WithMethod {
    fn pipe_finder(self, config: &MethodConfig) -> Self;
}

impl WithMethod for EvalReport {
    /// Attaches jump-cut hyperparameters when they were actually used.
    fn pipe_finder(self, config: &MethodConfig) -> Self {
        if config.method == Method::BoostedProb {
            self.with_finder(&config.cluster)
        } else {
            self
        }
    }
}

fn eval_failure(path: &Path, e: EvalError) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

fn report_csv(rows: &[ReportRow]) -> impl FnOnce(&mut dyn Write) -> anyhow::Result<()> + '_ {
    move |w| {
        boostedprob::eval::write_report_csv(rows, w)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    id: &'a str,
    method: &'a str,
    token_scores: &'a [f64],
    sequence_score: f64,
}

fn score(ctx: &RunContext, args: &ScoreArgs) -> Result<(), Failure> {
    let input = require(&args.input, "in")?;
    let out = require(&args.out, "out")?;
    let configs = args.method.configs()?;
    let corpus = load(input, args.method.ingest_epsilon())?;
    let mut all = Vec::new();
    for config in &configs {
        all.extend(score_all(&corpus, input, config, ctx.workers)?);
    }
    ctx.write(out, &[input], |w| {
        for r in &all {
            let line = ScoreLine {
                id: &r.id,
                method: &r.method,
                token_scores: &r.token_scores,
                sequence_score: r.sequence_score,
            };
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    if let Some(csv_path) = &args.csv {
        ctx.write(csv_path, &[input], |w| {
            let mut writer = csv::Writer::from_writer(w);
            writer.write_record(["id", "method", "sequence_score"])?;
            for r in &all {
                writer.write_record([r.id.as_str(), r.method.as_str(), &r.sequence_score.to_string()])?;
            }
            writer.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn group_name(corpus: &Corpus, path: &Path, key: &str) -> String {
    corpus.metadata.get(key).cloned().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
    })
}

fn eval(ctx: &RunContext, args: &EvalArgs) -> Result<(), Failure> {
    if args.inputs.is_empty() {
        return Err(Failure::usage("--in (or --test) is required"));
    }
    let configs = args.method.configs()?;
    let epsilon = args.method.ingest_epsilon();
    let mut rows: Vec<ReportRow> = Vec::new();

    if args.tokens {
        let dev = match (&args.dev, args.threshold) {
            (Some(_), Some(_)) => return Err(Failure::usage("--dev and --threshold are exclusive")),
            (None, None) => return Err(Failure::usage("--tokens needs --dev or --threshold")),
            (Some(path), None) => Some((path.as_path(), load(path, epsilon)?)),
            (None, Some(_)) => None,
        };
        let tests: Vec<(&Path, Corpus)> = args
            .inputs
            .iter()
            .map(|p| Ok((p.as_path(), load(p, epsilon)?)))
            .collect::<Result<_, Failure>>()?;
        for config in &configs {
            let threshold = match (&dev, args.threshold) {
                (_, Some(t)) => t,
                (Some((path, corpus)), None) => {
                    let results = score_all(corpus, path, config, ctx.workers)?;
                    let choice = tune_on(corpus, &results).map_err(|e| eval_failure(path, e))?;
                    eprintln!(
                        "{}: threshold {} (dev mcc {:.4})",
                        config.label(),
                        choice.threshold,
                        choice.mcc
                    );
                    choice.threshold
                }
                (None, None) => unreachable!(),
            };
            for (path, corpus) in &tests {
                let results = score_all(corpus, path, config, ctx.workers)?;
                let group = group_name(corpus, path, &args.group_key);
                let report = evaluate_tokens(corpus, &results, threshold, args.averaging, &group)
                    .map_err(|e| eval_failure(path, e))?
                    .pipe_finder(config);
                rows.extend(Vec::<ReportRow>::from(&report));
            }
        }
    } else {
        if args.dev.is_some() || args.threshold.is_some() {
            return Err(Failure::usage("--dev and --threshold only apply with --tokens"));
        }
        let corpora: Vec<(&Path, Corpus)> = args
            .inputs
            .iter()
            .map(|p| Ok((p.as_path(), load(p, epsilon)?)))
            .collect::<Result<_, Failure>>()?;
        for config in &configs {
            let mut reports = Vec::new();
            let (mut all_scores, mut all_gold) = (Vec::new(), Vec::new());
            for (path, corpus) in &corpora {
                let results = score_all(corpus, path, config, ctx.workers)?;
                let group = group_name(corpus, path, &args.group_key);
                let report = evaluate_sequence(corpus, &results, &group)
                    .map_err(|e| eval_failure(path, e))?
                    .pipe_finder(config);
                let (scores, gold) = sequence_pairs(corpus, &results).map_err(|e| eval_failure(path, e))?;
                all_scores.extend(scores);
                all_gold.extend(gold);
                reports.push(report);
            }
            if reports.len() > 1 {
                let defined: Vec<f64> = reports.iter().filter_map(|r| r.pearson).collect();
                let template = reports[0].clone();
                let average = EvalReport {
                    grouping: "average".into(),
                    pearson: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
                    n: reports.iter().map(|r| r.n).sum(),
                    ..template.clone()
                };
                let pooled = EvalReport {
                    grouping: "pooled".into(),
                    pearson: pearson(&all_scores, &all_gold).ok(),
                    n: all_scores.len(),
                    ..template
                };
                reports.push(average);
                reports.push(pooled);
            }
            for report in &reports {
                rows.extend(Vec::<ReportRow>::from(report));
            }
        }
    }

    print!("{}", format_report_table(&rows));
    if let Some(out) = &args.out {
        let mut inputs: Vec<&Path> = args.inputs.iter().map(PathBuf::as_path).collect();
        inputs.extend(args.dev.as_deref());
        ctx.write(out, &inputs, report_csv(&rows))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TuneLine {
    method: String,
    threshold: f64,
    mcc: f64,
    n: usize,
}

fn tune(ctx: &RunContext, args: &TuneArgs) -> Result<(), Failure> {
    let dev_path = require(&args.dev, "dev")?;
    let configs = args.method.configs()?;
    let dev = load(dev_path, args.method.ingest_epsilon())?;
    let mut lines = Vec::new();
    for config in &configs {
        let results = score_all(&dev, dev_path, config, ctx.workers)?;
        let choice = tune_on(&dev, &results).map_err(|e| eval_failure(dev_path, e))?;
        lines.push(TuneLine {
            method: config.label(),
            threshold: choice.threshold,
            mcc: choice.mcc,
            n: results.iter().map(|r| r.token_scores.len()).sum(),
        });
    }
    for line in &lines {
        println!("{}\tthreshold={}\tmcc={:.4}\tn={}", line.method, line.threshold, line.mcc, line.n);
    }
    if let Some(out) = &args.out {
        ctx.write(out, &[dev_path], |w| {
            serde_json::to_writer_pretty(&mut *w, &lines)?;
            w.write_all(b"\n")?;
            Ok(())
        })?;
    }
    Ok(())
}

fn run_sweep(ctx: &RunContext, args: &SweepArgs) -> Result<(), Failure> {
    let dev_path = require(&args.dev, "dev")?;
    if args.grid_x.is_empty() || args.grid_eps.is_empty() {
        return Err(Failure::usage("sweep grids must not be empty"));
    }
    for &x in &args.grid_x {
        for &eps in &args.grid_eps {
            boostedprob::ClusterFinderConfig::jump_cut(x, eps)
                .validate()
                .map_err(Failure::usage)?;
        }
    }
    let epsilon = args
        .ingest_eps
        .unwrap_or_else(|| args.grid_eps.iter().copied().fold(f64::INFINITY, f64::min));
    let dev = load(dev_path, epsilon)?;
    let table = sweep(&dev, &args.grid_x, &args.grid_eps, args.target, ctx.workers)
        .map_err(|e| eval_failure(dev_path, e))?;
    for entry in &table.entries {
        if let Some(error) = &entry.error {
            eprintln!("warning: x={} eps={}: {error}", entry.x_percent, entry.epsilon);
        }
    }
    let rows = table.to_rows("dev");
    match &args.out {
        Some(out) => ctx.write(out, &[dev_path], report_csv(&rows)),
        None => {
            boostedprob::eval::write_report_csv(&rows, std::io::stdout().lock())
                .context("writing to stdout")
                .map_err(Failure::Data)?;
            Ok(())
        }
    }
}

fn synth(ctx: &RunContext, args: &SynthArgs) -> Result<(), Failure> {
    let out = require(&args.out, "out")?;
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SynthSpec>(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => match args.preset {
            Preset::Plain => SynthSpec::default(),
            Preset::Ambiguous => SynthSpec::ambiguous(SynthSpec::default().n_sequences, 0),
        },
    };
    if let Some(n) = args.n {
        spec.n_sequences = n;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(c) = args.competence {
        spec.competence = c;
    }
    if let Some(mode) = args.error_mode {
        spec.error_mode = mode;
    }
    if let Some(m) = args.mc_samples {
        spec.mc_samples = m;
    }
    let corpus = generate(&spec).map_err(Failure::usage)?;
    let inputs: Vec<&Path> = args.spec.as_deref().into_iter().collect();
    ctx.write(out, &inputs, |w| {
        write_corpus(&corpus, &mut { w })?;
        Ok(())
    })
}

fn theory(ctx: &RunContext, args: &TheoryArgs) -> Result<(), Failure> {
    if args.k_max == 0 || args.q.is_empty() {
        return Err(Failure::usage("--k-max must be positive and --q non-empty"));
    }
    if let Some(q) = args.q.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(Failure::usage(format!("q must lie in (0, 1], got {q}")));
    }
    let cells = theory_check(args.k_max, &args.q);
    println!("{:>3}  {:>6}  {:>10}  {:>10}  {:>7}  result", "k", "q", "raw", "boosted", "cluster");
    for c in &cells {
        println!(
            "{:>3}  {:>6}  {:>10.6}  {:>10.6}  {:>7}  {}",
            c.k,
            c.q,
            c.raw,
            c.boosted,
            c.cluster_size,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    if let Some(out) = &args.out {
        ctx.write(out, &[], |w| {
            let mut writer = csv::Writer::from_writer(w);
            for c in &cells {
                writer.serialize(c)?;
            }
            writer.flush()?;
            Ok(())
        })?;
    }
    let failed = cells.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(Failure::data(format!("{failed} of {} cells failed", cells.len())));
    }
    Ok(())
}

fn compare(ctx: &RunContext, args: &CompareArgs) -> Result<(), Failure> {
    let dev_path = require(&args.dev, "dev")?;
    let test_path = require(&args.test, "test")?;
    let names: Vec<&str> = args
        .finders
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(Failure::usage("empty finder list"));
    }
    let defaults = FinderGrid::defaults();
    let mut grids = Vec::new();
    for name in names {
        let kind: FinderKind = name.parse().map_err(Failure::usage)?;
        let grid = defaults
            .iter()
            .find(|g| g.name == kind.name())
            .cloned()
            .ok_or_else(|| Failure::usage(format!("no default grid for {kind}")))?;
        if !grids.iter().any(|g: &FinderGrid| g.name == grid.name) {
            grids.push(grid);
        }
    }
    let dev = load(dev_path, args.ingest_eps)?;
    let test = load(test_path, args.ingest_eps)?;
    let results = compare_finders(&dev, &test, &grids, args.target);

    let mut rows = Vec::new();
    for r in &results {
        if let Some(error) = &r.error {
            eprintln!("warning: {}: {error}", r.finder);
        }
        let (x, epsilon) = match r.best_config {
            Some(boostedprob::ClusterFinderConfig::JumpCut { x_percent, epsilon, .. }) => {
                (Some(x_percent), Some(epsilon))
            }
            _ => (None, None),
        };
        rows.push(ReportRow {
            method: r
                .best_config
                .map_or_else(|| r.finder.clone(), |c| format!("boostedprob/{c}")),
            grouping: "test".into(),
            metric: args.target.metric_name().into(),
            value: r.test_value,
            n: r.n,
            threshold: r.threshold,
            x,
            epsilon,
        });
    }
    print!("{}", format_report_table(&rows));
    if let Some(out) = &args.out {
        ctx.write(out, &[dev_path, test_path], report_csv(&rows))?;
    }
    Ok(())
}
