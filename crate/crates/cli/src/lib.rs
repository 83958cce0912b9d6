//! Command-line surface for BoostedProb.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, bad config file,
//! invalid hyperparameters), 2 on data errors (unreadable or invalid input,
//! failed scoring or evaluation, unwritable output).

mod args;
mod commands;
mod output;

use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt;
use std::path::Path;

use clap::{CommandFactory, Parser};

pub use args::WORKERS_ENV;
use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn usage(message: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{message}"))
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Failure::Data(anyhow::anyhow!("{message}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Data(e) => write!(f, "{e:#}"),
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    match commands::execute(&cli, &argv) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}

fn parse(argv: &[OsString]) -> Result<Cli, i32> {
    let first = parse_clap(argv)?;
    let Some(path) = &first.config else {
        return Ok(first);
    };
    let merged = match merge_config(argv, first.command.name(), path) {
        Ok(merged) => merged,
        Err(failure) => {
            eprintln!("error: {failure}");
            return Err(failure.exit_code());
        }
    };
    parse_clap(&merged)
}

fn parse_clap(argv: &[OsString]) -> Result<Cli, i32> {
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            EXIT_USAGE
        } else {
            EXIT_OK
        }
    })
}

/// Long flags accepted by `subcommand`, global ones included.
fn flags_of(subcommand: &str) -> HashSet<String> {
    let root = Cli::command();
    let mut flags: HashSet<String> = root
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    if let Some(sub) = root.find_subcommand(subcommand) {
        for arg in sub.get_arguments() {
            flags.extend(arg.get_long().map(str::to_string));
            flags.extend(arg.get_all_aliases().into_iter().flatten().map(str::to_string));
        }
    }
    flags
}

/// Inserts config-file values as flags right after the subcommand name,
/// skipping any flag already present on the command line. Keys valid for a
/// different subcommand are ignored; unknown keys are a usage error.
fn merge_config(argv: &[OsString], subcommand: &str, path: &Path) -> Result<Vec<OsString>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    let serde_json::Value::Object(entries) = value else {
        return Err(Failure::usage(format!("config {}: expected a JSON object", path.display())));
    };

    let known_here = flags_of(subcommand);
    let known_anywhere: HashSet<String> = Cli::command()
        .get_subcommands()
        .flat_map(|s| flags_of(s.get_name()))
        .collect();
    let given: HashSet<String> = argv
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        let flag = key.replace('_', "-");
        if !known_anywhere.contains(&flag) || flag == "config" {
            return Err(Failure::usage(format!("config {}: unknown key `{key}`", path.display())));
        }
        if !known_here.contains(&flag) || given.contains(&flag) {
            continue;
        }
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            other => Err(Failure::usage(format!(
                "config {}: unsupported value for `{key}`: {other}",
                path.display()
            ))),
        };
        match &value {
            serde_json::Value::Bool(true) => extra.push(format!("--{flag}").into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                for item in items {
                    extra.push(format!("--{flag}").into());
                    extra.push(scalar(item)?.into());
                }
            }
            other => {
                extra.push(format!("--{flag}").into());
                extra.push(scalar(other)?.into());
            }
        }
    }

    let position = argv
        .iter()
        .position(|a| a.to_str() == Some(subcommand))
        .map_or(argv.len(), |i| i + 1);
    let mut merged = argv[..position].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[position..]);
    Ok(merged)
}
