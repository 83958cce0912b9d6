use std::ffi::OsString;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::Failure;

/// Writes `path` through a temporary file in the same directory, renamed
/// into place only after `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> anyhow::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| Failure::data(format!("cannot write {}: {e}", path.display()));
    let temp = tempfile::Builder::new()
        .prefix(".boostedprob-")
        .tempfile_in(dir)
        .map_err(|e| fail(&e))?;
    {
        let mut writer = BufWriter::new(temp.as_file());
        fill(&mut writer).map_err(|e| fail(&format!("{e:#}")))?;
        writer.flush().map_err(|e| fail(&e))?;
    }
    temp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    workers: usize,
    inputs: Vec<String>,
    finished_unix_seconds: u64,
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name: OsString = output.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    output.with_file_name(name)
}

/// Records how `output` was produced in `<output>.meta.json`. Data files stay
/// free of run-specific values so identical runs give identical bytes.
pub fn write_sidecar(
    output: &Path,
    command: &str,
    argv: &[OsString],
    workers: usize,
    inputs: &[&Path],
) -> Result<(), Failure> {
    let meta = RunMetadata {
        tool: "boostedprob",
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        workers,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        finished_unix_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    write_atomic(&sidecar_path(output), |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}
