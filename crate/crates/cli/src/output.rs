use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::args::{Cli, Command};

/// Writes through a temporary file in the target directory, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `<dir>/manifest.json` for directory outputs, `<stem>.manifest.json` next
/// to file outputs.
pub fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        out.with_extension("manifest.json")
    }
}

#[derive(Serialize)]
struct Versions {
    kfh: &'static str,
    kfh_cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    seed: u64,
    verbosity: u8,
    options: &'a Command,
    versions: Versions,
    outputs: Vec<String>,
}

pub fn write_manifest(cli: &Cli, path: &Path, outputs: &[PathBuf]) -> Result<()> {
    let m = Manifest {
        command: cli.command.name(),
        seed: cli.seed,
        verbosity: cli.verbose,
        options: &cli.command,
        versions: Versions {
            kfh: kfh::VERSION,
            kfh_cli: env!("CARGO_PKG_VERSION"),
        },
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(path, &m)
}
