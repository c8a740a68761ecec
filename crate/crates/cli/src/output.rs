//! Run manifests and the files each run writes.

use crate::commands::Command;
use irqcount_core::{Error, Profile, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A CSV table: the header names units where a column has one.
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// What a subcommand produced, before anything touches the disk.
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Pre-encoded CSV files, by name without extension.
    pub raw: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub subcommand: String,
    pub seed: u64,
    pub profile_name: String,
    pub profile_hash: String,
    /// The full profile, so a rerun does not depend on preset definitions or files.
    pub profile: Profile,
    pub parameters: Command,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.profile.validate()?;
        Ok(m)
    }
}

fn csv_bytes(t: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(&t.header).map_err(err)?;
    for r in &t.rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Serde(e.to_string()))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes every table, then `<sub>.manifest.json` and `<sub>.summary.json`
/// (the summary embeds the manifest). Returns the manifest path.
pub fn write_run(out: &Path, mut manifest: RunManifest, outcome: Outcome) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let encoded = outcome
        .tables
        .iter()
        .map(|t| Ok((t.name.clone(), csv_bytes(t)?, t.rows.len())))
        .chain(outcome.raw.into_iter().map(|(name, bytes)| {
            let rows = bytes.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
            Ok((name, bytes, rows))
        }))
        .collect::<Result<Vec<_>>>()?;
    for (name, bytes, rows) in encoded {
        let file = format!("{name}.csv");
        fs::write(out.join(&file), &bytes)?;
        manifest.outputs.push(OutputFile {
            file,
            rows,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    manifest.finished_at = now();
    let sub = manifest.subcommand.clone();
    let manifest_path = out.join(format!("{sub}.manifest.json"));
    write_json(&manifest_path, &manifest)?;
    write_json(
        &out.join(format!("{sub}.summary.json")),
        &serde_json::json!({ "manifest": manifest, "results": outcome.summary }),
    )?;
    Ok(manifest_path)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Shortest round-trip decimal; stable across runs and platforms.
pub fn num(x: f64) -> String {
    format!("{x}")
}
