//! Deterministic result serialization.
//!
//! Every subcommand funnels its outputs through [`OutputWriter`]: files are
//! written with fixed column orders and locale-independent `{:.6}` decimal
//! formatting, their SHA-256 digests are recorded, and `run_manifest.json`
//! is written last so a manifest only ever describes files that exist.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use aamsim_core::RunConfig;

/// Formats one numeric cell: fixed six decimals, `inf`/`NaN` spelled by the
/// standard formatter.
pub fn num(value: f64) -> String {
    format!("{value:.6}")
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    wall_clock_s: f64,
    config: &'a RunConfig,
    outputs: &'a [FileDigest],
}

/// Collects output files for one subcommand run under its own directory.
pub struct OutputWriter {
    dir: PathBuf,
    started: Instant,
    files: Vec<FileDigest>,
}

impl OutputWriter {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir,
            started: Instant::now(),
            files: Vec::new(),
        })
    }

    /// Writes one output file and records its digest.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(FileDigest {
            name: name.to_string(),
            sha256: hex_digest(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    /// Serializes a value as pretty JSON and writes it as an output file.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).context("cannot serialize output")?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes the manifest (always last) and returns the recorded digests.
    pub fn finish(
        self,
        subcommand: &str,
        config: &RunConfig,
    ) -> Result<Vec<FileDigest>> {
        let manifest = RunManifest {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            config,
            outputs: &self.files,
        };
        let mut text =
            serde_json::to_string_pretty(&manifest).context("cannot serialize manifest")?;
        text.push('\n');
        let path = self.dir.join("run_manifest.json");
        fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(self.files)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Builds a CSV document from a header and formatted rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut text = String::with_capacity(4096);
        text.push_str(header);
        text.push('\n');
        Self { text }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let mut first = true;
        for cell in cells {
            if !first {
                self.text.push(',');
            }
            self.text.push_str(&cell);
            first = false;
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_format_with_fixed_decimals() {
        assert_eq!(num(1.0), "1.000000");
        assert_eq!(num(-2.5e-7), "-0.000000");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(1234.56789012), "1234.567890");
    }

    #[test]
    fn csv_assembles_rows_in_order() {
        let mut csv = Csv::new("a,b");
        csv.row([num(1.0), num(2.0)]);
        csv.row(["x".to_string(), "y".to_string()]);
        assert_eq!(csv.into_string(), "a,b\n1.000000,2.000000\nx,y\n");
    }

    #[test]
    fn digests_match_a_known_vector() {
        // SHA-256 of "abc", a published reference value.
        assert_eq!(
            hex_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn writer_reports_files_and_writes_manifest_last() {
        let dir = tempfile::tempdir().unwrap();
        let mut writer = OutputWriter::create(dir.path().join("coverage")).unwrap();
        writer.write("a.csv", "x\n1\n").unwrap();
        let config = RunConfig::new(7);
        let files = writer.finish("coverage", &config).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].name, "a.csv");
        assert_eq!(files[0].bytes, 4);
        let manifest = fs::read_to_string(dir.path().join("coverage/run_manifest.json")).unwrap();
        assert!(manifest.contains("\"subcommand\": \"coverage\""));
        assert!(manifest.contains(&files[0].sha256));
    }
}
