//! Deterministic result emission: config hashing, run metadata, and CSV/JSON
//! writers.
//!
//! Every artifact embeds the SHA-256 of its canonicalized configuration, the
//! master seed, and the crate version, and contains nothing else that varies
//! between runs (no timestamps, no hostnames): re-running a command with the
//! same configuration and seed reproduces every output byte for byte.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Version string stamped into artifacts.
pub fn artifact_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// SHA-256 of the canonical JSON form of a configuration (hex).
///
/// Canonicalization goes through [`serde_json::Value`], whose object maps are
/// ordered, so semantically equal configurations hash equally regardless of
/// field declaration order.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(format!("{digest:x}"))
}

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// Hash of the full experiment configuration.
    pub config_hash: String,
    /// Master seed of the run.
    pub seed: u64,
    /// Crate version that produced the artifact.
    pub version: String,
    /// Command or study that produced the artifact.
    pub command: String,
}

impl RunMetadata {
    /// Build the metadata block for a command run under a configuration.
    pub fn new<T: Serialize>(config: &T, seed: u64, command: &str) -> Result<Self> {
        Ok(RunMetadata {
            config_hash: config_hash(config)?,
            seed,
            version: artifact_version().to_string(),
            command: command.to_string(),
        })
    }
}

/// JSON artifact: `{ "metadata": …, "results": … }`, pretty-printed with a
/// trailing newline.
pub fn write_json<T: Serialize>(path: &Path, meta: &RunMetadata, results: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Artifact<'a, T> {
        metadata: &'a RunMetadata,
        results: &'a T,
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &Artifact { metadata: meta, results })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// CSV artifact: metadata as `#`-prefixed comment lines, then a header row
/// and the data rows.
pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    meta: &RunMetadata,
    header: &[&str],
    rows: &[Vec<S>],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# config_hash: {}", meta.config_hash)?;
    writeln!(out, "# seed: {}", meta.seed)?;
    writeln!(out, "# version: {}", meta.version)?;
    writeln!(out, "# command: {}", meta.command)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest-roundtrip decimal form of a float for CSV cells.
pub fn fmt_float(x: f64) -> String {
    let mut buf = ryu_format(x);
    // Trim the ryu-style trailing ".0" for integers to keep tables tidy.
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(x: f64) -> String {
    // `{}` on f64 is the shortest representation that round-trips.
    format!("{x}")
}
