//! Run provenance and report/store writers.
//!
//! Every report file embeds the run provenance: JSON reports carry it under a
//! `provenance` key, CSV and text reports carry it as leading `#` comment
//! lines. Intermediate stores are line-delimited JSON so stages can be rerun
//! independently and diffs stay reviewable.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance embedded with every report. Two runs whose provenance inputs
/// (config hash and input hashes) are equal produce identical reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_sha256: String,
    /// Effective settings after CLI overrides.
    pub settings: BTreeMap<String, String>,
    /// Input path (relative to the config directory) → SHA-256 of contents.
    pub input_files: BTreeMap<String, String>,
    pub seed: u64,
    pub classifier_cache_hits: u64,
    pub classifier_cache_misses: u64,
    pub remote_calls: u64,
    pub timestamp: String,
}

impl Provenance {
    /// Timestamp policy: `SOURCE_DATE_EPOCH` wins when set; otherwise replay
    /// runs pin the epoch so output trees are byte-reproducible, and live
    /// runs record wall-clock time.
    pub fn timestamp_now(deterministic: bool) -> String {
        let epoch = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.parse::<i64>().ok())
            .or(if deterministic { Some(0) } else { None });
        let dt = match epoch {
            Some(secs) => chrono::DateTime::from_timestamp(secs, 0)
                .unwrap_or_else(|| chrono::DateTime::from_timestamp(0, 0).unwrap()),
            None => chrono::Utc::now(),
        };
        dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# provenance: {}",
            serde_json::to_string(self).expect("provenance serializes")
        )
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Write a JSON report with the provenance embedded at the top level.
pub fn write_json_report<T: Serialize>(
    path: impl AsRef<Path>,
    provenance: &Provenance,
    body: &T,
) -> Result<()> {
    let path = path.as_ref();
    let mut value = serde_json::to_value(body).map_err(|e| Error::json(path, e))?;
    match value.as_object_mut() {
        Some(obj) => {
            obj.insert(
                "provenance".to_string(),
                serde_json::to_value(provenance).map_err(|e| Error::json(path, e))?,
            );
        }
        None => {
            value = serde_json::json!({
                "provenance": provenance,
                "body": value,
            });
        }
    }
    let file = create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write a text report, prefixing the provenance comment line.
pub fn write_text_report(
    path: impl AsRef<Path>,
    provenance: &Provenance,
    body: &str,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "{}", provenance.comment_line()).map_err(|e| Error::io(path, e))?;
    w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    if !body.ends_with('\n') {
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write CSV rows (first row is the header), prefixing the provenance
/// comment line.
pub fn write_csv_report(
    path: impl AsRef<Path>,
    provenance: &Provenance,
    rows: &[Vec<String>],
) -> Result<()> {
    let path = path.as_ref();
    let mut file = BufWriter::new(create(path)?);
    writeln!(file, "{}", provenance.comment_line()).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.write_record(row).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|_| Error::MissingStore {
        path: path.to_path_buf(),
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

/// Render rows as an aligned text grid (first row is the header).
pub fn render_grid(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (idx, row) in rows.iter().enumerate() {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            let pad = widths[i].saturating_sub(cell.chars().count());
            line.push_str(cell);
            if i + 1 < row.len() {
                line.push_str(&" ".repeat(pad));
                line.push_str("  ");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
        if idx == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (columns.saturating_sub(1));
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
