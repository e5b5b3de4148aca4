//! Trace ingestion: HAR files and decrypted-capture JSON bundles.
//!
//! A corpus manifest lists trace files, each with its service, platform,
//! trace kind, and age group. Parsing keeps only outgoing requests, attaches
//! the trace metadata, and globally sorts the result so downstream stages are
//! schedule-independent. Raw data-type keys are mined from payloads in
//! [`keys`].

mod har;
mod keys;

pub use har::parse_har;
pub use keys::{extract_raw_keys, KeyExtractionOptions, RawKey};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Mobile,
    Web,
    Desktop,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    AccountCreation,
    LoggedIn,
    LoggedOut,
}

/// Age group of the profile a trace was recorded under.
///
/// Boundaries: child is younger than 13, adolescent is at least 13 and
/// younger than 16, adult is 16 and older. Logged-out traces carry no age
/// group (`None`) because age has not been disclosed yet.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Child,
    Adolescent,
    Adult,
    None,
}

impl AgeGroup {
    pub fn from_age(years: u32) -> AgeGroup {
        match years {
            0..=12 => AgeGroup::Child,
            13..=15 => AgeGroup::Adolescent,
            _ => AgeGroup::Adult,
        }
    }
}

/// Metadata attached to every request of a trace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceMeta {
    pub service: String,
    pub platform: Platform,
    pub trace_kind: TraceKind,
    pub age_group: AgeGroup,
}

impl TraceMeta {
    pub fn validate(&self) -> Result<()> {
        if self.service.trim().is_empty() {
            return Err(Error::Manifest("empty service name".into()));
        }
        match (self.trace_kind, self.age_group) {
            (TraceKind::LoggedOut, AgeGroup::None) => Ok(()),
            (TraceKind::LoggedOut, g) => Err(Error::Manifest(format!(
                "logged_out trace for {:?} must have age_group \"none\", found {:?}",
                self.service, g
            ))),
            (_, AgeGroup::None) => Err(Error::Manifest(format!(
                "{:?} trace for {:?} needs an age group",
                self.trace_kind, self.service
            ))),
            _ => Ok(()),
        }
    }
}

/// Request body text with its declared content type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestBody {
    pub text: String,
    pub content_type: Option<String>,
}

/// One outgoing request extracted from a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRequest {
    /// Stable identifier, assigned after the corpus-wide sort.
    pub id: String,
    pub meta: TraceMeta,
    pub url: String,
    pub method: String,
    pub headers: Vec<(String, String)>,
    pub query_params: Vec<(String, String)>,
    pub body: Option<RequestBody>,
    /// Payload unavailable (TLS not decrypted). Implies `body` is absent.
    pub encrypted: bool,
    pub timestamp_ms: i64,
}

/// Counters for tolerated irregularities; never abort the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarnings {
    /// HAR entries without a parseable URL.
    pub skipped_entries: u64,
    /// Bundle records with direction != "out".
    pub non_outgoing: u64,
    /// Bodies that could not be parsed as JSON or form data.
    pub unparsed_bodies: u64,
}

impl IngestWarnings {
    pub fn absorb(&mut self, other: IngestWarnings) {
        self.skipped_entries += other.skipped_entries;
        self.non_outgoing += other.non_outgoing;
        self.unparsed_bodies += other.unparsed_bodies;
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    traces: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    file: String,
    service: String,
    platform: Platform,
    trace_kind: TraceKind,
    age_group: AgeGroup,
    /// "har" or "bundle"; inferred from the file extension when omitted.
    #[serde(default)]
    format: Option<TraceFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TraceFormat {
    Har,
    Bundle,
}

/// One record of a capture-bundle trace file.
#[derive(Debug, Deserialize)]
struct BundleRecord {
    direction: String,
    ts_ms: i64,
    url: String,
    #[serde(default = "default_method")]
    method: String,
    #[serde(default)]
    headers: Vec<(String, String)>,
    #[serde(default)]
    query: Vec<(String, String)>,
    #[serde(default)]
    body_text: Option<String>,
    #[serde(default)]
    content_type: Option<String>,
    #[serde(default)]
    encrypted: bool,
}

fn default_method() -> String {
    "GET".to_string()
}

/// Result of ingesting a whole corpus.
#[derive(Debug)]
pub struct Corpus {
    pub requests: Vec<RawRequest>,
    pub warnings: IngestWarnings,
    /// Files read, in manifest order, relative to the manifest.
    pub trace_files: Vec<PathBuf>,
}

/// Parse every trace file listed in a corpus manifest.
///
/// Only outgoing records are retained. Requests are sorted by
/// (meta, timestamp, url, method) with manifest order as the final
/// tie-break, then assigned stable ids.
pub fn parse_capture_bundle(manifest_path: impl AsRef<Path>) -> Result<Corpus> {
    let manifest_path = manifest_path.as_ref();
    let bytes = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::json(manifest_path, e))?;
    if manifest.traces.is_empty() {
        return Err(Error::Manifest(format!(
            "{} lists no traces",
            manifest_path.display()
        )));
    }

    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut jobs = Vec::new();
    let mut trace_files = Vec::new();
    for entry in &manifest.traces {
        let meta = TraceMeta {
            service: entry.service.clone(),
            platform: entry.platform,
            trace_kind: entry.trace_kind,
            age_group: entry.age_group,
        };
        meta.validate()?;
        let format = entry.format.unwrap_or_else(|| {
            if entry.file.to_ascii_lowercase().ends_with(".har") {
                TraceFormat::Har
            } else {
                TraceFormat::Bundle
            }
        });
        let path = base.join(&entry.file);
        trace_files.push(path.clone());
        jobs.push((path, entry.file.clone(), format, meta));
    }

    let parsed = par::map_collect(&jobs, |(path, name, format, meta)| {
        parse_trace_file(path, name, *format, meta)
    });

    let mut requests = Vec::new();
    let mut warnings = IngestWarnings::default();
    for result in parsed {
        let (reqs, warn) = result?;
        requests.extend(reqs);
        warnings.absorb(warn);
    }

    // Global sort makes the store independent of manifest order and any
    // parse-stage parallelism.
    let mut indexed: Vec<(usize, RawRequest)> = requests.into_iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| {
        (&a.meta, a.timestamp_ms, &a.url, &a.method, ia)
            .cmp(&(&b.meta, b.timestamp_ms, &b.url, &b.method, ib))
    });
    let requests = indexed
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut req))| {
            req.id = format!("r{:06}", i);
            req
        })
        .collect();

    Ok(Corpus { requests, warnings, trace_files })
}

/// Trace file paths listed in a manifest, without parsing the traces.
pub fn manifest_files(manifest_path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let manifest_path = manifest_path.as_ref();
    let bytes = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::json(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    Ok(manifest.traces.iter().map(|t| base.join(&t.file)).collect())
}

fn parse_trace_file(
    path: &Path,
    name: &str,
    format: TraceFormat,
    meta: &TraceMeta,
) -> Result<(Vec<RawRequest>, IngestWarnings)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        TraceFormat::Har => parse_har(&bytes, meta),
        TraceFormat::Bundle => parse_bundle(&bytes, name, meta),
    }
}

fn parse_bundle(
    bytes: &[u8],
    file: &str,
    meta: &TraceMeta,
) -> Result<(Vec<RawRequest>, IngestWarnings)> {
    let records: Vec<BundleRecord> = serde_json::from_slice(bytes).map_err(|e| {
        Error::TraceRecord { file: file.to_string(), message: e.to_string() }
    })?;

    let mut warnings = IngestWarnings::default();
    let mut out = Vec::new();
    for (idx, rec) in records.into_iter().enumerate() {
        match rec.direction.as_str() {
            "out" => {}
            "in" => {
                warnings.non_outgoing += 1;
                continue;
            }
            other => {
                return Err(Error::TraceRecord {
                    file: file.to_string(),
                    message: format!("record {idx}: unknown direction {other:?}"),
                });
            }
        }
        if url::Url::parse(&rec.url).is_err() {
            return Err(Error::TraceRecord {
                file: file.to_string(),
                message: format!("record {idx}: unparseable url {:?}", rec.url),
            });
        }
        if rec.encrypted && rec.body_text.is_some() {
            return Err(Error::TraceRecord {
                file: file.to_string(),
                message: format!("record {idx}: encrypted record carries a body"),
            });
        }
        let body = rec.body_text.map(|text| RequestBody {
            text,
            content_type: rec.content_type.clone(),
        });
        out.push(RawRequest {
            id: String::new(),
            meta: meta.clone(),
            url: rec.url,
            method: rec.method,
            headers: rec.headers,
            query_params: rec.query,
            body,
            encrypted: rec.encrypted,
            timestamp_ms: rec.ts_ms,
        });
    }
    Ok((out, warnings))
}

/// Mine raw keys for every request, preserving request order.
pub fn extract_all_keys(
    requests: &[RawRequest],
    options: &KeyExtractionOptions,
) -> (Vec<RawKey>, IngestWarnings) {
    let per_request = par::map_collect(requests, |req| extract_raw_keys(req, options));
    let mut keys = Vec::new();
    let mut warnings = IngestWarnings::default();
    for (ks, warn) in per_request {
        keys.extend(ks);
        warnings.absorb(warn);
    }
    (keys, warnings)
}

/// Per-service ingest statistics in the dataset-summary shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub service: String,
    pub requests: u64,
    pub domains: u64,
    pub eslds: u64,
    pub raw_keys: u64,
}

/// Tally per-service request/domain/eSLD/key counts plus unique totals.
pub fn corpus_stats(
    requests: &[RawRequest],
    keys: &[RawKey],
    esld_of: impl Fn(&str) -> Option<String>,
) -> (Vec<ServiceStats>, ServiceStats) {
    use std::collections::BTreeSet;

    let mut keys_by_request: BTreeMap<&str, Vec<&RawKey>> = BTreeMap::new();
    for key in keys {
        keys_by_request.entry(key.request_ref.as_str()).or_default().push(key);
    }

    let mut per_service: BTreeMap<&str, (u64, BTreeSet<String>, BTreeSet<String>, BTreeSet<&str>)> =
        BTreeMap::new();
    for req in requests {
        let entry = per_service.entry(req.meta.service.as_str()).or_default();
        entry.0 += 1;
        if let Ok(url) = url::Url::parse(&req.url) {
            if let Some(host) = url.host_str() {
                let host = host.to_ascii_lowercase();
                if let Some(esld) = esld_of(&host) {
                    entry.2.insert(esld);
                }
                entry.1.insert(host);
            }
        }
        if let Some(ks) = keys_by_request.get(req.id.as_str()) {
            for k in ks {
                entry.3.insert(k.key.as_str());
            }
        }
    }

    let mut all_domains = BTreeSet::new();
    let mut all_eslds = BTreeSet::new();
    let mut all_keys = BTreeSet::new();
    let mut total_requests = 0;
    let mut rows = Vec::new();
    for (service, (reqs, domains, eslds, raw)) in &per_service {
        rows.push(ServiceStats {
            service: service.to_string(),
            requests: *reqs,
            domains: domains.len() as u64,
            eslds: eslds.len() as u64,
            raw_keys: raw.len() as u64,
        });
        total_requests += reqs;
        all_domains.extend(domains.iter().cloned());
        all_eslds.extend(eslds.iter().cloned());
        all_keys.extend(raw.iter().map(|s| s.to_string()));
    }
    let total = ServiceStats {
        service: "Total".to_string(),
        requests: total_requests,
        domains: all_domains.len() as u64,
        eslds: all_eslds.len() as u64,
        raw_keys: all_keys.len() as u64,
    };
    (rows, total)
}
