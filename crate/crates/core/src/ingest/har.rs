//! HAR 1.2 request extraction.
//!
//! Only the request side of each entry is used; responses are ignored.

use serde::Deserialize;

use crate::error::{Error, Result};

use super::{IngestWarnings, RawRequest, RequestBody, TraceMeta};

#[derive(Deserialize)]
struct Har {
    log: HarLog,
}

#[derive(Deserialize)]
struct HarLog {
    #[serde(default)]
    entries: Vec<HarEntry>,
}

#[derive(Deserialize)]
struct HarEntry {
    #[serde(default, rename = "startedDateTime")]
    started_date_time: Option<String>,
    request: Option<HarRequest>,
}

#[derive(Deserialize)]
struct HarRequest {
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    headers: Vec<NameValue>,
    #[serde(default, rename = "queryString")]
    query_string: Vec<NameValue>,
    #[serde(default, rename = "postData")]
    post_data: Option<HarPostData>,
}

#[derive(Deserialize)]
struct NameValue {
    name: String,
    value: String,
}

#[derive(Deserialize)]
struct HarPostData {
    #[serde(default, rename = "mimeType")]
    mime_type: Option<String>,
    #[serde(default)]
    text: Option<String>,
}

/// Parse a HAR 1.2 document into one [`RawRequest`] per entry.
///
/// Entries without a parseable URL are skipped and counted. HAR traffic is
/// clear-text by construction, so `encrypted` is always false.
pub fn parse_har(bytes: &[u8], meta: &TraceMeta) -> Result<(Vec<RawRequest>, IngestWarnings)> {
    let har: Har =
        serde_json::from_slice(bytes).map_err(|e| Error::Har(e.to_string()))?;

    let mut warnings = IngestWarnings::default();
    let mut out = Vec::new();
    for entry in har.log.entries {
        let Some(request) = entry.request else {
            warnings.skipped_entries += 1;
            continue;
        };
        let Some(url) = request.url.filter(|u| !u.is_empty()) else {
            warnings.skipped_entries += 1;
            continue;
        };
        if url::Url::parse(&url).map(|u| u.host_str().is_none()).unwrap_or(true) {
            warnings.skipped_entries += 1;
            continue;
        }
        let body = request.post_data.and_then(|pd| {
            pd.text.map(|text| RequestBody { text, content_type: pd.mime_type })
        });
        out.push(RawRequest {
            id: String::new(),
            meta: meta.clone(),
            url,
            method: request.method.unwrap_or_else(|| "GET".to_string()),
            headers: request
                .headers
                .into_iter()
                .map(|nv| (nv.name, nv.value))
                .collect(),
            query_params: request
                .query_string
                .into_iter()
                .map(|nv| (nv.name, nv.value))
                .collect(),
            body,
            encrypted: false,
            timestamp_ms: entry
                .started_date_time
                .as_deref()
                .and_then(parse_iso_millis)
                .unwrap_or(0),
        });
    }
    Ok((out, warnings))
}

fn parse_iso_millis(s: &str) -> Option<i64> {
    chrono::DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.timestamp_millis())
}
