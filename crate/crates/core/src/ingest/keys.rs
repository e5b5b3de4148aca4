//! Raw data-type key mining from request payloads.
//!
//! Leaf key names are the raw data types; the dotted path from the payload
//! root is kept as context metadata only. Extraction is total: content that
//! cannot be parsed degrades to an empty result with a counted warning.

use serde::{Deserialize, Serialize};

use super::{IngestWarnings, RawRequest};

/// Where a raw key was mined from.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum KeySource {
    Body,
    Query,
    Header,
}

/// A leaf key mined from one request.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawKey {
    /// Leaf key name (last segment of `path`).
    pub key: String,
    /// Dotted path from the payload root.
    pub path: String,
    pub source: KeySource,
    pub request_ref: String,
}

#[derive(Debug, Clone, Copy)]
pub struct KeyExtractionOptions {
    /// Mine header names as raw keys (off by default; headers feed
    /// destination analysis, not data-type classification).
    pub mine_header_keys: bool,
    /// Mine cookie names from Cookie headers (off by default).
    pub mine_cookie_keys: bool,
}

impl Default for KeyExtractionOptions {
    fn default() -> Self {
        KeyExtractionOptions { mine_header_keys: false, mine_cookie_keys: false }
    }
}

/// Mine the raw keys of one request in document order, deduplicated by
/// (key, path, source). Encrypted requests yield nothing.
pub fn extract_raw_keys(
    req: &RawRequest,
    options: &KeyExtractionOptions,
) -> (Vec<RawKey>, IngestWarnings) {
    let mut warnings = IngestWarnings::default();
    if req.encrypted {
        return (Vec::new(), warnings);
    }

    let mut out: Vec<RawKey> = Vec::new();
    let mut push = |key: &str, path: String, source: KeySource| {
        if key.is_empty() {
            return;
        }
        let candidate = RawKey {
            key: key.to_string(),
            path,
            source,
            request_ref: req.id.clone(),
        };
        if !out.contains(&candidate) {
            out.push(candidate);
        }
    };

    // Query parameters: declared fields plus any query string on the URL.
    for (name, _) in &req.query_params {
        push(name, name.clone(), KeySource::Query);
    }
    if let Ok(url) = url::Url::parse(&req.url) {
        for (name, _) in url.query_pairs() {
            push(&name, name.to_string(), KeySource::Query);
        }
    }

    if let Some(body) = &req.body {
        let content_type = body
            .content_type
            .as_deref()
            .unwrap_or("")
            .to_ascii_lowercase();
        if content_type.contains("json") || looks_like_json(&body.text) {
            match serde_json::from_str::<serde_json::Value>(&body.text) {
                Ok(value) => walk_json(&value, &mut Vec::new(), &mut push),
                Err(_) => warnings.unparsed_bodies += 1,
            }
        } else if content_type.contains("x-www-form-urlencoded") {
            for (name, _) in url::form_urlencoded::parse(body.text.as_bytes()) {
                push(&name, name.to_string(), KeySource::Body);
            }
        } else {
            // Plain text, binary, protobuf: skipped and counted, not decoded.
            warnings.unparsed_bodies += 1;
        }
    }

    if options.mine_header_keys {
        for (name, _) in &req.headers {
            push(name, name.clone(), KeySource::Header);
        }
    }
    if options.mine_cookie_keys {
        for (name, value) in &req.headers {
            if name.eq_ignore_ascii_case("cookie") {
                for pair in value.split(';') {
                    if let Some(cookie_name) = pair.split('=').next() {
                        let cookie_name = cookie_name.trim();
                        push(cookie_name, format!("cookie.{cookie_name}"), KeySource::Header);
                    }
                }
            }
        }
    }

    (out, warnings)
}

fn looks_like_json(text: &str) -> bool {
    matches!(text.trim_start().as_bytes().first(), Some(b'{') | Some(b'['))
}

// Objects contribute path segments; arrays are traversed transparently.
// A key is a leaf when its value is a scalar or an array of scalars.
fn walk_json(
    value: &serde_json::Value,
    path: &mut Vec<String>,
    push: &mut impl FnMut(&str, String, KeySource),
) {
    match value {
        serde_json::Value::Object(map) => {
            for (key, child) in map {
                path.push(key.clone());
                match child {
                    serde_json::Value::Object(_) | serde_json::Value::Array(_) => {
                        walk_json(child, path, push);
                    }
                    _ => push(key, path.join("."), KeySource::Body),
                }
                path.pop();
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                match item {
                    serde_json::Value::Object(_) | serde_json::Value::Array(_) => {
                        walk_json(item, path, push);
                    }
                    _ => {
                        // Scalar inside an array: the owning key (if any) is
                        // the leaf; arrays never contribute index segments.
                        if let Some(key) = path.last().cloned() {
                            push(&key, path.join("."), KeySource::Body);
                        }
                    }
                }
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AgeGroup, Platform, RequestBody, TraceKind, TraceMeta};

    fn request(url: &str, body: Option<(&str, &str)>) -> RawRequest {
        RawRequest {
            id: "r000000".into(),
            meta: TraceMeta {
                service: "svc".into(),
                platform: Platform::Web,
                trace_kind: TraceKind::LoggedOut,
                age_group: AgeGroup::None,
            },
            url: url.into(),
            method: "POST".into(),
            headers: vec![],
            query_params: vec![],
            body: body.map(|(text, ct)| RequestBody {
                text: text.into(),
                content_type: Some(ct.into()),
            }),
            encrypted: false,
            timestamp_ms: 0,
        }
    }

    fn keys_of(req: &RawRequest) -> Vec<(String, String, KeySource)> {
        let (keys, _) = extract_raw_keys(req, &KeyExtractionOptions::default());
        keys.into_iter().map(|k| (k.key, k.path, k.source)).collect()
    }

    #[test]
    fn single_leaf_key() {
        let req = request(
            "https://a.example.com/x",
            Some((r#"{"email":"a@b.c"}"#, "application/json")),
        );
        assert_eq!(
            keys_of(&req),
            vec![("email".into(), "email".into(), KeySource::Body)]
        );
    }

    #[test]
    fn nested_object_paths() {
        let req = request(
            "https://a.example.com/x",
            Some((
                r#"{"device":{"os":"android","screen":{"w":1080}}}"#,
                "application/json",
            )),
        );
        assert_eq!(
            keys_of(&req),
            vec![
                ("os".into(), "device.os".into(), KeySource::Body),
                ("w".into(), "device.screen.w".into(), KeySource::Body),
            ]
        );
    }

    #[test]
    fn query_parameters_from_url() {
        let req = request("https://a.example.com/x?lang=en&uid=7", None);
        assert_eq!(
            keys_of(&req),
            vec![
                ("lang".into(), "lang".into(), KeySource::Query),
                ("uid".into(), "uid".into(), KeySource::Query),
            ]
        );
    }

    #[test]
    fn arrays_do_not_contribute_index_segments() {
        let req = request(
            "https://a.example.com/x",
            Some((
                r#"{"events":[{"name":"click"},{"name":"scroll"}],"tags":["a","b"]}"#,
                "application/json",
            )),
        );
        assert_eq!(
            keys_of(&req),
            vec![
                ("name".into(), "events.name".into(), KeySource::Body),
                ("tags".into(), "tags".into(), KeySource::Body),
            ]
        );
    }

    #[test]
    fn form_urlencoded_body_fields() {
        let req = request(
            "https://a.example.com/x",
            Some(("user=a&password=b", "application/x-www-form-urlencoded")),
        );
        assert_eq!(
            keys_of(&req),
            vec![
                ("user".into(), "user".into(), KeySource::Body),
                ("password".into(), "password".into(), KeySource::Body),
            ]
        );
    }

    #[test]
    fn unparseable_body_degrades_to_empty_with_warning() {
        let req = request("https://a.example.com/x", Some(("\x00\x01binary", "application/octet-stream")));
        let (keys, warnings) = extract_raw_keys(&req, &KeyExtractionOptions::default());
        assert!(keys.is_empty());
        assert_eq!(warnings.unparsed_bodies, 1);

        let req = request("https://a.example.com/x", Some(("{broken json", "application/json")));
        let (keys, warnings) = extract_raw_keys(&req, &KeyExtractionOptions::default());
        assert!(keys.is_empty());
        assert_eq!(warnings.unparsed_bodies, 1);
    }

    #[test]
    fn headers_mined_only_when_enabled() {
        let mut req = request("https://a.example.com/x", None);
        req.headers = vec![
            ("User-Agent".into(), "x".into()),
            ("Cookie".into(), "sid=1; theme=dark".into()),
        ];
        assert!(keys_of(&req).is_empty());

        let opts = KeyExtractionOptions { mine_header_keys: true, mine_cookie_keys: true };
        let (keys, _) = extract_raw_keys(&req, &opts);
        let names: Vec<&str> = keys.iter().map(|k| k.key.as_str()).collect();
        assert_eq!(names, vec!["User-Agent", "Cookie", "sid", "theme"]);
        assert_eq!(keys[2].path, "cookie.sid");
        assert_eq!(keys[2].source, KeySource::Header);
    }

    #[test]
    fn duplicates_within_one_request_are_deduplicated() {
        let req = request(
            "https://a.example.com/x?uid=1&uid=2",
            Some((r#"{"tags":["a","b","c"]}"#, "application/json")),
        );
        let keys = keys_of(&req);
        assert_eq!(
            keys,
            vec![
                ("uid".into(), "uid".into(), KeySource::Query),
                ("tags".into(), "tags".into(), KeySource::Body),
            ]
        );
    }

    #[test]
    fn key_is_last_path_segment() {
        let req = request(
            "https://a.example.com/x",
            Some((r#"{"a":{"b":{"c":1}},"d":[{"e":{"f":2}}]}"#, "application/json")),
        );
        for key in keys_of(&req) {
            assert_eq!(key.1.rsplit('.').next().unwrap(), key.0);
        }
    }

    // Paths are prefix-free addresses: following a path through the body
    // (arrays traversed transparently) must land on a leaf value.
    #[test]
    fn paths_resolve_to_leaves() {
        let body = r#"{"a":{"b":1,"c":[{"d":2},{"d":3}]},"e":[4,5],"f":"x"}"#;
        let req = request("https://a.example.com/x", Some((body, "application/json")));
        let value: serde_json::Value = serde_json::from_str(body).unwrap();
        for key in keys_of(&req) {
            let segments: Vec<&str> = key.1.split('.').collect();
            assert!(resolves_to_leaf(&value, &segments), "path {}", key.1);
        }
    }

    fn resolves_to_leaf(value: &serde_json::Value, segments: &[&str]) -> bool {
        match value {
            serde_json::Value::Array(items) => {
                items.iter().any(|item| resolves_to_leaf(item, segments))
            }
            serde_json::Value::Object(map) => match segments.split_first() {
                Some((head, rest)) => {
                    map.get(*head).map_or(false, |child| resolves_to_leaf(child, rest))
                }
                None => false,
            },
            _ => segments.is_empty(),
        }
    }
}
