//! Chat-completion clients: a live HTTP client and a recorded-fixture
//! replay client for offline, deterministic runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::error::{Error, Result};

/// One classification call: a prompt at one temperature. `batch_keys` lists
/// the raw keys the prompt ends with; the live client ignores it, the replay
/// client uses it to assemble the recorded response.
#[derive(Debug)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub temperature: f64,
    pub prompt: &'a str,
    pub batch_keys: &'a [String],
}

pub trait ChatClient: Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String>;
    fn describe(&self) -> String;
}

/// Environment variables checked (in order) for the live API key.
pub const API_KEY_ENV_VARS: [&str; 2] = ["DIFFAUDIT_API_KEY", "OPENAI_API_KEY"];

/// Blocking client for an OpenAI-compatible chat-completions endpoint.
pub struct LiveChatClient {
    endpoint: String,
    api_key: String,
    http: reqwest::blocking::Client,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
}

impl LiveChatClient {
    /// Credentials come from the environment, never from config files.
    pub fn from_env(endpoint: &str, pacing_ms: u64) -> Result<Self> {
        let api_key = API_KEY_ENV_VARS
            .iter()
            .find_map(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty())
            .ok_or_else(|| {
                Error::Classifier(format!(
                    "live classification needs an API key in one of: {}",
                    API_KEY_ENV_VARS.join(", ")
                ))
            })?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Classifier(format!("http client: {e}")))?;
        Ok(LiveChatClient {
            endpoint: endpoint.to_string(),
            api_key,
            http,
            min_interval: Duration::from_millis(pacing_ms),
            last_call: Mutex::new(None),
        })
    }

    fn pace(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last_call.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl ChatClient for LiveChatClient {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String> {
        self.pace();
        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| Error::Classifier(format!("request failed: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Classifier(format!(
                "endpoint returned {status}: {}",
                response.text().unwrap_or_default()
            )));
        }
        let parsed: CompletionResponse = response
            .json()
            .map_err(|e| Error::Classifier(format!("unexpected response shape: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Classifier("response carried no choices".into()))
    }

    fn describe(&self) -> String {
        format!("live:{}", self.endpoint)
    }
}

/// Recorded per-key response lines, keyed by temperature.
///
/// Fixture files are JSON documents:
///
/// ```json
/// {
///   "keys": {
///     "email": {"*": "email // Contact Information // 0.95 // contact detail",
///                "0.5": "email // Name // 0.60 // hotter run drifts"}
///   },
///   "call_failures": [{"temperature": 0.5}],
///   "extra_lines": {"0.75": ["stray line the model emitted"]}
/// }
/// ```
///
/// `"*"` records the line used at any temperature without a specific entry;
/// a key with no entry at all produces no line, which downstream parsing
/// turns into a placeholder. `call_failures` makes every call at that
/// temperature fail, exercising the retry-then-placeholder path.
#[derive(Debug, Default, Clone)]
pub struct ReplayChatClient {
    keys: BTreeMap<String, BTreeMap<String, String>>,
    call_failures: Vec<String>,
    extra_lines: BTreeMap<String, Vec<String>>,
    sources: Vec<std::path::PathBuf>,
}

#[derive(Deserialize)]
struct ReplayFile {
    #[serde(default)]
    keys: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    call_failures: Vec<CallFailure>,
    #[serde(default)]
    extra_lines: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct CallFailure {
    temperature: f64,
}

/// Canonical map key for a temperature ("0", "0.25", "1").
pub fn temperature_key(t: f64) -> String {
    format!("{t}")
}

impl ReplayChatClient {
    /// Load and merge every `*.json` fixture in a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(Error::Classifier(format!(
                "replay directory {} contains no .json fixtures",
                dir.display()
            )));
        }
        let mut client = ReplayChatClient::default();
        for path in entries {
            client.merge_file(&path)?;
        }
        Ok(client)
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: ReplayFile =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        for (key, per_temp) in file.keys {
            self.keys.entry(key).or_default().extend(per_temp);
        }
        for failure in file.call_failures {
            self.call_failures.push(temperature_key(failure.temperature));
        }
        for (temp, lines) in file.extra_lines {
            self.extra_lines.entry(temp).or_default().extend(lines);
        }
        self.sources.push(path.to_path_buf());
        Ok(())
    }

    pub fn fixture_files(&self) -> &[std::path::PathBuf] {
        &self.sources
    }
}

impl ChatClient for ReplayChatClient {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String> {
        let temp = temperature_key(request.temperature);
        if self.call_failures.contains(&temp) {
            return Err(Error::Classifier(format!(
                "recorded call failure at temperature {temp}"
            )));
        }
        let mut lines = Vec::new();
        for key in request.batch_keys {
            if let Some(per_temp) = self.keys.get(key) {
                if let Some(line) = per_temp.get(&temp).or_else(|| per_temp.get("*")) {
                    lines.push(line.clone());
                }
            }
        }
        if let Some(extra) = self.extra_lines.get(&temp) {
            lines.extend(extra.iter().cloned());
        }
        Ok(lines.join("\n"))
    }

    fn describe(&self) -> String {
        "replay".to_string()
    }
}
