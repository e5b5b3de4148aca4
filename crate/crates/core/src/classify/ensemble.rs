//! Temperature-ensemble execution with retries, batching, and a persistent
//! result cache.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::par;
use crate::report::sha256_hex;

use super::client::{temperature_key, ChatClient, ChatRequest};
use super::normalize::normalize_key;
use super::prompt::{build_prompt, prompt_preamble};
use super::response::parse_llm_response;
use super::SingleRunResult;

#[derive(Debug, Clone)]
pub struct EnsembleSettings {
    pub model: String,
    pub temperatures: Vec<f64>,
    pub batch_size: usize,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            model: "gpt-4".into(),
            temperatures: super::DEFAULT_TEMPERATURES.to_vec(),
            batch_size: super::prompt::DEFAULT_BATCH_SIZE,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

/// Hash that keys cached results: model plus the prompt preamble (instructions
/// and the ontology's labels/examples). Batch composition does not affect it.
pub fn classification_prompt_hash(model: &str, ont: &Ontology) -> String {
    sha256_hex(format!("{model}\n{}", prompt_preamble(ont)).as_bytes())
}

/// Persistent per-key run cache, invalidated when the prompt hash changes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunCache {
    pub prompt_hash: String,
    /// Normalized key → runs (one per temperature).
    pub entries: BTreeMap<String, Vec<SingleRunResult>>,
}

impl RunCache {
    pub fn empty(prompt_hash: &str) -> Self {
        RunCache { prompt_hash: prompt_hash.to_string(), entries: BTreeMap::new() }
    }

    /// Load a cache file; a missing file or stale prompt hash yields an
    /// empty cache.
    pub fn load(path: impl AsRef<Path>, prompt_hash: &str) -> Self {
        let path = path.as_ref();
        match std::fs::read(path) {
            Ok(bytes) => match serde_json::from_slice::<RunCache>(&bytes) {
                Ok(cache) if cache.prompt_hash == prompt_hash => cache,
                _ => RunCache::empty(prompt_hash),
            },
            Err(_) => RunCache::empty(prompt_hash),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::json(path, e))?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Cached runs covering every requested temperature, or None.
    fn lookup(&self, normalized: &str, temperatures: &[f64]) -> Option<&Vec<SingleRunResult>> {
        let runs = self.entries.get(normalized)?;
        let have: Vec<String> = runs.iter().map(|r| temperature_key(r.temperature)).collect();
        temperatures
            .iter()
            .all(|t| have.contains(&temperature_key(*t)))
            .then_some(runs)
    }
}

#[derive(Debug)]
pub struct EnsembleOutcome {
    /// Raw key → one result per configured temperature, in temperature order.
    pub per_key: BTreeMap<String, Vec<SingleRunResult>>,
    pub remote_calls: u64,
    pub failed_calls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

/// Run the ensemble for the distinct raw keys, one result per
/// (key, temperature). Failed calls are retried, then recorded as
/// `parse_ok = false` placeholders; the run always continues.
pub fn run_ensemble(
    keys: &[String],
    client: &dyn ChatClient,
    ont: &Ontology,
    settings: &EnsembleSettings,
    mut cache: Option<&mut RunCache>,
) -> Result<EnsembleOutcome> {
    if settings.temperatures.is_empty() {
        return Err(Error::Classifier("no ensemble temperatures configured".into()));
    }
    let mut distinct: Vec<String> = keys.to_vec();
    distinct.sort();
    distinct.dedup();

    let mut per_key: BTreeMap<String, Vec<SingleRunResult>> = BTreeMap::new();
    let mut to_run: Vec<String> = Vec::new();
    let mut cache_hits = 0;
    for key in &distinct {
        let normalized = normalize_key(key).unwrap_or_else(|_| key.clone());
        let cached = cache
            .as_deref()
            .and_then(|c| c.lookup(&normalized, &settings.temperatures));
        match cached {
            Some(runs) => {
                cache_hits += 1;
                let runs = runs
                    .iter()
                    .map(|r| SingleRunResult { key: key.clone(), ..r.clone() })
                    .collect();
                per_key.insert(key.clone(), runs);
            }
            None => to_run.push(key.clone()),
        }
    }

    let calls = AtomicU64::new(0);
    let failures = AtomicU64::new(0);
    let batches: Vec<&[String]> = to_run.chunks(settings.batch_size.max(1)).collect();
    let mut jobs: Vec<(usize, f64)> = Vec::new();
    for batch_index in 0..batches.len() {
        for &temp in &settings.temperatures {
            jobs.push((batch_index, temp));
        }
    }

    let job_results: Vec<Result<Vec<SingleRunResult>>> =
        par::map_collect(&jobs, |&(batch_index, temp)| {
            let batch = batches[batch_index];
            let prompt = build_prompt(ont, batch, settings.batch_size.max(batch.len()))?;
            let request = ChatRequest {
                model: &settings.model,
                temperature: temp,
                prompt: &prompt,
                batch_keys: batch,
            };
            let mut last_error = String::new();
            for attempt in 0..=settings.retries {
                calls.fetch_add(1, Ordering::Relaxed);
                match client.complete(&request) {
                    Ok(text) => {
                        return Ok(parse_llm_response(&text, ont, batch, temp));
                    }
                    Err(e) => {
                        last_error = e.to_string();
                        if attempt < settings.retries && settings.backoff_ms > 0 {
                            let wait = settings.backoff_ms << attempt;
                            std::thread::sleep(std::time::Duration::from_millis(wait));
                        }
                    }
                }
            }
            failures.fetch_add(1, Ordering::Relaxed);
            Ok(batch
                .iter()
                .map(|key| {
                    SingleRunResult::failed(
                        key,
                        temp,
                        &format!(
                            "call failed after {} attempts: {last_error}",
                            settings.retries + 1
                        ),
                    )
                })
                .collect())
        });

    for result in job_results {
        for run in result? {
            per_key.entry(run.key.clone()).or_default().push(run);
        }
    }

    // Temperature order within each key, regardless of job scheduling.
    let order: Vec<String> = settings.temperatures.iter().map(|t| temperature_key(*t)).collect();
    for runs in per_key.values_mut() {
        runs.sort_by_key(|r| {
            order
                .iter()
                .position(|t| *t == temperature_key(r.temperature))
                .unwrap_or(usize::MAX)
        });
    }

    if let Some(cache) = cache.as_deref_mut() {
        for key in &to_run {
            if let Some(runs) = per_key.get(key) {
                let normalized = normalize_key(key).unwrap_or_else(|_| key.clone());
                cache.entries.insert(normalized, runs.clone());
            }
        }
    }

    Ok(EnsembleOutcome {
        per_key,
        remote_calls: calls.into_inner(),
        failed_calls: failures.into_inner(),
        cache_hits,
        cache_misses: to_run.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ReplayChatClient;
    use crate::ontology::load_ontology;
    use std::io::Write;

    fn ont() -> Ontology {
        load_ontology(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ontology.json")).unwrap()
    }

    fn replay(json: &str) -> ReplayChatClient {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(json.as_bytes()).unwrap();
        let mut client = ReplayChatClient::default();
        client.merge_file(&path).unwrap();
        client
    }

    fn settings() -> EnsembleSettings {
        EnsembleSettings { backoff_ms: 0, ..Default::default() }
    }

    #[test]
    fn one_key_five_temperatures_five_results() {
        let client = replay(
            r#"{"keys": {"email": {"*": "email // Contact Information // 0.9 // contact"}}}"#,
        );
        let out =
            run_ensemble(&["email".into()], &client, &ont(), &settings(), None).unwrap();
        let runs = &out.per_key["email"];
        assert_eq!(runs.len(), 5);
        assert!(runs.iter().all(|r| r.parse_ok));
        let temps: Vec<f64> = runs.iter().map(|r| r.temperature).collect();
        assert_eq!(temps, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(out.remote_calls, 5);
    }

    #[test]
    fn replay_runs_are_identical_across_executions() {
        let client = replay(
            r#"{"keys": {
                "email": {"*": "email // Contact Information // 0.9 // c"},
                "uid": {"*": "uid // Aliases // 0.8 // id"},
                "lang": {"*": "lang // Language // 0.7 // lang"}
            }}"#,
        );
        let keys = vec!["email".to_string(), "uid".to_string(), "lang".to_string()];
        let a = run_ensemble(&keys, &client, &ont(), &settings(), None).unwrap();
        let b = run_ensemble(&keys, &client, &ont(), &settings(), None).unwrap();
        assert_eq!(a.per_key, b.per_key);
    }

    #[test]
    fn call_failure_at_one_temperature_yields_placeholder() {
        let client = replay(
            r#"{"keys": {"email": {"*": "email // Contact Information // 0.9 // c"}},
                "call_failures": [{"temperature": 0.5}]}"#,
        );
        let out =
            run_ensemble(&["email".into()], &client, &ont(), &settings(), None).unwrap();
        let runs = &out.per_key["email"];
        assert_eq!(runs.len(), 5);
        assert_eq!(runs.iter().filter(|r| r.parse_ok).count(), 4);
        let failed = runs.iter().find(|r| !r.parse_ok).unwrap();
        assert_eq!(failed.temperature, 0.5);
        assert_eq!(out.failed_calls, 1);
        // 4 clean temps + 1 + retries attempts at the failing one.
        assert_eq!(out.remote_calls, 4 + 1 + 3);
    }

    #[test]
    fn warm_cache_avoids_remote_calls() {
        let client = replay(
            r#"{"keys": {"email": {"*": "email // Contact Information // 0.9 // c"}}}"#,
        );
        let ont = ont();
        let hash = classification_prompt_hash("gpt-4", &ont);
        let mut cache = RunCache::empty(&hash);
        let keys = vec!["email".to_string()];

        let cold = run_ensemble(&keys, &client, &ont, &settings(), Some(&mut cache)).unwrap();
        assert_eq!(cold.remote_calls, 5);
        assert_eq!(cold.cache_hits, 0);

        let warm = run_ensemble(&keys, &client, &ont, &settings(), Some(&mut cache)).unwrap();
        assert_eq!(warm.remote_calls, 0);
        assert_eq!(warm.cache_hits, 1);
        assert_eq!(warm.per_key, cold.per_key);
    }

    #[test]
    fn cache_round_trips_and_invalidates_on_prompt_change() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let mut cache = RunCache::empty("hash-a");
        cache.entries.insert(
            "email".into(),
            vec![SingleRunResult {
                key: "email".into(),
                label: Some("Contact Information".into()),
                confidence: 0.9,
                explanation: "c".into(),
                temperature: 0.0,
                parse_ok: true,
                error: None,
            }],
        );
        cache.save(&path).unwrap();
        assert_eq!(RunCache::load(&path, "hash-a").entries.len(), 1);
        assert!(RunCache::load(&path, "hash-b").entries.is_empty());
    }
}
