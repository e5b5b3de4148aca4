//! Stage orchestration: ingest → classify → audit → linkability, plus the
//! classifier validation harness.
//!
//! Stages communicate through line-delimited JSON stores under
//! `<out_dir>/store/` and write reports under `<out_dir>/reports/`, each
//! embedding run provenance. Stages are idempotent given unchanged inputs;
//! replay-mode runs are byte-reproducible end to end.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{
    apply_threshold, baseline_classify, classification_prompt_hash, majority_vote,
    run_ensemble, validate_against_sample, AccuracyReport, ChatClient, EnsembleSettings,
    LabeledSample, LiveChatClient, ReplayChatClient, RunCache, VotedLabel,
    DEFAULT_VALIDATION_THRESHOLDS,
};
use crate::config::{ClassifierMode, RunConfig};
use crate::destinations::{
    categorize_destination, extract_fqdn, Blocklists, DestinationRecord, EntityMap,
    PublicSuffixList, ServiceProfiles,
};
use crate::error::{Error, Result};
use crate::flows::{
    audit as run_audit_rules, build_flows, diff_age_groups, merge_age_traces, render_matrix,
    ClassifiedKey, ContactRecord, DataFlow, DisclosureSet, TraceCategory,
};
use crate::ingest::{
    corpus_stats, extract_all_keys, manifest_files, parse_capture_bundle,
    KeyExtractionOptions, RawKey, RawRequest, ServiceStats,
};
use crate::linkability::{
    alluvial_edges, count_linkable_third_parties, cross_context_sets,
    largest_and_common_sets, linkable_sets, top_ats_orgs,
};
use crate::ontology::{load_ontology, Ontology};
use crate::par;
use crate::report::{
    read_jsonl, render_grid, write_csv_report, write_json_report, write_jsonl,
    write_text_report, Provenance,
};

pub fn store_dir(config: &RunConfig) -> PathBuf {
    config.out_dir.join("store")
}

pub fn reports_dir(config: &RunConfig) -> PathBuf {
    config.out_dir.join("reports")
}

/// Classifier telemetry persisted by the classify stage so later stages
/// embed the same cache counters in their provenance.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct ClassifyTelemetry {
    cache_hits: u64,
    cache_misses: u64,
    remote_calls: u64,
}

fn telemetry_path(config: &RunConfig) -> PathBuf {
    store_dir(config).join("classify_telemetry.json")
}

fn load_telemetry(config: &RunConfig) -> ClassifyTelemetry {
    std::fs::read(telemetry_path(config))
        .ok()
        .and_then(|bytes| serde_json::from_slice(&bytes).ok())
        .unwrap_or_default()
}

/// Wall-clock timestamps only when a stage depends on a live remote
/// classifier; everything else is input-determined and reproducible.
fn live_classification(config: &RunConfig) -> bool {
    config.classifier.mode != ClassifierMode::Baseline
        && config.classifier.replay_dir.is_none()
}

fn build_provenance(
    config: &RunConfig,
    telemetry: ClassifyTelemetry,
    deterministic: bool,
    extra_inputs: &[PathBuf],
) -> Result<Provenance> {
    let mut input_files = config.input_hashes()?;
    for path in manifest_files(&config.corpus_manifest)? {
        input_files.insert(config.display_path(&path), crate::report::sha256_file(&path)?);
    }
    for path in extra_inputs {
        input_files.insert(config.display_path(path), crate::report::sha256_file(path)?);
    }
    Ok(Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config.raw_sha256.clone(),
        settings: config.settings_summary(),
        input_files,
        seed: config.seed,
        classifier_cache_hits: telemetry.cache_hits,
        classifier_cache_misses: telemetry.cache_misses,
        remote_calls: telemetry.remote_calls,
        timestamp: Provenance::timestamp_now(deterministic),
    })
}

fn replay_fixture_paths(config: &RunConfig) -> Vec<PathBuf> {
    let Some(dir) = &config.classifier.replay_dir else {
        return Vec::new();
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    paths
}

#[derive(Debug)]
pub struct IngestSummary {
    pub requests: usize,
    pub raw_keys: usize,
    pub services: Vec<ServiceStats>,
    pub total: ServiceStats,
}

/// Parse the corpus, mine raw keys, persist both stores, and write the
/// per-service dataset summary.
pub fn cmd_ingest(config: &RunConfig) -> Result<IngestSummary> {
    let corpus = parse_capture_bundle(&config.corpus_manifest)?;
    let options = KeyExtractionOptions {
        mine_header_keys: config.ingest.mine_header_keys,
        mine_cookie_keys: config.ingest.mine_cookie_keys,
    };
    let (keys, key_warnings) = extract_all_keys(&corpus.requests, &options);
    let mut warnings = corpus.warnings;
    warnings.absorb(key_warnings);

    let store = store_dir(config);
    write_jsonl(store.join("requests.jsonl"), &corpus.requests)?;
    write_jsonl(store.join("raw_keys.jsonl"), &keys)?;

    let psl = PublicSuffixList::load(&config.psl)?;
    let (services, total) =
        corpus_stats(&corpus.requests, &keys, |fqdn| psl.esld(fqdn).ok());

    let provenance = build_provenance(config, ClassifyTelemetry::default(), true, &[])?;
    let mut rows = vec![vec![
        "Service".to_string(),
        "Requests".to_string(),
        "Domains".to_string(),
        "eSLDs".to_string(),
        "Raw Keys".to_string(),
    ]];
    for s in services.iter().chain(std::iter::once(&total)) {
        rows.push(vec![
            s.service.clone(),
            s.requests.to_string(),
            s.domains.to_string(),
            s.eslds.to_string(),
            s.raw_keys.to_string(),
        ]);
    }
    let reports = reports_dir(config);
    let mut text = render_grid(&rows);
    text.push_str(&format!(
        "\nwarnings: skipped_entries={} non_outgoing={} unparsed_bodies={}\n",
        warnings.skipped_entries, warnings.non_outgoing, warnings.unparsed_bodies
    ));
    write_text_report(reports.join("stats.txt"), &provenance, &text)?;
    write_csv_report(reports.join("stats.csv"), &provenance, &rows)?;
    write_json_report(
        reports.join("stats.json"),
        &provenance,
        &serde_json::json!({
            "services": services,
            "total": total,
            "warnings": warnings,
        }),
    )?;

    Ok(IngestSummary {
        requests: corpus.requests.len(),
        raw_keys: keys.len(),
        services,
        total,
    })
}

#[derive(Debug)]
pub struct ClassifySummary {
    pub distinct_keys: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub cache_hits: u64,
    pub remote_calls: u64,
}

/// Classification engine shared by the classify stage and the validation
/// harness: distinct raw keys in, per-key outcomes out.
fn classify_keys(
    keys: &[String],
    config: &RunConfig,
    ont: &Ontology,
) -> Result<(BTreeMap<String, ClassifiedKey>, ClassifyTelemetry)> {
    let mut distinct: Vec<String> = keys.to_vec();
    distinct.sort();
    distinct.dedup();

    let threshold = config.classifier.threshold;
    let vote_mode = config.classifier.vote_mode;
    let mut out: BTreeMap<String, ClassifiedKey> = BTreeMap::new();
    let mut telemetry = ClassifyTelemetry::default();

    let baseline_first = matches!(
        config.classifier.mode,
        ClassifierMode::Baseline | ClassifierMode::BaselineThenEnsemble
    );
    let mut ensemble_keys: Vec<String> = Vec::new();
    if baseline_first {
        let results = par::map_collect(&distinct, |key| {
            (key.clone(), baseline_classify(key, ont))
        });
        for (key, result) in results {
            let normalized =
                crate::classify::normalize_key(&key).unwrap_or_else(|_| key.clone());
            match result {
                Some((label, confidence)) => {
                    let voted = VotedLabel {
                        key: key.clone(),
                        label,
                        confidence,
                        mode: vote_mode,
                        support: 1,
                        tied: false,
                    };
                    let labeled = apply_threshold(&voted, threshold);
                    out.insert(
                        key.clone(),
                        ClassifiedKey {
                            key,
                            normalized,
                            method: "baseline".into(),
                            voted: Some(voted),
                            labeled,
                            unlabeled_reason: (!labeled)
                                .then(|| "below_threshold".to_string()),
                        },
                    );
                }
                None if config.classifier.mode == ClassifierMode::BaselineThenEnsemble => {
                    ensemble_keys.push(key);
                }
                None => {
                    out.insert(
                        key.clone(),
                        ClassifiedKey {
                            key,
                            normalized,
                            method: "baseline".into(),
                            voted: None,
                            labeled: false,
                            unlabeled_reason: Some("no_match".into()),
                        },
                    );
                }
            }
        }
    } else {
        ensemble_keys = distinct.clone();
    }

    if !ensemble_keys.is_empty() {
        let client: Box<dyn ChatClient> = match &config.classifier.replay_dir {
            Some(dir) => Box::new(ReplayChatClient::load_dir(dir)?),
            None => Box::new(LiveChatClient::from_env(
                &config.classifier.endpoint,
                config.classifier.pacing_ms,
            )?),
        };
        let settings = EnsembleSettings {
            model: config.classifier.model.clone(),
            temperatures: config.classifier.temperatures.clone(),
            batch_size: config.classifier.batch_size,
            retries: config.classifier.retries,
            backoff_ms: config.classifier.backoff_ms,
        };
        let prompt_hash = classification_prompt_hash(&settings.model, ont);
        let mut cache = config
            .classifier
            .cache_file
            .as_ref()
            .map(|path| RunCache::load(path, &prompt_hash));

        let outcome = run_ensemble(
            &ensemble_keys,
            client.as_ref(),
            ont,
            &settings,
            cache.as_mut(),
        )?;
        telemetry.cache_hits = outcome.cache_hits;
        telemetry.cache_misses = outcome.cache_misses;
        telemetry.remote_calls = outcome.remote_calls;

        if let (Some(cache), Some(path)) = (&cache, &config.classifier.cache_file) {
            cache.save(path)?;
        }

        for (key, runs) in outcome.per_key {
            let normalized =
                crate::classify::normalize_key(&key).unwrap_or_else(|_| key.clone());
            let voted = majority_vote(&runs, vote_mode);
            let (labeled, reason) = match &voted {
                Some(v) => {
                    let keep = apply_threshold(v, threshold);
                    (keep, (!keep).then(|| "below_threshold".to_string()))
                }
                None => (false, Some("abstain".to_string())),
            };
            out.insert(
                key.clone(),
                ClassifiedKey {
                    key,
                    normalized,
                    method: "ensemble".into(),
                    voted,
                    labeled,
                    unlabeled_reason: reason,
                },
            );
        }
    }

    Ok((out, telemetry))
}

/// Classify the corpus's distinct raw keys and persist the voted-label store
/// plus the residual (unlabeled) report.
pub fn cmd_classify(config: &RunConfig) -> Result<ClassifySummary> {
    let ont = load_ontology(&config.ontology)?;
    let raw_keys: Vec<RawKey> = read_jsonl(store_dir(config).join("raw_keys.jsonl"))?;
    let distinct: Vec<String> = raw_keys.iter().map(|k| k.key.clone()).collect();

    let (classified, telemetry) = classify_keys(&distinct, config, &ont)?;
    let entries: Vec<&ClassifiedKey> = classified.values().collect();
    write_jsonl(store_dir(config).join("voted_labels.jsonl"), &entries)?;
    std::fs::write(
        telemetry_path(config),
        serde_json::to_vec_pretty(&telemetry).expect("telemetry serializes"),
    )
    .map_err(|e| Error::io(telemetry_path(config), e))?;

    let labeled = entries.iter().filter(|e| e.labeled).count();
    let residual: Vec<serde_json::Value> = entries
        .iter()
        .filter(|e| !e.labeled)
        .map(|e| {
            serde_json::json!({
                "key": e.key,
                "reason": e.unlabeled_reason,
                "confidence": e.voted.as_ref().map(|v| v.confidence),
                "label": e.voted.as_ref().map(|v| v.label.clone()),
            })
        })
        .collect();
    let provenance = build_provenance(
        config,
        telemetry,
        !live_classification(config),
        &replay_fixture_paths(config),
    )?;
    write_json_report(
        reports_dir(config).join("residual_keys.json"),
        &provenance,
        &serde_json::json!({
            "distinct_keys": entries.len(),
            "labeled": labeled,
            "unlabeled": residual.len(),
            "threshold": config.classifier.threshold,
            "vote_mode": config.classifier.vote_mode.display_name(),
            "keys": residual,
        }),
    )?;

    Ok(ClassifySummary {
        distinct_keys: entries.len(),
        labeled,
        unlabeled: residual.len(),
        cache_hits: telemetry.cache_hits,
        remote_calls: telemetry.remote_calls,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDestination {
    pub service: String,
    #[serde(flatten)]
    pub record: DestinationRecord,
}

#[derive(Debug)]
pub struct AuditSummary {
    pub flows: usize,
    pub findings: usize,
}

/// Categorize destinations, build and merge flows, run the differential
/// comparison and audit rules, and render the matrix.
pub fn cmd_audit(config: &RunConfig) -> Result<AuditSummary> {
    let ont = load_ontology(&config.ontology)?;
    let store = store_dir(config);
    let requests: Vec<RawRequest> = read_jsonl(store.join("requests.jsonl"))?;
    let raw_keys: Vec<RawKey> = read_jsonl(store.join("raw_keys.jsonl"))?;
    let classified: Vec<ClassifiedKey> = read_jsonl(store.join("voted_labels.jsonl"))?;

    let psl = PublicSuffixList::load(&config.psl)?;
    let blocklists = Blocklists::load(&config.blocklists)?;
    let mut entities = EntityMap::load(&config.entity_map)?;
    if let Some(path) = &config.owner_overrides {
        entities.apply_overrides(&EntityMap::load(path)?);
    }
    let profiles = ServiceProfiles::load(&config.service_profiles)?;

    // Distinct (service, fqdn) pairs; categorization is pure, so the memo
    // map built here behaves exactly as if absent.
    let mut pairs: Vec<(String, String, String)> = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for req in &requests {
        let (fqdn, _) = extract_fqdn(&req.url)?;
        if seen.insert((req.meta.service.clone(), fqdn.clone())) {
            pairs.push((req.meta.service.clone(), fqdn, req.url.clone()));
        }
    }
    let records = par::map_collect(&pairs, |(service, _, url)| {
        profiles
            .get(service)
            .and_then(|profile| categorize_destination(url, profile, &psl, &entities, &blocklists))
            .map(|record| (service.clone(), record))
    });
    let mut destinations: BTreeMap<(String, String), DestinationRecord> = BTreeMap::new();
    let mut destination_rows: Vec<ServiceDestination> = Vec::new();
    for record in records {
        let (service, record) = record?;
        destination_rows.push(ServiceDestination {
            service: service.clone(),
            record: record.clone(),
        });
        destinations.insert((service, record.fqdn.clone()), record);
    }
    destination_rows.sort_by(|a, b| {
        (&a.service, &a.record.fqdn).cmp(&(&b.service, &b.record.fqdn))
    });
    write_jsonl(store.join("destinations.jsonl"), &destination_rows)?;

    let mut keys_by_request: BTreeMap<String, Vec<RawKey>> = BTreeMap::new();
    for key in raw_keys {
        keys_by_request.entry(key.request_ref.clone()).or_default().push(key);
    }
    let labels: BTreeMap<String, ClassifiedKey> =
        classified.into_iter().map(|c| (c.key.clone(), c)).collect();

    let (flows, contacts) =
        build_flows(&requests, &keys_by_request, &labels, &destinations, &ont)?;
    let flows = merge_age_traces(flows);
    write_jsonl(store.join("flows.jsonl"), &flows)?;
    write_jsonl(store.join("contacts.jsonl"), &contacts)?;

    let diff = diff_age_groups(&flows, config.audit.granularity);
    let disclosures = match &config.disclosures {
        Some(path) => {
            let known: BTreeSet<String> =
                profiles.services().map(|s| s.to_string()).collect();
            DisclosureSet::load(path, &ont, &known)?
        }
        None => DisclosureSet::default(),
    };
    let findings = run_audit_rules(&flows, &disclosures, &ont, &diff, config.audit.r4_tau);
    let matrix = render_matrix(&flows, &ont);

    let telemetry = load_telemetry(config);
    let provenance =
        build_provenance(config, telemetry, true, &replay_fixture_paths(config))?;
    let reports = reports_dir(config);
    write_text_report(reports.join("matrix.txt"), &provenance, &matrix.render_text())?;
    write_json_report(reports.join("matrix.json"), &provenance, &matrix)?;
    write_json_report(
        reports.join("findings.json"),
        &provenance,
        &serde_json::json!({ "findings": findings }),
    )?;
    let mut finding_rows = vec![vec![
        "rule".to_string(),
        "severity".to_string(),
        "service".to_string(),
        "trace_category".to_string(),
        "category3".to_string(),
        "category2".to_string(),
        "dest_label".to_string(),
        "dest_esld".to_string(),
        "occurrences".to_string(),
        "explanation".to_string(),
    ]];
    for finding in &findings {
        let base = |explanation: &str| {
            vec![
                serde_json::to_value(finding.rule).unwrap().as_str().unwrap().to_string(),
                format!("{:?}", finding.severity).to_lowercase(),
                finding.service.clone(),
                finding
                    .trace_category
                    .map(|c| c.as_str().to_string())
                    .unwrap_or_default(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                explanation.to_string(),
            ]
        };
        if finding.flows.is_empty() {
            finding_rows.push(base(&finding.explanation));
        }
        for flow in &finding.flows {
            let mut row = base(&finding.explanation);
            row[4] = flow.category3.clone();
            row[5] = flow.category2.clone();
            row[6] = flow.dest_label.as_str().to_string();
            row[7] = flow.dest_esld.clone();
            row[8] = flow.occurrence_count.to_string();
            finding_rows.push(row);
        }
    }
    write_csv_report(reports.join("findings.csv"), &provenance, &finding_rows)?;
    write_json_report(reports.join("diff.json"), &provenance, &diff)?;

    Ok(AuditSummary { flows: flows.len(), findings: findings.len() })
}

/// Linkability reports: counts CSV, sets document, alluvial edge list.
pub fn cmd_linkability(config: &RunConfig) -> Result<()> {
    let ont = load_ontology(&config.ontology)?;
    let store = store_dir(config);
    let flows: Vec<DataFlow> = read_jsonl(store.join("flows.jsonl"))?;
    let contacts: Vec<ContactRecord> =
        read_jsonl(store.join("contacts.jsonl")).unwrap_or_default();

    let sets = linkable_sets(&flows, &ont)?;
    let mut universe: BTreeSet<(String, TraceCategory)> = flows
        .iter()
        .map(|f| (f.service.clone(), f.trace_category))
        .collect();
    universe.extend(contacts.iter().map(|c| (c.service.clone(), c.trace_category)));

    let counts = count_linkable_third_parties(&sets, &universe);
    let (largest, most_common) = largest_and_common_sets(&sets);
    let top = top_ats_orgs(&sets, config.linkability.top_n);
    let edges = alluvial_edges(&top);
    let cross = cross_context_sets(&sets, &ont)?;

    let telemetry = load_telemetry(config);
    let provenance =
        build_provenance(config, telemetry, true, &replay_fixture_paths(config))?;
    let reports = reports_dir(config);

    let mut count_rows = vec![vec![
        "service".to_string(),
        "trace_category".to_string(),
        "linkable_third_parties".to_string(),
    ]];
    for ((service, category), count) in &counts {
        count_rows.push(vec![
            service.clone(),
            category.as_str().to_string(),
            count.to_string(),
        ]);
    }
    write_csv_report(reports.join("linkability_counts.csv"), &provenance, &count_rows)?;

    let largest_json: Vec<serde_json::Value> = largest
        .iter()
        .map(|((service, category), entry)| {
            serde_json::json!({
                "service": service,
                "trace_category": category,
                "size": entry.size,
                "sets": entry.sets,
            })
        })
        .collect();
    let top_json: Vec<serde_json::Value> = top
        .iter()
        .map(|((service, category), ranks)| {
            serde_json::json!({
                "service": service,
                "trace_category": category,
                "organizations": ranks,
            })
        })
        .collect();
    write_json_report(
        reports.join("linkability_sets.json"),
        &provenance,
        &serde_json::json!({
            "sets": sets,
            "largest_per_cell": largest_json,
            "most_common": most_common,
            "top_ats_organizations": top_json,
            "cross_context": cross,
        }),
    )?;

    let mut edge_rows = vec![vec![
        "source".to_string(),
        "organization".to_string(),
        "weight".to_string(),
    ]];
    for (source, organization, weight) in &edges {
        edge_rows.push(vec![source.clone(), organization.clone(), weight.to_string()]);
    }
    write_csv_report(reports.join("linkability_alluvial.csv"), &provenance, &edge_rows)?;
    Ok(())
}

/// Classify a labeled sample's keys and score them at the standard
/// thresholds, mirroring the validation-table layout.
pub fn cmd_validate_classifier(
    config: &RunConfig,
    sample_path: &Path,
) -> Result<AccuracyReport> {
    let ont = load_ontology(&config.ontology)?;
    let mut sample = LabeledSample::load(sample_path, &ont)?;
    if let Some(size) = config.classifier.sample_size {
        sample = sample.subsample(size, config.seed);
    }

    let keys: Vec<String> = sample.items.iter().map(|i| i.key.clone()).collect();
    let (classified, telemetry) = classify_keys(&keys, config, &ont)?;
    let voted: BTreeMap<String, Option<VotedLabel>> = classified
        .into_iter()
        .map(|(key, entry)| (key, entry.voted))
        .collect();

    let method = match config.classifier.mode {
        ClassifierMode::Baseline => "Baseline".to_string(),
        _ => config.classifier.vote_mode.display_name().to_string(),
    };
    let report = validate_against_sample(
        &sample,
        &voted,
        &DEFAULT_VALIDATION_THRESHOLDS,
        &ont,
        &method,
    )?;

    let mut extra = replay_fixture_paths(config);
    extra.push(sample_path.to_path_buf());
    let provenance =
        build_provenance(config, telemetry, !live_classification(config), &extra)?;
    let reports = reports_dir(config);
    write_json_report(reports.join("accuracy.json"), &provenance, &report)?;
    write_csv_report(reports.join("accuracy.csv"), &provenance, &report.render_rows())?;
    write_text_report(reports.join("accuracy.txt"), &provenance, &report.render_text())?;
    Ok(report)
}

/// One-shot audit: ingest → classify → audit → linkability.
pub fn run_all(config: &RunConfig) -> Result<AuditSummary> {
    cmd_ingest(config)?;
    cmd_classify(config)?;
    let summary = cmd_audit(config)?;
    cmd_linkability(config)?;
    Ok(summary)
}
