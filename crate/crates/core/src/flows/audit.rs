//! Audit rules over merged flows and a declared-disclosures config.
//!
//! R1: any data flow while logged out (pre-consent, pre-age-disclosure),
//!     severity stratified by destination label.
//! R2: child or adolescent flows shared with third-party ATS.
//! R3: age-specific flows whose (level-2 category, destination label) pair
//!     is not among the service's declared disclosures for that age group.
//! R4: no age differentiation: child↔adult and adolescent↔adult flow sets
//!     both at or above the similarity threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::destinations::DestLabel;
use crate::error::{Error, Result};
use crate::ontology::{normalize_label, Ontology};

use super::diff::DiffReport;
use super::{DataFlow, TraceCategory};

pub const DEFAULT_R4_TAU: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "R1_preconsent")]
    R1Preconsent,
    #[serde(rename = "R2_minor_ats_sharing")]
    R2MinorAtsSharing,
    #[serde(rename = "R3_undisclosed")]
    R3Undisclosed,
    #[serde(rename = "R4_no_age_differentiation")]
    R4NoAgeDifferentiation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    High,
    Medium,
    Low,
    Info,
}

/// Compact reference to an offending flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRef {
    pub category3: String,
    pub category2: String,
    pub dest_label: DestLabel,
    pub dest_esld: String,
    pub occurrence_count: u64,
}

impl FlowRef {
    fn of(flow: &DataFlow) -> FlowRef {
        FlowRef {
            category3: flow.category3.clone(),
            category2: flow.category2.clone(),
            dest_label: flow.dest_label,
            dest_esld: flow.dest_esld.clone(),
            occurrence_count: flow.occurrence_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R4Scores {
    pub child_vs_adult: f64,
    pub adolescent_vs_adult: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub rule: RuleId,
    pub severity: Severity,
    pub service: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_category: Option<TraceCategory>,
    pub flows: Vec<FlowRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<R4Scores>,
    pub explanation: String,
}

/// Allowed (level-2 category, destination label) pairs per service and age
/// group, transcribed from privacy policies with citations.
#[derive(Debug, Clone, Default)]
pub struct DisclosureSet {
    // service -> trace category -> set of (normalized category2, label)
    allowed: BTreeMap<String, BTreeMap<TraceCategory, BTreeSet<(String, DestLabel)>>>,
    services: BTreeSet<String>,
}

#[derive(Deserialize)]
struct DisclosureEntry {
    category: String,
    dest_label: DestLabel,
    #[allow(dead_code)]
    citation: String,
}

impl DisclosureSet {
    /// Load a disclosures file: service → age group → allowed pairs. Every
    /// category must be a known level-2 name and every service must be among
    /// `known_services`.
    pub fn load(
        path: impl AsRef<Path>,
        ont: &Ontology,
        known_services: &BTreeSet<String>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, BTreeMap<String, Vec<DisclosureEntry>>> =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;

        let mut set = DisclosureSet::default();
        for (service, by_age) in raw {
            if !known_services.contains(&service) {
                return Err(Error::Disclosures(format!(
                    "unknown service {service:?} (not in the corpus or profiles)"
                )));
            }
            for (age, entries) in by_age {
                let category = match age.as_str() {
                    "child" => TraceCategory::Child,
                    "adolescent" => TraceCategory::Adolescent,
                    "adult" => TraceCategory::Adult,
                    other => {
                        return Err(Error::Disclosures(format!(
                            "unknown age group {other:?} for service {service:?}"
                        )))
                    }
                };
                for entry in entries {
                    if ont.level2_kind(&entry.category).is_none() {
                        return Err(Error::Disclosures(format!(
                            "category {:?} is not a level-2 name",
                            entry.category
                        )));
                    }
                    set.allowed
                        .entry(service.clone())
                        .or_default()
                        .entry(category)
                        .or_default()
                        .insert((normalize_label(&entry.category), entry.dest_label));
                }
            }
            set.services.insert(service);
        }
        Ok(set)
    }

    pub fn allows(
        &self,
        service: &str,
        category: TraceCategory,
        category2: &str,
        label: DestLabel,
    ) -> bool {
        self.allowed
            .get(service)
            .and_then(|by_age| by_age.get(&category))
            .is_some_and(|pairs| pairs.contains(&(normalize_label(category2), label)))
    }
}

fn r1_severity(label: DestLabel) -> Severity {
    match label {
        DestLabel::ThirdAts => Severity::High,
        DestLabel::Third => Severity::Medium,
        DestLabel::FirstAts => Severity::Low,
        DestLabel::First => Severity::Info,
    }
}

/// Evaluate R1-R4 over merged flows. `diff` supplies the similarity scores
/// R4 needs, at the report's configured granularity.
pub fn audit(
    flows: &[DataFlow],
    disclosures: &DisclosureSet,
    _ont: &Ontology,
    diff: &DiffReport,
    tau: f64,
) -> Vec<AuditFinding> {
    let mut findings = Vec::new();
    let services: BTreeSet<&String> = flows.iter().map(|f| &f.service).collect();

    for service in services {
        let of_service: Vec<&DataFlow> =
            flows.iter().filter(|f| f.service == *service).collect();

        // R1: every logged-out flow carries law-protected data by
        // construction (labels map to identifiers or personal information).
        for label in [
            DestLabel::ThirdAts,
            DestLabel::Third,
            DestLabel::FirstAts,
            DestLabel::First,
        ] {
            let offending: Vec<FlowRef> = of_service
                .iter()
                .filter(|f| f.trace_category == TraceCategory::LoggedOut && f.dest_label == label)
                .map(|f| FlowRef::of(f))
                .collect();
            if !offending.is_empty() {
                findings.push(AuditFinding {
                    rule: RuleId::R1Preconsent,
                    severity: r1_severity(label),
                    service: service.clone(),
                    trace_category: Some(TraceCategory::LoggedOut),
                    explanation: format!(
                        "{} data flow(s) to {} destinations observed while logged out, before consent and age disclosure",
                        offending.len(),
                        label.as_str()
                    ),
                    flows: offending,
                    similarity: None,
                });
            }
        }

        // R2: child/adolescent data shared with third-party ATS.
        for category in [TraceCategory::Child, TraceCategory::Adolescent] {
            let offending: Vec<FlowRef> = of_service
                .iter()
                .filter(|f| {
                    f.trace_category == category && f.dest_label == DestLabel::ThirdAts
                })
                .map(|f| FlowRef::of(f))
                .collect();
            if !offending.is_empty() {
                findings.push(AuditFinding {
                    rule: RuleId::R2MinorAtsSharing,
                    severity: Severity::High,
                    service: service.clone(),
                    trace_category: Some(category),
                    explanation: format!(
                        "{} {} data flow(s) shared with third-party ATS destinations",
                        offending.len(),
                        category.as_str()
                    ),
                    flows: offending,
                    similarity: None,
                });
            }
        }

        // R3: age-specific flows not covered by declared disclosures.
        for category in TraceCategory::AGE_SPECIFIC {
            let offending: Vec<FlowRef> = of_service
                .iter()
                .filter(|f| {
                    f.trace_category == category
                        && !disclosures.allows(service, category, &f.category2, f.dest_label)
                })
                .map(|f| FlowRef::of(f))
                .collect();
            if !offending.is_empty() {
                let severity = if offending.iter().any(|f| f.dest_label == DestLabel::ThirdAts)
                {
                    Severity::High
                } else {
                    Severity::Medium
                };
                findings.push(AuditFinding {
                    rule: RuleId::R3Undisclosed,
                    severity,
                    service: service.clone(),
                    trace_category: Some(category),
                    explanation: format!(
                        "{} {} data flow(s) with (category, destination) pairs not declared in the disclosures file",
                        offending.len(),
                        category.as_str()
                    ),
                    flows: offending,
                    similarity: None,
                });
            }
        }

        // R4: no age differentiation relative to the adult baseline.
        let child = diff.jaccard_for(service, TraceCategory::Child, TraceCategory::Adult);
        let adolescent =
            diff.jaccard_for(service, TraceCategory::Adolescent, TraceCategory::Adult);
        if let (Some(child), Some(adolescent)) = (child, adolescent) {
            if child >= tau && adolescent >= tau {
                findings.push(AuditFinding {
                    rule: RuleId::R4NoAgeDifferentiation,
                    severity: Severity::Medium,
                    service: service.clone(),
                    trace_category: None,
                    flows: Vec::new(),
                    similarity: Some(R4Scores {
                        child_vs_adult: child,
                        adolescent_vs_adult: adolescent,
                        tau,
                    }),
                    explanation: format!(
                        "flow sets barely differ across age groups (child vs adult {child:.3}, adolescent vs adult {adolescent:.3}, threshold {tau})"
                    ),
                });
            }
        }
    }

    findings.sort_by(|a, b| {
        (&a.service, a.rule, a.severity, a.trace_category)
            .cmp(&(&b.service, b.rule, b.severity, b.trace_category))
    });
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::diff::{diff_age_groups, Granularity};
    use crate::flows::testutil::flow;
    use crate::ingest::{Platform, TraceKind};
    use crate::ontology::load_ontology;
    use std::io::Write;

    fn ont() -> Ontology {
        load_ontology(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ontology.json")).unwrap()
    }

    fn run_audit(flows: &[DataFlow], disclosures: &DisclosureSet) -> Vec<AuditFinding> {
        let diff = diff_age_groups(flows, Granularity::Level2);
        audit(flows, disclosures, &ont(), &diff, DEFAULT_R4_TAU)
    }

    fn rules_of(findings: &[AuditFinding]) -> BTreeSet<RuleId> {
        findings.iter().map(|f| f.rule).collect()
    }

    #[test]
    fn child_third_ats_flow_fires_r2_and_r3() {
        let flows = vec![flow(
            "svc",
            TraceCategory::Child,
            TraceKind::LoggedIn,
            Platform::Web,
            "Device Hardware Identifiers",
            "Device Identifiers",
            DestLabel::ThirdAts,
            "doubleclick.net",
        )];
        let findings = run_audit(&flows, &DisclosureSet::default());
        assert!(rules_of(&findings).contains(&RuleId::R2MinorAtsSharing));
        assert!(rules_of(&findings).contains(&RuleId::R3Undisclosed));
        for finding in &findings {
            if finding.rule != RuleId::R4NoAgeDifferentiation {
                assert!(!finding.flows.is_empty());
            }
        }
    }

    #[test]
    fn logged_out_flow_fires_r1() {
        let flows = vec![flow(
            "svc",
            TraceCategory::LoggedOut,
            TraceKind::LoggedOut,
            Platform::Web,
            "Coarse Geolocation",
            "Geolocation",
            DestLabel::First,
            "svc.com",
        )];
        let findings = run_audit(&flows, &DisclosureSet::default());
        let r1: Vec<&AuditFinding> = findings
            .iter()
            .filter(|f| f.rule == RuleId::R1Preconsent)
            .collect();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1[0].severity, Severity::Info);
        assert_eq!(r1[0].trace_category, Some(TraceCategory::LoggedOut));
    }

    #[test]
    fn r1_severity_is_stratified_by_destination_label() {
        let mk = |label, esld: &str| {
            flow(
                "svc",
                TraceCategory::LoggedOut,
                TraceKind::LoggedOut,
                Platform::Web,
                "Aliases",
                "Personal Identifiers",
                label,
                esld,
            )
        };
        let flows = vec![
            mk(DestLabel::ThirdAts, "ats.com"),
            mk(DestLabel::Third, "third.com"),
            mk(DestLabel::FirstAts, "svc-metrics.com"),
            mk(DestLabel::First, "svc.com"),
        ];
        let findings = run_audit(&flows, &DisclosureSet::default());
        let severities: Vec<Severity> = findings
            .iter()
            .filter(|f| f.rule == RuleId::R1Preconsent)
            .map(|f| f.severity)
            .collect();
        assert_eq!(
            severities,
            vec![Severity::High, Severity::Medium, Severity::Low, Severity::Info]
        );
    }

    fn disclosures(json: &str, services: &[&str]) -> DisclosureSet {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(json.as_bytes()).unwrap();
        let known: BTreeSet<String> = services.iter().map(|s| s.to_string()).collect();
        DisclosureSet::load(f.path(), &ont(), &known).unwrap()
    }

    #[test]
    fn disclosed_pair_suppresses_r3() {
        let flows = vec![flow(
            "svc",
            TraceCategory::Child,
            TraceKind::LoggedIn,
            Platform::Web,
            "Communications",
            "User Communications",
            DestLabel::First,
            "svc.com",
        )];
        let d = disclosures(
            r#"{"svc": {"child": [
                {"category": "User Communications", "dest_label": "first",
                 "citation": "policy section 3"}
            ]}}"#,
            &["svc"],
        );
        let findings = run_audit(&flows, &d);
        assert!(!rules_of(&findings).contains(&RuleId::R3Undisclosed));
    }

    #[test]
    fn r3_count_shrinks_as_disclosures_grow() {
        let flows = vec![
            flow(
                "svc",
                TraceCategory::Child,
                TraceKind::LoggedIn,
                Platform::Web,
                "Communications",
                "User Communications",
                DestLabel::First,
                "svc.com",
            ),
            flow(
                "svc",
                TraceCategory::Child,
                TraceKind::LoggedIn,
                Platform::Web,
                "Age",
                "Personal Characteristics",
                DestLabel::First,
                "svc.com",
            ),
        ];
        let count = |d: &DisclosureSet| {
            run_audit(&flows, d)
                .iter()
                .filter(|f| f.rule == RuleId::R3Undisclosed)
                .map(|f| f.flows.len())
                .sum::<usize>()
        };
        let none = DisclosureSet::default();
        let one = disclosures(
            r#"{"svc": {"child": [
                {"category": "User Communications", "dest_label": "first", "citation": "c"}
            ]}}"#,
            &["svc"],
        );
        let both = disclosures(
            r#"{"svc": {"child": [
                {"category": "User Communications", "dest_label": "first", "citation": "c"},
                {"category": "Personal Characteristics", "dest_label": "first", "citation": "c"}
            ]}}"#,
            &["svc"],
        );
        assert!(count(&none) >= count(&one));
        assert!(count(&one) >= count(&both));
        assert_eq!(count(&both), 0);
    }

    #[test]
    fn unknown_service_in_disclosures_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(br#"{"ghost": {"child": []}}"#).unwrap();
        let known: BTreeSet<String> = BTreeSet::from(["svc".to_string()]);
        assert!(DisclosureSet::load(f.path(), &ont(), &known).is_err());
    }

    #[test]
    fn r4_fires_only_when_both_pairs_are_similar() {
        let mk = |cat, esld: &str| {
            flow(
                "svc",
                cat,
                TraceKind::LoggedIn,
                Platform::Web,
                "Aliases",
                "Personal Identifiers",
                DestLabel::Third,
                esld,
            )
        };
        // Identical flow sets across all three age groups.
        let same = vec![
            mk(TraceCategory::Child, "a.com"),
            mk(TraceCategory::Adolescent, "a.com"),
            mk(TraceCategory::Adult, "a.com"),
        ];
        let findings = run_audit(&same, &DisclosureSet::default());
        let r4 = findings
            .iter()
            .find(|f| f.rule == RuleId::R4NoAgeDifferentiation)
            .expect("R4 fires");
        assert_eq!(r4.similarity.as_ref().unwrap().child_vs_adult, 1.0);

        // Child differs enough: no R4.
        let diverged = vec![
            mk(TraceCategory::Child, "unique-child.com"),
            mk(TraceCategory::Adolescent, "a.com"),
            mk(TraceCategory::Adult, "a.com"),
        ];
        let findings = run_audit(&diverged, &DisclosureSet::default());
        assert!(!rules_of(&findings).contains(&RuleId::R4NoAgeDifferentiation));
    }

    #[test]
    fn findings_reference_existing_flows() {
        let flows = vec![
            flow(
                "svc",
                TraceCategory::Child,
                TraceKind::LoggedIn,
                Platform::Web,
                "Aliases",
                "Personal Identifiers",
                DestLabel::ThirdAts,
                "ats.com",
            ),
            flow(
                "svc",
                TraceCategory::LoggedOut,
                TraceKind::LoggedOut,
                Platform::Mobile,
                "Age",
                "Personal Characteristics",
                DestLabel::Third,
                "third.com",
            ),
        ];
        let identities: BTreeSet<_> = flows
            .iter()
            .map(|f| (f.category3.clone(), f.dest_label, f.dest_esld.clone()))
            .collect();
        for finding in run_audit(&flows, &DisclosureSet::default()) {
            for r in &finding.flows {
                assert!(identities.contains(&(
                    r.category3.clone(),
                    r.dest_label,
                    r.dest_esld.clone()
                )));
            }
        }
    }
}
