//! Data-flow construction and differential auditing.
//!
//! A data flow is a `<data type category, destination>` pair in trace
//! context. Flows are deduplicated at (service, trace category, level-3
//! category, destination label, destination eSLD) granularity with summed
//! occurrence counts; account-creation and logged-in traces merge into one
//! age-specific set per group while logged-out stays separate.

mod audit;
mod diff;
mod matrix;

pub use audit::{audit, AuditFinding, DisclosureSet, RuleId, Severity, DEFAULT_R4_TAU};
pub use diff::{diff_age_groups, jaccard, DiffReport, Granularity, PairDiff};
pub use matrix::{render_matrix, MatrixReport, MARK_ABSENT, MARK_BOTH, MARK_MOBILE, MARK_WEB};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classify::VotedLabel;
use crate::destinations::{DestLabel, DestinationRecord, Party};
use crate::error::Result;
use crate::ingest::{AgeGroup, Platform, RawKey, RawRequest, TraceKind};
use crate::ontology::Ontology;

/// Trace category of a flow: one age-specific group or logged-out.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TraceCategory {
    Child,
    Adolescent,
    Adult,
    LoggedOut,
}

impl TraceCategory {
    pub fn of(kind: TraceKind, age: AgeGroup) -> TraceCategory {
        match (kind, age) {
            (TraceKind::LoggedOut, _) => TraceCategory::LoggedOut,
            (_, AgeGroup::Child) => TraceCategory::Child,
            (_, AgeGroup::Adolescent) => TraceCategory::Adolescent,
            (_, AgeGroup::Adult) => TraceCategory::Adult,
            // Unreachable for validated metadata.
            (_, AgeGroup::None) => TraceCategory::LoggedOut,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TraceCategory::Child => "child",
            TraceCategory::Adolescent => "adolescent",
            TraceCategory::Adult => "adult",
            TraceCategory::LoggedOut => "logged_out",
        }
    }

    pub const ALL: [TraceCategory; 4] = [
        TraceCategory::Child,
        TraceCategory::Adolescent,
        TraceCategory::Adult,
        TraceCategory::LoggedOut,
    ];

    pub const AGE_SPECIFIC: [TraceCategory; 3] =
        [TraceCategory::Child, TraceCategory::Adolescent, TraceCategory::Adult];
}

/// One deduplicated data flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFlow {
    pub service: String,
    pub trace_category: TraceCategory,
    /// Trace kinds that contributed (account_creation/logged_in merge here).
    pub trace_kinds: BTreeSet<TraceKind>,
    pub platforms: BTreeSet<Platform>,
    pub category3: String,
    pub category2: String,
    pub dest_label: DestLabel,
    pub dest_esld: String,
    /// FQDN-level evidence behind the eSLD-level identity.
    pub dest_fqdns: BTreeSet<String>,
    pub dest_owner: Option<String>,
    pub occurrence_count: u64,
}

impl DataFlow {
    /// Deduplication identity.
    pub fn identity(&self) -> (String, TraceCategory, String, DestLabel, String) {
        (
            self.service.clone(),
            self.trace_category,
            self.category3.clone(),
            self.dest_label,
            self.dest_esld.clone(),
        )
    }

    pub fn party(&self) -> Party {
        self.dest_label.party()
    }
}

/// Destination-only contact evidence (tracked for every request, including
/// encrypted ones that cannot contribute data flows).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub service: String,
    pub trace_category: TraceCategory,
    pub platforms: BTreeSet<Platform>,
    pub dest_label: DestLabel,
    pub dest_esld: String,
    pub dest_fqdns: BTreeSet<String>,
    pub encrypted_only: bool,
    pub occurrence_count: u64,
}

/// Voted-label store entry consumed by flow construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedKey {
    pub key: String,
    pub normalized: String,
    pub method: String,
    pub voted: Option<VotedLabel>,
    /// Passed the confidence threshold; only labeled keys enter flows.
    pub labeled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_reason: Option<String>,
}

/// Build deduplicated flows (and contact records) from classified keys and
/// categorized destinations.
///
/// Per request, the cross product of its labeled keys and its destination
/// yields flows; duplicates merge with occurrence counts summed. Encrypted
/// requests contribute contact records only.
pub fn build_flows(
    requests: &[RawRequest],
    keys_by_request: &BTreeMap<String, Vec<RawKey>>,
    labels: &BTreeMap<String, ClassifiedKey>,
    destinations: &BTreeMap<(String, String), DestinationRecord>,
    ont: &Ontology,
) -> Result<(Vec<DataFlow>, Vec<ContactRecord>)> {
    let mut flows: BTreeMap<
        (String, TraceCategory, String, DestLabel, String),
        DataFlow,
    > = BTreeMap::new();
    let mut contacts: BTreeMap<(String, TraceCategory, DestLabel, String), ContactRecord> =
        BTreeMap::new();

    for req in requests {
        let (fqdn, _) = crate::destinations::extract_fqdn(&req.url)?;
        let dest_key = (req.meta.service.clone(), fqdn);
        let Some(dest) = destinations.get(&dest_key) else {
            continue;
        };
        let category = TraceCategory::of(req.meta.trace_kind, req.meta.age_group);

        let contact = contacts
            .entry((
                req.meta.service.clone(),
                category,
                dest.label,
                dest.esld.clone(),
            ))
            .or_insert_with(|| ContactRecord {
                service: req.meta.service.clone(),
                trace_category: category,
                platforms: BTreeSet::new(),
                dest_label: dest.label,
                dest_esld: dest.esld.clone(),
                dest_fqdns: BTreeSet::new(),
                encrypted_only: true,
                occurrence_count: 0,
            });
        contact.platforms.insert(req.meta.platform);
        contact.dest_fqdns.insert(dest.fqdn.clone());
        contact.encrypted_only &= req.encrypted;
        contact.occurrence_count += 1;

        let Some(keys) = keys_by_request.get(&req.id) else {
            continue;
        };
        // Distinct labeled level-3 categories among this request's keys.
        let mut categories: BTreeSet<&str> = BTreeSet::new();
        for raw_key in keys {
            if let Some(entry) = labels.get(&raw_key.key) {
                if entry.labeled {
                    if let Some(v) = &entry.voted {
                        categories.insert(v.label.as_str());
                    }
                }
            }
        }
        for category3 in categories {
            let category2 = ont.abstract_to_level2(category3)?.to_string();
            let flow = flows
                .entry((
                    req.meta.service.clone(),
                    category,
                    category3.to_string(),
                    dest.label,
                    dest.esld.clone(),
                ))
                .or_insert_with(|| DataFlow {
                    service: req.meta.service.clone(),
                    trace_category: category,
                    trace_kinds: BTreeSet::new(),
                    platforms: BTreeSet::new(),
                    category3: category3.to_string(),
                    category2,
                    dest_label: dest.label,
                    dest_esld: dest.esld.clone(),
                    dest_fqdns: BTreeSet::new(),
                    dest_owner: dest.owner.clone(),
                    occurrence_count: 0,
                });
            flow.trace_kinds.insert(req.meta.trace_kind);
            flow.platforms.insert(req.meta.platform);
            flow.dest_fqdns.insert(dest.fqdn.clone());
            flow.occurrence_count += 1;
        }
    }

    Ok((flows.into_values().collect(), contacts.into_values().collect()))
}

/// Merge account-creation and logged-in flows into one age-specific set per
/// group; logged-out flows pass through unchanged. Union semantics: equal
/// identities merge with platforms, trace kinds, and counts combined.
pub fn merge_age_traces(flows: Vec<DataFlow>) -> Vec<DataFlow> {
    let mut merged: BTreeMap<
        (String, TraceCategory, String, DestLabel, String),
        DataFlow,
    > = BTreeMap::new();
    for flow in flows {
        match merged.entry(flow.identity()) {
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(flow);
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                let existing = slot.get_mut();
                existing.trace_kinds.extend(flow.trace_kinds.iter().copied());
                existing.platforms.extend(flow.platforms.iter().copied());
                existing
                    .dest_fqdns
                    .extend(flow.dest_fqdns.iter().cloned());
                existing.occurrence_count += flow.occurrence_count;
            }
        }
    }
    merged.into_values().collect()
}

/// Platform-presence mark of a matrix cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceMark {
    Both,
    WebOnly,
    MobileOnly,
    Absent,
}

/// Matrix cell key: (service, trace category, level-2 category, dest label).
pub type CellKey = (String, TraceCategory, String, DestLabel);

/// Per-cell platform union and presence mark. Desktop traces count toward
/// the web mark; the raw platform set is kept for detail output.
pub fn platform_presence(flows: &[DataFlow]) -> BTreeMap<CellKey, (PresenceMark, BTreeSet<Platform>)> {
    let mut cells: BTreeMap<CellKey, BTreeSet<Platform>> = BTreeMap::new();
    for flow in flows {
        cells
            .entry((
                flow.service.clone(),
                flow.trace_category,
                flow.category2.clone(),
                flow.dest_label,
            ))
            .or_default()
            .extend(flow.platforms.iter().copied());
    }
    cells
        .into_iter()
        .map(|(key, platforms)| {
            let web = platforms.contains(&Platform::Web) || platforms.contains(&Platform::Desktop);
            let mobile = platforms.contains(&Platform::Mobile);
            let mark = match (web, mobile) {
                (true, true) => PresenceMark::Both,
                (true, false) => PresenceMark::WebOnly,
                (false, true) => PresenceMark::MobileOnly,
                (false, false) => PresenceMark::Absent,
            };
            (key, (mark, platforms))
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn flow(
        service: &str,
        category: TraceCategory,
        kind: TraceKind,
        platform: Platform,
        category3: &str,
        category2: &str,
        dest_label: DestLabel,
        esld: &str,
    ) -> DataFlow {
        DataFlow {
            service: service.into(),
            trace_category: category,
            trace_kinds: BTreeSet::from([kind]),
            platforms: BTreeSet::from([platform]),
            category3: category3.into(),
            category2: category2.into(),
            dest_label,
            dest_esld: esld.into(),
            dest_fqdns: BTreeSet::from([format!("www.{esld}")]),
            dest_owner: None,
            occurrence_count: 1,
        }
    }
}
