//! Linkability analysis: which third parties received both identifier-kind
//! and personal-information-kind data, per service and trace category.
//!
//! Grouping is per destination eSLD (matching party-classification
//! granularity); only third-party destinations participate, ATS and non-ATS
//! alike. Linkability is structural category co-occurrence; no values are
//! joined.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::destinations::Party;
use crate::error::Result;
use crate::flows::{DataFlow, TraceCategory};
use crate::ontology::{Level1Kind, Ontology};

/// Level-3 categories one third party received in one trace context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkabilitySet {
    pub service: String,
    pub trace_category: TraceCategory,
    pub dest_esld: String,
    /// Any contributing flow had a blocklisted FQDN.
    pub is_ats: bool,
    pub owner: Option<String>,
    pub categories: BTreeSet<String>,
    pub linkable: bool,
    pub occurrence_count: u64,
}

/// Group third-party flows by (service, trace category, eSLD) and mark each
/// group linkable when it received at least one identifier-kind and one
/// personal-information-kind category.
pub fn linkable_sets(flows: &[DataFlow], ont: &Ontology) -> Result<Vec<LinkabilitySet>> {
    let mut groups: BTreeMap<(String, TraceCategory, String), LinkabilitySet> = BTreeMap::new();
    for flow in flows {
        if flow.party() != Party::Third {
            continue;
        }
        let entry = groups
            .entry((flow.service.clone(), flow.trace_category, flow.dest_esld.clone()))
            .or_insert_with(|| LinkabilitySet {
                service: flow.service.clone(),
                trace_category: flow.trace_category,
                dest_esld: flow.dest_esld.clone(),
                is_ats: false,
                owner: flow.dest_owner.clone(),
                categories: BTreeSet::new(),
                linkable: false,
                occurrence_count: 0,
            });
        entry.is_ats |= flow.dest_label.is_ats();
        entry.categories.insert(flow.category3.clone());
        entry.occurrence_count += flow.occurrence_count;
        if entry.owner.is_none() {
            entry.owner = flow.dest_owner.clone();
        }
    }

    let mut sets: Vec<LinkabilitySet> = groups.into_values().collect();
    for set in &mut sets {
        let mut has_identifier = false;
        let mut has_personal_info = false;
        for category in &set.categories {
            match ont.label_kind(category)? {
                Level1Kind::Identifiers => has_identifier = true,
                Level1Kind::PersonalInformation => has_personal_info = true,
            }
        }
        set.linkable = has_identifier && has_personal_info;
    }
    Ok(sets)
}

/// Count distinct linkable third-party eSLDs per cell. `universe` supplies
/// every (service, trace category) pair that must appear, so services that
/// contacted no third parties report zero.
pub fn count_linkable_third_parties(
    sets: &[LinkabilitySet],
    universe: &BTreeSet<(String, TraceCategory)>,
) -> BTreeMap<(String, TraceCategory), u32> {
    let mut counts: BTreeMap<(String, TraceCategory), u32> = universe
        .iter()
        .map(|cell| (cell.clone(), 0))
        .collect();
    for set in sets {
        if set.linkable {
            *counts
                .entry((set.service.clone(), set.trace_category))
                .or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargestSets {
    pub size: usize,
    /// Every maximum-cardinality set (ties all listed), with its eSLD.
    pub sets: Vec<(String, BTreeSet<String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonSet {
    pub categories: BTreeSet<String>,
    pub destinations: u32,
}

/// Per-cell largest linkable category sets and the corpus-wide most common
/// linkable set (modal over linkable destinations; ties break toward the
/// lexicographically smaller set).
pub fn largest_and_common_sets(
    sets: &[LinkabilitySet],
) -> (BTreeMap<(String, TraceCategory), LargestSets>, Option<CommonSet>) {
    let mut largest: BTreeMap<(String, TraceCategory), LargestSets> = BTreeMap::new();
    let mut frequency: BTreeMap<Vec<String>, u32> = BTreeMap::new();

    for set in sets {
        if !set.linkable {
            continue;
        }
        let cell = (set.service.clone(), set.trace_category);
        let entry = largest
            .entry(cell)
            .or_insert_with(|| LargestSets { size: 0, sets: Vec::new() });
        let size = set.categories.len();
        if size > entry.size {
            entry.size = size;
            entry.sets = vec![(set.dest_esld.clone(), set.categories.clone())];
        } else if size == entry.size {
            entry.sets.push((set.dest_esld.clone(), set.categories.clone()));
        }

        let key: Vec<String> = set.categories.iter().cloned().collect();
        *frequency.entry(key).or_insert(0) += 1;
    }

    let most_common = frequency
        .into_iter()
        .max_by(|(ka, va), (kb, vb)| va.cmp(vb).then_with(|| kb.cmp(ka)))
        .map(|(categories, destinations)| CommonSet {
            categories: categories.into_iter().collect(),
            destinations,
        });

    (largest, most_common)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtsOrgRank {
    pub organization: String,
    pub weight: u64,
}

/// Rank organizations owning linkable ATS destinations by summed flow
/// occurrence counts, top n per cell. Unknown owners group under their eSLD.
pub fn top_ats_orgs(
    sets: &[LinkabilitySet],
    n: usize,
) -> BTreeMap<(String, TraceCategory), Vec<AtsOrgRank>> {
    let mut weights: BTreeMap<(String, TraceCategory), BTreeMap<String, u64>> = BTreeMap::new();
    for set in sets {
        if !(set.linkable && set.is_ats) {
            continue;
        }
        let org = set.owner.clone().unwrap_or_else(|| set.dest_esld.clone());
        *weights
            .entry((set.service.clone(), set.trace_category))
            .or_default()
            .entry(org)
            .or_insert(0) += set.occurrence_count;
    }

    weights
        .into_iter()
        .map(|(cell, orgs)| {
            let mut ranked: Vec<AtsOrgRank> = orgs
                .into_iter()
                .map(|(organization, weight)| AtsOrgRank { organization, weight })
                .collect();
            ranked.sort_by(|a, b| {
                b.weight.cmp(&a.weight).then_with(|| a.organization.cmp(&b.organization))
            });
            ranked.truncate(n);
            (cell, ranked)
        })
        .collect()
}

/// Alluvial-ready edge list: (service/trace source, organization, weight).
pub fn alluvial_edges(
    top: &BTreeMap<(String, TraceCategory), Vec<AtsOrgRank>>,
) -> Vec<(String, String, u64)> {
    let mut edges = Vec::new();
    for ((service, category), ranks) in top {
        for rank in ranks {
            edges.push((
                format!("{service}/{}", category.as_str()),
                rank.organization.clone(),
                rank.weight,
            ));
        }
    }
    edges
}

/// Cross-context annex: per (service, eSLD), the category union across all
/// trace categories, kept separate from the per-category figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossContextSet {
    pub service: String,
    pub dest_esld: String,
    pub trace_categories: BTreeSet<TraceCategory>,
    pub categories: BTreeSet<String>,
    pub linkable: bool,
}

pub fn cross_context_sets(
    sets: &[LinkabilitySet],
    ont: &Ontology,
) -> Result<Vec<CrossContextSet>> {
    let mut groups: BTreeMap<(String, String), CrossContextSet> = BTreeMap::new();
    for set in sets {
        let entry = groups
            .entry((set.service.clone(), set.dest_esld.clone()))
            .or_insert_with(|| CrossContextSet {
                service: set.service.clone(),
                dest_esld: set.dest_esld.clone(),
                trace_categories: BTreeSet::new(),
                categories: BTreeSet::new(),
                linkable: false,
            });
        entry.trace_categories.insert(set.trace_category);
        entry.categories.extend(set.categories.iter().cloned());
    }
    let mut out: Vec<CrossContextSet> = groups.into_values().collect();
    for set in &mut out {
        let mut has_identifier = false;
        let mut has_personal_info = false;
        for category in &set.categories {
            match ont.label_kind(category)? {
                Level1Kind::Identifiers => has_identifier = true,
                Level1Kind::PersonalInformation => has_personal_info = true,
            }
        }
        set.linkable = has_identifier && has_personal_info;
    }
    Ok(out)
}
