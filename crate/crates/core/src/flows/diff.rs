//! Differential comparison of flow sets across trace categories.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::destinations::DestLabel;

use super::{DataFlow, TraceCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Level2,
    Level3,
}

/// Flow identity at report granularity: (category, dest label, dest eSLD).
pub type FlowIdentity = (String, DestLabel, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiff {
    pub left: TraceCategory,
    pub right: TraceCategory,
    pub jaccard: f64,
    pub unique_left: Vec<FlowIdentity>,
    pub unique_right: Vec<FlowIdentity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDiff {
    pub service: String,
    pub pairs: Vec<PairDiff>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub granularity: Granularity,
    pub services: Vec<ServiceDiff>,
}

impl DiffReport {
    pub fn jaccard_for(&self, service: &str, left: TraceCategory, right: TraceCategory) -> Option<f64> {
        self.services
            .iter()
            .find(|s| s.service == service)
            .and_then(|s| {
                s.pairs
                    .iter()
                    .find(|p| p.left == left && p.right == right)
                    .map(|p| p.jaccard)
            })
    }
}

/// Jaccard similarity of two identity sets; identical sets (including two
/// empty ones) score 1.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.union(b).count();
    intersection as f64 / union as f64
}

fn identity_sets(
    flows: &[DataFlow],
    granularity: Granularity,
) -> BTreeMap<(String, TraceCategory), BTreeSet<FlowIdentity>> {
    let mut sets: BTreeMap<(String, TraceCategory), BTreeSet<FlowIdentity>> = BTreeMap::new();
    for flow in flows {
        let category = match granularity {
            Granularity::Level2 => flow.category2.clone(),
            Granularity::Level3 => flow.category3.clone(),
        };
        sets.entry((flow.service.clone(), flow.trace_category))
            .or_default()
            .insert((category, flow.dest_label, flow.dest_esld.clone()));
    }
    sets
}

/// Compare, per service, each age group against adult and each category
/// against logged-out: set differences plus Jaccard similarity.
pub fn diff_age_groups(flows: &[DataFlow], granularity: Granularity) -> DiffReport {
    let sets = identity_sets(flows, granularity);
    let services: BTreeSet<&String> = sets.keys().map(|(s, _)| s).collect();
    let empty = BTreeSet::new();

    let pairs_to_compare = [
        (TraceCategory::Child, TraceCategory::Adult),
        (TraceCategory::Adolescent, TraceCategory::Adult),
        (TraceCategory::Child, TraceCategory::LoggedOut),
        (TraceCategory::Adolescent, TraceCategory::LoggedOut),
        (TraceCategory::Adult, TraceCategory::LoggedOut),
    ];

    let mut out = Vec::new();
    for service in services {
        let set_of = |cat: TraceCategory| {
            sets.get(&(service.clone(), cat)).unwrap_or(&empty)
        };
        let mut pairs = Vec::new();
        for (left, right) in pairs_to_compare {
            let (a, b) = (set_of(left), set_of(right));
            pairs.push(PairDiff {
                left,
                right,
                jaccard: jaccard(a, b),
                unique_left: a.difference(b).cloned().collect(),
                unique_right: b.difference(a).cloned().collect(),
            });
        }
        out.push(ServiceDiff { service: service.clone(), pairs });
    }
    DiffReport { granularity, services: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::testutil::flow;
    use crate::ingest::{Platform, TraceKind};

    fn child_adult_fixture(child: &[&str], adult: &[&str]) -> Vec<DataFlow> {
        let mut flows = Vec::new();
        for esld in child {
            flows.push(flow(
                "svc",
                TraceCategory::Child,
                TraceKind::LoggedIn,
                Platform::Web,
                "Aliases",
                "Personal Identifiers",
                DestLabel::Third,
                esld,
            ));
        }
        for esld in adult {
            flows.push(flow(
                "svc",
                TraceCategory::Adult,
                TraceKind::LoggedIn,
                Platform::Web,
                "Aliases",
                "Personal Identifiers",
                DestLabel::Third,
                esld,
            ));
        }
        flows
    }

    #[test]
    fn identical_sets_have_jaccard_one_and_empty_diffs() {
        let flows = child_adult_fixture(&["a.com"], &["a.com"]);
        let report = diff_age_groups(&flows, Granularity::Level3);
        let pair = &report.services[0].pairs[0];
        assert_eq!(pair.jaccard, 1.0);
        assert!(pair.unique_left.is_empty());
        assert!(pair.unique_right.is_empty());
    }

    #[test]
    fn hand_computed_thirds() {
        // child {A, B}, adult {B, C}: |∩| = 1, |∪| = 3.
        let flows = child_adult_fixture(&["a.com", "b.com"], &["b.com", "c.com"]);
        let report = diff_age_groups(&flows, Granularity::Level3);
        let pair = &report.services[0].pairs[0];
        assert!((pair.jaccard - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(pair.unique_left.len(), 1);
        assert_eq!(pair.unique_left[0].2, "a.com");
        assert_eq!(pair.unique_right.len(), 1);
        assert_eq!(pair.unique_right[0].2, "c.com");
    }

    #[test]
    fn empty_versus_nonempty_is_zero() {
        let flows = child_adult_fixture(&[], &["a.com"]);
        let report = diff_age_groups(&flows, Granularity::Level3);
        assert_eq!(report.services[0].pairs[0].jaccard, 0.0);
    }

    #[test]
    fn jaccard_properties() {
        let sets: Vec<BTreeSet<u32>> = vec![
            BTreeSet::new(),
            BTreeSet::from([1]),
            BTreeSet::from([1, 2]),
            BTreeSet::from([2, 3, 4]),
        ];
        for a in &sets {
            for b in &sets {
                let j = jaccard(a, b);
                assert!((0.0..=1.0).contains(&j));
                assert_eq!(j, jaccard(b, a));
            }
            assert_eq!(jaccard(a, a), 1.0);
        }
    }

    #[test]
    fn level2_granularity_collapses_level3_detail() {
        let mut flows = child_adult_fixture(&["a.com"], &["a.com"]);
        flows[0].category3 = "Name".into();
        // Same level-2 category for both, so level2 identity sets match.
        let l2 = diff_age_groups(&flows, Granularity::Level2);
        assert_eq!(l2.services[0].pairs[0].jaccard, 1.0);
        let l3 = diff_age_groups(&flows, Granularity::Level3);
        assert_eq!(l3.services[0].pairs[0].jaccard, 0.0);
    }
}
