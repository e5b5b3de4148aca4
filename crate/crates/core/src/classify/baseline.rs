//! Deterministic baseline matcher over the ontology's level-4 examples.
//!
//! Match tiers, strongest first:
//!   1. the normalized key's token set equals an example's token set
//!      (confidence 1.0);
//!   2. the key's token set is a subset of an example's token set, which is
//!      how e.g. "email" hits the "email address" example (confidence 1.0);
//!   3. an example's token sequence appears contiguously inside the key's
//!      token sequence (confidence 0.7).
//! Ties break toward the longest matching example, then the
//! lexicographically smaller label.

use std::collections::BTreeSet;

use crate::ontology::Ontology;

use super::normalize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tier {
    Contains,
    Subset,
    Exact,
}

/// Classify a raw key offline; None when no example relates.
pub fn baseline_classify(key: &str, ont: &Ontology) -> Option<(String, f64)> {
    let key_tokens = tokenize(key);
    if key_tokens.is_empty() {
        return None;
    }
    let key_set: BTreeSet<&str> = key_tokens.iter().map(|s| s.as_str()).collect();

    // (tier, example length, reversed label) so `max` picks the best match.
    let mut best: Option<(Tier, usize, std::cmp::Reverse<&str>)> = None;
    for label in ont.labels() {
        for example in &label.examples {
            let ex_tokens = tokenize(example);
            if ex_tokens.is_empty() {
                continue;
            }
            let ex_set: BTreeSet<&str> = ex_tokens.iter().map(|s| s.as_str()).collect();
            let tier = if key_set == ex_set {
                Some(Tier::Exact)
            } else if key_set.is_subset(&ex_set) {
                Some(Tier::Subset)
            } else if contains_contiguous(&key_tokens, &ex_tokens) {
                Some(Tier::Contains)
            } else {
                None
            };
            if let Some(tier) = tier {
                let candidate = (tier, example.len(), std::cmp::Reverse(label.name.as_str()));
                if best.map_or(true, |b| candidate > b) {
                    best = Some(candidate);
                }
            }
        }
    }

    best.map(|(tier, _, std::cmp::Reverse(label))| {
        let confidence = match tier {
            Tier::Exact | Tier::Subset => 1.0,
            Tier::Contains => 0.7,
        };
        (label.to_string(), confidence)
    })
}

fn contains_contiguous(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::load_ontology;

    fn ont() -> Ontology {
        load_ontology(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ontology.json")).unwrap()
    }

    #[test]
    fn email_maps_to_contact_information() {
        assert_eq!(
            baseline_classify("email", &ont()),
            Some(("Contact Information".to_string(), 1.0))
        );
    }

    #[test]
    fn os_maps_to_device_information() {
        assert_eq!(
            baseline_classify("os", &ont()),
            Some(("Device Information".to_string(), 1.0))
        );
    }

    #[test]
    fn unrelated_key_has_no_match() {
        assert_eq!(baseline_classify("zqx9", &ont()), None);
    }

    #[test]
    fn exact_phrase_match() {
        assert_eq!(
            baseline_classify("password", &ont()),
            Some(("Login Information".to_string(), 1.0))
        );
        assert_eq!(
            baseline_classify("browsing_history", &ont()),
            Some(("Internet Activity".to_string(), 1.0))
        );
    }

    #[test]
    fn contained_example_scores_lower() {
        // "advertising identifier" is contained in the key's token sequence.
        assert_eq!(
            baseline_classify("x_advertising_identifier_v2", &ont()),
            Some(("Device Software Identifiers".to_string(), 0.7))
        );
    }

    #[test]
    fn exact_equality_beats_subset_of_longer_example() {
        // "data" is an exact App or Service Usage example even though it is
        // also a token of the longer Sensor Data phrase.
        assert_eq!(
            baseline_classify("data", &ont()),
            Some(("App or Service Usage".to_string(), 1.0))
        );
    }

    #[test]
    fn labels_always_come_from_the_ontology() {
        let ont = ont();
        for key in ["email", "uid", "screenWidth", "lat", "zz_9", "session", "guid"] {
            if let Some((label, conf)) = baseline_classify(key, &ont) {
                assert!(ont.lookup(&label).is_some(), "label {label} for key {key}");
                assert!((0.0..=1.0).contains(&conf));
            }
        }
    }
}
