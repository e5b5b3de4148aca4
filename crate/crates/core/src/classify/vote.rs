//! Majority voting over per-temperature runs and confidence thresholding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SingleRunResult;

/// How the winning label's confidence is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    MajorityMax,
    MajorityAvg,
}

impl VoteMode {
    fn aggregate(self, confidences: &[f64]) -> f64 {
        match self {
            VoteMode::MajorityMax => confidences.iter().cloned().fold(0.0, f64::max),
            VoteMode::MajorityAvg => {
                confidences.iter().sum::<f64>() / confidences.len() as f64
            }
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            VoteMode::MajorityMax => "Majority-Max",
            VoteMode::MajorityAvg => "Majority-Avg",
        }
    }
}

/// Voted label for one key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotedLabel {
    pub key: String,
    pub label: String,
    pub confidence: f64,
    pub mode: VoteMode,
    /// Number of runs that voted for the winning label.
    pub support: u32,
    /// A plurality tie occurred and was broken deterministically.
    pub tied: bool,
}

/// Plurality vote over the parseable runs of one key; None means abstain
/// (no run produced a usable label).
///
/// Plurality ties break toward the higher mode-aggregated confidence, then
/// the lexicographically smaller label, and the result is flagged `tied`.
pub fn majority_vote(results: &[SingleRunResult], mode: VoteMode) -> Option<VotedLabel> {
    let mut by_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut key = None;
    for run in results {
        key.get_or_insert(run.key.as_str());
        if run.parse_ok {
            if let Some(label) = &run.label {
                by_label.entry(label.as_str()).or_default().push(run.confidence);
            }
        }
    }
    let key = key?;
    if by_label.is_empty() {
        return None;
    }

    let max_support = by_label.values().map(Vec::len).max().unwrap();
    let contenders: Vec<(&str, f64)> = by_label
        .iter()
        .filter(|(_, confs)| confs.len() == max_support)
        .map(|(label, confs)| (*label, mode.aggregate(confs)))
        .collect();
    let tied = contenders.len() > 1;

    // BTreeMap iteration is label-sorted, so with the strict `>` the first
    // of equal confidences (the lexicographically smaller label) wins.
    let mut winner = contenders[0];
    for candidate in &contenders[1..] {
        if candidate.1 > winner.1 {
            winner = *candidate;
        }
    }

    Some(VotedLabel {
        key: key.to_string(),
        label: winner.0.to_string(),
        confidence: winner.1,
        mode,
        support: max_support as u32,
        tied,
    })
}

/// Keep a voted label only when its confidence reaches the threshold.
pub fn apply_threshold(voted: &VotedLabel, threshold: f64) -> bool {
    voted.confidence >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn runs(labels_confs: &[(&str, f64)]) -> Vec<SingleRunResult> {
        labels_confs
            .iter()
            .enumerate()
            .map(|(i, (label, conf))| SingleRunResult {
                key: "k".into(),
                label: Some(label.to_string()),
                confidence: *conf,
                explanation: String::new(),
                temperature: i as f64 * 0.25,
                parse_ok: true,
                error: None,
            })
            .collect()
    }

    const FIVE_RUNS: [(&str, f64); 5] = [
        ("Name", 0.9),
        ("Name", 0.8),
        ("Aliases", 0.7),
        ("Name", 0.7),
        ("Login Information", 0.6),
    ];

    #[test]
    fn majority_avg_hand_computation() {
        let v = majority_vote(&runs(&FIVE_RUNS), VoteMode::MajorityAvg).unwrap();
        assert_eq!(v.label, "Name");
        assert!((v.confidence - (0.9 + 0.8 + 0.7) / 3.0).abs() < 1e-12);
        assert_eq!(v.support, 3);
        assert!(!v.tied);
    }

    #[test]
    fn majority_max_hand_computation() {
        let v = majority_vote(&runs(&FIVE_RUNS), VoteMode::MajorityMax).unwrap();
        assert_eq!(v.label, "Name");
        assert_eq!(v.confidence, 0.9);
    }

    #[test]
    fn unanimity() {
        let five = [("A", 0.9); 5];
        for mode in [VoteMode::MajorityAvg, VoteMode::MajorityMax] {
            let v = majority_vote(&runs(&five), mode).unwrap();
            assert_eq!((v.label.as_str(), v.confidence, v.support), ("A", 0.9, 5));
        }
    }

    #[test]
    fn only_parseable_runs_participate() {
        let mut rs = runs(&[("Name", 0.9), ("Aliases", 0.5)]);
        rs.push(SingleRunResult::failed("k", 0.5, "timeout"));
        rs.push(SingleRunResult::failed("k", 0.75, "timeout"));
        let v = majority_vote(&rs, VoteMode::MajorityAvg).unwrap();
        assert!(v.tied);
        assert_eq!(v.label, "Name");
        assert_eq!(v.support, 1);
    }

    #[test]
    fn zero_parseable_runs_abstain() {
        let rs = vec![SingleRunResult::failed("k", 0.0, "x")];
        assert!(majority_vote(&rs, VoteMode::MajorityAvg).is_none());
        assert!(majority_vote(&[], VoteMode::MajorityAvg).is_none());
    }

    #[test]
    fn ties_break_on_confidence_then_label() {
        // 2-2-1 split; Aliases has the higher average.
        let v = majority_vote(
            &runs(&[("Name", 0.6), ("Name", 0.6), ("Aliases", 0.9), ("Aliases", 0.7), ("Age", 0.9)]),
            VoteMode::MajorityAvg,
        )
        .unwrap();
        assert!(v.tied);
        assert_eq!(v.label, "Aliases");

        // Equal confidence: lexicographically smaller label wins.
        let v = majority_vote(
            &runs(&[("Beta", 0.8), ("Alpha", 0.8)]),
            VoteMode::MajorityMax,
        )
        .unwrap();
        assert!(v.tied);
        assert_eq!(v.label, "Alpha");
    }

    #[test]
    fn threshold_boundaries() {
        let v = VotedLabel {
            key: "k".into(),
            label: "Name".into(),
            confidence: 0.80,
            mode: VoteMode::MajorityAvg,
            support: 3,
            tied: false,
        };
        assert!(apply_threshold(&v, 0.8));
        let low = VotedLabel { confidence: 0.79, ..v.clone() };
        assert!(!apply_threshold(&low, 0.8));
        let mid = VotedLabel { confidence: 0.85, ..v };
        assert!(!apply_threshold(&mid, 0.9));
    }

    // Brute-force plurality: count every label exhaustively, collect the
    // maximal ones, aggregate separately.
    fn brute_force(results: &[SingleRunResult], mode: VoteMode) -> Option<(String, f64, u32)> {
        let participating: Vec<_> = results.iter().filter(|r| r.parse_ok).collect();
        if participating.is_empty() {
            return None;
        }
        let labels: std::collections::BTreeSet<String> = participating
            .iter()
            .filter_map(|r| r.label.clone())
            .collect();
        let count = |l: &str| {
            participating
                .iter()
                .filter(|r| r.label.as_deref() == Some(l))
                .count()
        };
        let best = labels.iter().map(|l| count(l)).max().unwrap();
        let mut winners: Vec<(String, f64)> = labels
            .iter()
            .filter(|l| count(l) == best)
            .map(|l| {
                let confs: Vec<f64> = participating
                    .iter()
                    .filter(|r| r.label.as_deref() == Some(l))
                    .map(|r| r.confidence)
                    .collect();
                let agg = match mode {
                    VoteMode::MajorityMax => confs.iter().cloned().fold(0.0, f64::max),
                    VoteMode::MajorityAvg => confs.iter().sum::<f64>() / confs.len() as f64,
                };
                (l.clone(), agg)
            })
            .collect();
        winners.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
        });
        let (label, conf) = winners[0].clone();
        Some((label, conf, best as u32))
    }

    proptest! {
        #[test]
        fn vote_matches_brute_force(
            spec in proptest::collection::vec((0usize..4, 0u8..=100, any::<bool>()), 0..=5),
            mode_max in any::<bool>(),
        ) {
            let labels = ["Alpha", "Beta", "Gamma", "Delta"];
            let results: Vec<SingleRunResult> = spec
                .iter()
                .enumerate()
                .map(|(i, (label_idx, conf, ok))| SingleRunResult {
                    key: "k".into(),
                    label: if *ok { Some(labels[*label_idx].to_string()) } else { None },
                    confidence: *conf as f64 / 100.0,
                    explanation: String::new(),
                    temperature: i as f64 * 0.25,
                    parse_ok: *ok,
                    error: None,
                })
                .collect();
            let mode = if mode_max { VoteMode::MajorityMax } else { VoteMode::MajorityAvg };
            let ours = majority_vote(&results, mode);
            let brute = brute_force(&results, mode);
            match (ours, brute) {
                (None, None) => {}
                (Some(v), Some((label, conf, support))) => {
                    prop_assert_eq!(v.label, label);
                    prop_assert!((v.confidence - conf).abs() < 1e-12);
                    prop_assert_eq!(v.support, support);
                }
                (a, b) => prop_assert!(false, "disagreement: {:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn avg_confidence_never_exceeds_max(
            confs in proptest::collection::vec(0u8..=100, 1..=5),
        ) {
            let results: Vec<SingleRunResult> = confs
                .iter()
                .map(|c| SingleRunResult {
                    key: "k".into(),
                    label: Some("Name".into()),
                    confidence: *c as f64 / 100.0,
                    explanation: String::new(),
                    temperature: 0.0,
                    parse_ok: true,
                    error: None,
                })
                .collect();
            let avg = majority_vote(&results, VoteMode::MajorityAvg).unwrap().confidence;
            let max = majority_vote(&results, VoteMode::MajorityMax).unwrap().confidence;
            prop_assert!(avg <= max + 1e-12);
        }
    }
}
