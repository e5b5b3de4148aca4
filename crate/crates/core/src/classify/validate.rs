//! Validation harness: score voted labels against a hand-labeled sample.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::Ontology;

use super::vote::VotedLabel;

pub const DEFAULT_VALIDATION_THRESHOLDS: [f64; 3] = [0.7, 0.8, 0.9];

/// Hand-labeled (key, ground-truth level-3 label) pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledSample {
    pub items: Vec<LabeledItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledItem {
    pub key: String,
    pub label: String,
}

impl LabeledSample {
    pub fn load(path: impl AsRef<Path>, ont: &Ontology) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let items: Vec<LabeledItem> =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        let sample = LabeledSample { items };
        sample.validate(ont)?;
        Ok(sample)
    }

    pub fn validate(&self, ont: &Ontology) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Sample("labeled sample is empty".into()));
        }
        for item in &self.items {
            if ont.lookup(&item.label).is_none() {
                return Err(Error::Sample(format!(
                    "sample label {:?} for key {:?} is not in the ontology",
                    item.label, item.key
                )));
            }
        }
        Ok(())
    }

    /// Deterministic uniform subsample driven by the run seed.
    pub fn subsample(&self, size: usize, seed: u64) -> LabeledSample {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        if size >= self.items.len() {
            return self.clone();
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut items = self.items.clone();
        items.shuffle(&mut rng);
        items.truncate(size);
        items.sort_by(|a, b| a.key.cmp(&b.key));
        LabeledSample { items }
    }
}

/// One per-threshold column pair: accuracy over kept items and kept count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    /// None when no item reaches the threshold.
    pub accuracy: Option<f64>,
    pub labeled: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub method: String,
    pub total: u32,
    pub correct: u32,
    /// Accuracy over the whole sample; abstentions count as incorrect.
    pub overall_accuracy: f64,
    pub thresholds: Vec<ThresholdRow>,
}

/// Score voted labels against the sample. Every sample key must appear in
/// `voted` (None records an abstention).
pub fn validate_against_sample(
    sample: &LabeledSample,
    voted: &BTreeMap<String, Option<VotedLabel>>,
    thresholds: &[f64],
    ont: &Ontology,
    method: &str,
) -> Result<AccuracyReport> {
    let mut graded: Vec<(bool, Option<f64>)> = Vec::new();
    for item in &sample.items {
        let entry = voted.get(&item.key).ok_or_else(|| {
            Error::Sample(format!("sample key {:?} has no voted result", item.key))
        })?;
        let truth = ont
            .lookup(&item.label)
            .ok_or_else(|| Error::UnknownLabel(item.label.clone()))?;
        match entry {
            Some(v) => {
                let correct = ont
                    .lookup(&v.label)
                    .is_some_and(|predicted| predicted.name == truth.name);
                graded.push((correct, Some(v.confidence)));
            }
            None => graded.push((false, None)),
        }
    }

    let total = graded.len() as u32;
    let correct = graded.iter().filter(|(ok, _)| *ok).count() as u32;
    let mut rows = Vec::new();
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for threshold in sorted {
        let kept: Vec<&(bool, Option<f64>)> = graded
            .iter()
            .filter(|(_, conf)| conf.is_some_and(|c| c >= threshold))
            .collect();
        let kept_correct = kept.iter().filter(|(ok, _)| *ok).count();
        rows.push(ThresholdRow {
            threshold,
            accuracy: (!kept.is_empty())
                .then(|| kept_correct as f64 / kept.len() as f64),
            labeled: kept.len() as u32,
        });
    }

    Ok(AccuracyReport {
        method: method.to_string(),
        total,
        correct,
        overall_accuracy: correct as f64 / total as f64,
        thresholds: rows,
    })
}

impl AccuracyReport {
    /// Grid with one (Accuracy, Labeled) column pair per threshold.
    pub fn render_rows(&self) -> Vec<Vec<String>> {
        let mut header = vec!["Method".to_string(), "Accuracy".to_string()];
        for row in &self.thresholds {
            header.push(format!("Confidence {} Accuracy", row.threshold));
            header.push(format!("Confidence {} Labeled", row.threshold));
        }
        let mut body = vec![
            self.method.clone(),
            format!("{:.2}", self.overall_accuracy),
        ];
        for row in &self.thresholds {
            body.push(match row.accuracy {
                Some(a) => format!("{a:.2}"),
                None => "-".to_string(),
            });
            body.push(row.labeled.to_string());
        }
        vec![header, body]
    }

    pub fn render_text(&self) -> String {
        crate::report::render_grid(&self.render_rows())
    }
}
