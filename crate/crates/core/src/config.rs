//! Run configuration: one JSON file referencing every input, plus classifier
//! and audit settings. Relative paths resolve against the config file's
//! directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::VoteMode;
use crate::error::{Error, Result};
use crate::flows::Granularity;
use crate::report::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    /// Offline example matching only.
    Baseline,
    /// Remote ensemble only.
    Ensemble,
    /// Baseline first, ensemble for the misses.
    BaselineThenEnsemble,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    #[serde(default = "defaults::mode")]
    pub mode: ClassifierMode,
    #[serde(default = "defaults::model")]
    pub model: String,
    #[serde(default = "defaults::endpoint")]
    pub endpoint: String,
    #[serde(default = "defaults::temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::retries")]
    pub retries: u32,
    #[serde(default = "defaults::backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "defaults::pacing_ms")]
    pub pacing_ms: u64,
    #[serde(default = "defaults::threshold")]
    pub threshold: f64,
    #[serde(default = "defaults::vote_mode")]
    pub vote_mode: VoteMode,
    #[serde(default)]
    pub cache_file: Option<PathBuf>,
    /// Directory of recorded request fixtures; set (here or via the CLI) to
    /// run offline.
    #[serde(default)]
    pub replay_dir: Option<PathBuf>,
    /// Optional uniform subsample size for the validation harness.
    #[serde(default)]
    pub sample_size: Option<usize>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults apply")
    }
}

mod defaults {
    use super::*;

    pub fn mode() -> ClassifierMode {
        ClassifierMode::Baseline
    }
    pub fn model() -> String {
        "gpt-4".into()
    }
    pub fn endpoint() -> String {
        "https://api.openai.com/v1/chat/completions".into()
    }
    pub fn temperatures() -> Vec<f64> {
        crate::classify::DEFAULT_TEMPERATURES.to_vec()
    }
    pub fn batch_size() -> usize {
        crate::classify::DEFAULT_BATCH_SIZE
    }
    pub fn retries() -> u32 {
        3
    }
    pub fn backoff_ms() -> u64 {
        500
    }
    pub fn pacing_ms() -> u64 {
        0
    }
    pub fn threshold() -> f64 {
        crate::classify::DEFAULT_THRESHOLD
    }
    pub fn vote_mode() -> VoteMode {
        VoteMode::MajorityAvg
    }
    pub fn r4_tau() -> f64 {
        crate::flows::DEFAULT_R4_TAU
    }
    pub fn granularity() -> Granularity {
        Granularity::Level2
    }
    pub fn top_n() -> usize {
        10
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    #[serde(default = "defaults::granularity")]
    pub granularity: Granularity,
    #[serde(default = "defaults::r4_tau")]
    pub r4_tau: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { granularity: defaults::granularity(), r4_tau: defaults::r4_tau() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkabilityConfig {
    #[serde(default = "defaults::top_n")]
    pub top_n: usize,
}

impl Default for LinkabilityConfig {
    fn default() -> Self {
        LinkabilityConfig { top_n: defaults::top_n() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestConfig {
    #[serde(default)]
    pub mine_header_keys: bool,
    #[serde(default)]
    pub mine_cookie_keys: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_manifest: PathBuf,
    pub ontology: PathBuf,
    pub psl: PathBuf,
    pub blocklists: Vec<PathBuf>,
    pub entity_map: PathBuf,
    pub service_profiles: PathBuf,
    #[serde(default)]
    pub disclosures: Option<PathBuf>,
    /// Manual ownership corrections layered over the entity map.
    #[serde(default)]
    pub owner_overrides: Option<PathBuf>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub linkability: LinkabilityConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Directory the config file lives in; input paths display relative to
    /// it so provenance stays machine-portable.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// SHA-256 of the raw config file bytes.
    #[serde(skip)]
    pub raw_sha256: String,
}

impl RunConfig {
    /// Load, resolve paths against the config directory, and validate.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.base_dir = base.to_path_buf();
        config.raw_sha256 = sha256_hex(&bytes);
        config.resolve(base);
        config.validate()?;
        Ok(config)
    }

    /// Display form of an input path: relative to the config directory when
    /// possible.
    pub fn display_path(&self, path: &Path) -> String {
        path.strip_prefix(&self.base_dir)
            .unwrap_or(path)
            .display()
            .to_string()
    }

    fn resolve(&mut self, base: &Path) {
        let resolve_one = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve_one(&mut self.corpus_manifest);
        resolve_one(&mut self.ontology);
        resolve_one(&mut self.psl);
        for p in &mut self.blocklists {
            resolve_one(p);
        }
        resolve_one(&mut self.entity_map);
        resolve_one(&mut self.service_profiles);
        if let Some(p) = &mut self.disclosures {
            resolve_one(p);
        }
        if let Some(p) = &mut self.owner_overrides {
            resolve_one(p);
        }
        if let Some(p) = &mut self.classifier.cache_file {
            resolve_one(p);
        }
        if let Some(p) = &mut self.classifier.replay_dir {
            resolve_one(p);
        }
        resolve_one(&mut self.out_dir);
    }

    pub fn validate(&self) -> Result<()> {
        let must_exist: Vec<&PathBuf> = [
            &self.corpus_manifest,
            &self.ontology,
            &self.psl,
            &self.entity_map,
            &self.service_profiles,
        ]
        .into_iter()
        .chain(self.blocklists.iter())
        .chain(self.disclosures.iter())
        .chain(self.owner_overrides.iter())
        .chain(self.classifier.replay_dir.iter())
        .collect();
        for path in must_exist {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "referenced file {} does not exist",
                    path.display()
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.classifier.threshold) {
            return Err(Error::Config(format!(
                "threshold {} outside [0, 1]",
                self.classifier.threshold
            )));
        }
        if self.classifier.temperatures.is_empty() {
            return Err(Error::Config("no classifier temperatures".into()));
        }
        for t in &self.classifier.temperatures {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::Config(format!("temperature {t} outside [0, 1]")));
            }
        }
        if self.classifier.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.audit.r4_tau) {
            return Err(Error::Config(format!(
                "r4_tau {} outside [0, 1]",
                self.audit.r4_tau
            )));
        }
        Ok(())
    }

    /// Hash every referenced input file, keyed by its display path.
    pub fn input_hashes(&self) -> Result<BTreeMap<String, String>> {
        let mut hashes = BTreeMap::new();
        let mut add = |path: &PathBuf| -> Result<()> {
            hashes.insert(self.display_path(path), crate::report::sha256_file(path)?);
            Ok(())
        };
        add(&self.corpus_manifest)?;
        add(&self.ontology)?;
        add(&self.psl)?;
        for p in &self.blocklists {
            add(p)?;
        }
        add(&self.entity_map)?;
        add(&self.service_profiles)?;
        if let Some(p) = &self.disclosures {
            add(p)?;
        }
        if let Some(p) = &self.owner_overrides {
            add(p)?;
        }
        Ok(hashes)
    }

    /// Effective settings summary embedded in provenance so CLI overrides
    /// are visible there.
    pub fn settings_summary(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("mode".to_string(), format!("{:?}", self.classifier.mode)),
            ("model".to_string(), self.classifier.model.clone()),
            ("threshold".to_string(), format!("{}", self.classifier.threshold)),
            ("vote_mode".to_string(), self.classifier.vote_mode.display_name().to_string()),
            ("granularity".to_string(), format!("{:?}", self.audit.granularity)),
            ("r4_tau".to_string(), format!("{}", self.audit.r4_tau)),
            ("top_n".to_string(), format!("{}", self.linkability.top_n)),
            (
                "temperatures".to_string(),
                self.classifier
                    .temperatures
                    .iter()
                    .map(|t| format!("{t}"))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        ])
    }
}
