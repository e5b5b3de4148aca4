//! Batch auditing toolchain for captured network traffic of general-audience
//! online services.
//!
//! The pipeline ingests HAR files and decrypted-capture JSON bundles, mines
//! raw payload keys, classifies them against a COPPA/CCPA-derived data-type
//! ontology (deterministic baseline matcher and/or a temperature-ensemble
//! chat-completion classifier with majority voting), categorizes request
//! destinations (eSLD, ownership, first/third party, ATS blocklists), builds
//! `<data type category, destination>` flows, and runs differential audits
//! across age groups and consent states plus linkability analysis.
//!
//! Stages are exposed both as library modules and through the `diffaudit`
//! CLI. All reference data (ontology, public suffix list, blocklists, entity
//! map) is loaded from pinned local files; nothing is fetched at run time.

pub mod classify;
pub mod config;
pub mod destinations;
pub mod error;
pub mod flows;
pub mod ingest;
pub mod linkability;
pub mod ontology;
pub mod pipeline;
pub mod report;

mod par;

pub use error::{Error, Result};
