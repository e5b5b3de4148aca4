//! Four-level data-type ontology: two level-1 kinds (identifiers and
//! personal information), eight level-2 groups, the level-3 classification
//! label set, and level-4 example phrases.
//!
//! The ontology is loaded from a JSON file (`level1` → `level2` → `level3` →
//! `examples`) and validated on load; it is immutable afterwards and safe to
//! share across pipeline stages. The repository ships a default file under
//! `data/ontology.json`; alternative taxonomies can be swapped in without
//! code changes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level-1 ancestor kind of a data-type label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level1Kind {
    Identifiers,
    PersonalInformation,
}

impl Level1Kind {
    pub fn display_name(self) -> &'static str {
        match self {
            Level1Kind::Identifiers => "Identifiers",
            Level1Kind::PersonalInformation => "Personal Information",
        }
    }

    fn from_file_name(name: &str) -> Option<Self> {
        match normalize_label(name).as_str() {
            "identifiers" => Some(Level1Kind::Identifiers),
            "personal information" => Some(Level1Kind::PersonalInformation),
            _ => None,
        }
    }
}

/// One level-3 classification label with its lineage and level-4 examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataTypeLabel {
    pub name: String,
    pub level2: String,
    pub level1kind: Level1Kind,
    /// Lowercase level-4 example phrases.
    pub examples: Vec<String>,
}

/// Validated, immutable ontology.
#[derive(Debug, Clone)]
pub struct Ontology {
    level1: Vec<Level1Kind>,
    level2: Vec<(String, Level1Kind)>,
    labels: Vec<DataTypeLabel>,
    // normalized level-3 name -> index into `labels`
    by_norm_name: BTreeMap<String, usize>,
}

// Case-insensitive, whitespace-trimmed canonical form used for label lookup.
// Internal punctuation is preserved so e.g. "Gender/Sex" stays distinct.
pub(crate) fn normalize_label(name: &str) -> String {
    name.trim().split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Deserialize)]
struct OntologyFile {
    level1: Vec<Level1File>,
}

#[derive(Deserialize)]
struct Level1File {
    name: String,
    level2: Vec<Level2File>,
}

#[derive(Deserialize)]
struct Level2File {
    name: String,
    level3: Vec<Level3File>,
}

#[derive(Deserialize)]
struct Level3File {
    name: String,
    examples: Vec<String>,
}

/// Load and validate an ontology file.
pub fn load_ontology(path: impl AsRef<Path>) -> Result<Ontology> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: OntologyFile =
        serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
    Ontology::from_file(file)
}

impl Ontology {
    fn from_file(file: OntologyFile) -> Result<Self> {
        if file.level1.len() != 2 {
            return Err(Error::Ontology(format!(
                "expected exactly 2 level-1 categories, found {}",
                file.level1.len()
            )));
        }

        let mut level1 = Vec::new();
        let mut level2 = Vec::new();
        let mut labels: Vec<DataTypeLabel> = Vec::new();
        let mut by_norm_name = BTreeMap::new();
        let mut example_owner: BTreeMap<String, String> = BTreeMap::new();

        for l1 in &file.level1 {
            let kind = Level1Kind::from_file_name(&l1.name).ok_or_else(|| {
                Error::Ontology(format!(
                    "level-1 category must be \"Identifiers\" or \"Personal Information\", found {:?}",
                    l1.name
                ))
            })?;
            if level1.contains(&kind) {
                return Err(Error::Ontology(format!(
                    "duplicate level-1 category {:?}",
                    l1.name
                )));
            }
            level1.push(kind);

            for l2 in &l1.level2 {
                let l2_name = l2.name.trim().to_string();
                if level2.iter().any(|(n, _)| normalize_label(n) == normalize_label(&l2_name)) {
                    return Err(Error::Ontology(format!(
                        "duplicate level-2 category {:?}",
                        l2_name
                    )));
                }
                level2.push((l2_name.clone(), kind));

                for l3 in &l2.level3 {
                    let name = l3.name.trim().to_string();
                    let norm = normalize_label(&name);
                    if norm.is_empty() {
                        return Err(Error::Ontology("empty level-3 label name".into()));
                    }
                    if by_norm_name.contains_key(&norm) {
                        return Err(Error::Ontology(format!(
                            "duplicate level-3 label {:?}",
                            name
                        )));
                    }

                    let mut examples = Vec::new();
                    for ex in &l3.examples {
                        let ex = ex.trim().to_lowercase();
                        if ex.is_empty() {
                            continue;
                        }
                        if let Some(owner) = example_owner.get(&ex) {
                            if normalize_label(owner) != norm {
                                return Err(Error::Ontology(format!(
                                    "example {:?} listed under both {:?} and {:?}",
                                    ex, owner, name
                                )));
                            }
                        }
                        example_owner.insert(ex.clone(), name.clone());
                        if !examples.contains(&ex) {
                            examples.push(ex);
                        }
                    }

                    by_norm_name.insert(norm, labels.len());
                    labels.push(DataTypeLabel {
                        name,
                        level2: l2_name.clone(),
                        level1kind: kind,
                        examples,
                    });
                }
            }
        }

        if labels.is_empty() {
            return Err(Error::Ontology("ontology has no level-3 labels".into()));
        }

        Ok(Ontology { level1, level2, labels, by_norm_name })
    }

    /// Level-3 labels in file order.
    pub fn labels(&self) -> &[DataTypeLabel] {
        &self.labels
    }

    /// Level-2 category names in file order.
    pub fn level2_names(&self) -> Vec<&str> {
        self.level2.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn level1_kinds(&self) -> &[Level1Kind] {
        &self.level1
    }

    /// Look up a level-3 label, case-insensitively with surrounding
    /// whitespace trimmed.
    pub fn lookup(&self, label: &str) -> Option<&DataTypeLabel> {
        self.by_norm_name
            .get(&normalize_label(label))
            .map(|&i| &self.labels[i])
    }

    /// Resolve a level-3 label to its owning level-2 category.
    pub fn abstract_to_level2(&self, label: &str) -> Result<&str> {
        self.lookup(label)
            .map(|l| l.level2.as_str())
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Resolve a level-3 label to its level-1 ancestor kind.
    pub fn label_kind(&self, label: &str) -> Result<Level1Kind> {
        self.lookup(label)
            .map(|l| l.level1kind)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Level-1 kind owning a level-2 category name.
    pub fn level2_kind(&self, level2: &str) -> Option<Level1Kind> {
        let norm = normalize_label(level2);
        self.level2
            .iter()
            .find(|(n, _)| normalize_label(n) == norm)
            .map(|&(_, k)| k)
    }
}
