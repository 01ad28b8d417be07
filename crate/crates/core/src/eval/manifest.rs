//! Listening-test manifests: items, coded conditions and scored pairs.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentClass {
    Speech,
    Music,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub content_class: ContentClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub condition_id: String,
    pub codec_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bitrate_kbps: Option<f64>,
    #[serde(default)]
    pub is_lowpass_anchor: bool,
    #[serde(default)]
    pub is_hidden_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub item_id: String,
    pub condition_id: String,
    pub ref_embedding_path: PathBuf,
    pub test_embedding_path: PathBuf,
    /// MUSHRA score in [0, 100]; may be absent in a skeleton awaiting a score import.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mushra_score: Option<f64>,
}

fn default_label() -> String {
    "default".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    /// Name of the embedding domain the paths point into.
    #[serde(default = "default_label")]
    pub embedding_label: String,
    pub items: Vec<Item>,
    pub conditions: Vec<Condition>,
    pub pairs: Vec<ScoredPair>,
}

impl EvalManifest {
    /// Checks identifiers, uniqueness and score ranges. Embedding files are
    /// not opened here; a missing file fails only its own pair at run time.
    pub fn validate(&self) -> Result<()> {
        let mut items = HashSet::new();
        for it in &self.items {
            if !items.insert(it.item_id.as_str()) {
                return Err(Error::Validation(format!("duplicate item '{}'", it.item_id)));
            }
        }
        let mut conds = HashSet::new();
        for c in &self.conditions {
            if !conds.insert(c.condition_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate condition '{}'",
                    c.condition_id
                )));
            }
        }
        let mut seen = HashSet::new();
        for p in &self.pairs {
            if !items.contains(p.item_id.as_str()) {
                return Err(Error::Validation(format!("pair references unknown item '{}'", p.item_id)));
            }
            if !conds.contains(p.condition_id.as_str()) {
                return Err(Error::Validation(format!(
                    "pair references unknown condition '{}'",
                    p.condition_id
                )));
            }
            if !seen.insert((p.item_id.as_str(), p.condition_id.as_str())) {
                return Err(Error::Validation(format!(
                    "duplicate pair ({}, {})",
                    p.item_id, p.condition_id
                )));
            }
            if let Some(s) = p.mushra_score {
                if !(0.0..=100.0).contains(&s) {
                    return Err(Error::Validation(format!(
                        "score {s} for ({}, {}) outside [0, 100]",
                        p.item_id, p.condition_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn require_scores(&self) -> Result<()> {
        match self.pairs.iter().find(|p| p.mushra_score.is_none()) {
            Some(p) => Err(Error::Validation(format!(
                "pair ({}, {}) has no MUSHRA score",
                p.item_id, p.condition_id
            ))),
            None => Ok(()),
        }
    }

    pub fn condition(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.condition_id == id)
    }

    /// Resolves relative embedding paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in &mut self.pairs {
            for path in [&mut p.ref_embedding_path, &mut p.test_embedding_path] {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// Fills `mushra_score` from CSV rows `item_id,condition_id,score`.
    /// Every row must name an existing pair.
    pub fn merge_scores_csv<R: Read>(&mut self, reader: R) -> Result<usize> {
        #[derive(Deserialize)]
        struct Row {
            item_id: String,
            condition_id: String,
            score: f64,
        }
        let index: HashMap<(String, String), usize> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.item_id.clone(), p.condition_id.clone()), i))
            .collect();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut merged = 0;
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let i = *index
                .get(&(row.item_id.clone(), row.condition_id.clone()))
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "score for unknown pair ({}, {})",
                        row.item_id, row.condition_id
                    ))
                })?;
            self.pairs[i].mushra_score = Some(row.score);
            merged += 1;
        }
        self.validate()?;
        Ok(merged)
    }
}

/// Reads a manifest, resolving relative embedding paths against its directory.
pub fn load_manifest(path: &Path) -> Result<EvalManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: EvalManifest = serde_json::from_str(&text)?;
    if let Some(dir) = path.parent() {
        m.resolve_paths(dir);
    }
    m.validate()?;
    Ok(m)
}
