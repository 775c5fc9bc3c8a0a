//! Loader for the fixture corpus manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{AnalyzerError, SourceUnit};
use crate::harness::Outcome;

pub const MANIFEST_SCHEMA_VERSION: &str = "hpct.corpus/1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported manifest schema `{0}`")]
    Schema(String),
    #[error("manifest references missing file {0}")]
    MissingFile(PathBuf),
    #[error("entry {entry}: {message}")]
    Inconsistent { entry: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedPattern {
    pub pattern_id: String,
    pub construct_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    /// `<family>/<variant>`.
    pub name: String,
    pub family: String,
    /// `buggy`/`fixed` for defect pairs, `hint`/`plain` for coverage pairs,
    /// `listing` for reference test programs.
    pub variant: String,
    /// Relative to the corpus root; also the display path in goldens.
    pub source: String,
    pub golden: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sibling: Option<String>,
    pub expected_patterns: Vec<ExpectedPattern>,
    /// Verdict of the family's recipes run against this variant; `None`
    /// when it is not deterministic (races) or not applicable.
    #[serde(default)]
    pub expected_verdict: Option<Outcome>,
    pub taxonomy: String,
}

impl CorpusEntry {
    pub fn is_buggy(&self) -> bool {
        self.variant == "buggy"
    }

    /// The variant expected to trigger the family's pattern.
    pub fn is_positive(&self) -> bool {
        matches!(self.variant.as_str(), "buggy" | "hint")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub entries: Vec<CorpusEntry>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn entry(&self, name: &str) -> Option<&CorpusEntry> {
        self.manifest.entries.iter().find(|e| e.name == name)
    }

    pub fn entry_for_source(&self, source: &str) -> Option<&CorpusEntry> {
        self.manifest.entries.iter().find(|e| e.source == source)
    }

    pub fn source_path(&self, e: &CorpusEntry) -> PathBuf {
        self.root.join(&e.source)
    }

    pub fn golden_path(&self, e: &CorpusEntry) -> PathBuf {
        self.root.join(&e.golden)
    }

    pub fn read_unit(&self, e: &CorpusEntry) -> Result<SourceUnit, AnalyzerError> {
        SourceUnit::read(&self.source_path(e), &e.source, None)
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.manifest.entries
    }
}

/// Load and check a manifest; paths resolve against its directory.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| CorpusError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(CorpusError::Schema(manifest.schema_version));
    }
    let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let corpus = Corpus { root, manifest };
    for e in corpus.entries() {
        for p in [corpus.source_path(e), corpus.golden_path(e)] {
            if !p.is_file() {
                return Err(CorpusError::MissingFile(p));
            }
        }
        if let Some(s) = &e.sibling {
            let Some(sib) = corpus.entry(s) else {
                return Err(CorpusError::Inconsistent {
                    entry: e.name.clone(),
                    message: format!("unknown sibling {s}"),
                });
            };
            if sib.family != e.family {
                return Err(CorpusError::Inconsistent {
                    entry: e.name.clone(),
                    message: format!("sibling {s} belongs to another family"),
                });
            }
        } else if e.is_buggy() {
            return Err(CorpusError::Inconsistent {
                entry: e.name.clone(),
                message: "buggy entry without a fixed sibling".into(),
            });
        }
    }
    Ok(corpus)
}
