//! Corpora, documents, source backlinks and directory ingestion.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::ids::{DocumentId, StudentId};

/// The two corpus classes. They never mix in one index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", content = "student")]
pub enum CorpusClass {
    StudentCorpus(StudentId),
    PolicyIndex,
}

impl fmt::Display for CorpusClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusClass::StudentCorpus(s) => write!(f, "student:{s}"),
            CorpusClass::PolicyIndex => f.write_str("policy"),
        }
    }
}

impl FromStr for CorpusClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "policy" => Ok(CorpusClass::PolicyIndex),
            Some(("student", id)) if !id.is_empty() => {
                Ok(CorpusClass::StudentCorpus(StudentId::new(id)))
            }
            _ => Err(format!("corpus class must be `policy` or `student:<id>`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocumentId,
    pub title: String,
    pub body: String,
    #[serde(default = "one")]
    pub version: u32,
    #[serde(default)]
    pub effective_date: Option<NaiveDate>,
}

fn one() -> u32 {
    1
}

impl Document {
    pub fn new(id: impl Into<DocumentId>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            version: 1,
            effective_date: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub id: String,
    pub class: CorpusClass,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(id: impl Into<String>, class: CorpusClass, documents: Vec<Document>) -> Self {
        Self {
            id: id.into(),
            class,
            documents,
        }
    }

    pub fn document(&self, id: &DocumentId) -> Option<&Document> {
        self.documents.iter().find(|d| &d.id == id)
    }

    pub fn check_unique_ids(&self) -> Result<(), RetrievalError> {
        let mut seen = BTreeSet::new();
        for d in &self.documents {
            if !seen.insert(&d.id) {
                return Err(RetrievalError::DuplicateDocument(d.id.clone()));
            }
        }
        Ok(())
    }
}

/// Points at the exact span of a document version a passage came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceBacklink {
    pub document_id: DocumentId,
    pub passage_span: (usize, usize),
    pub document_version: u32,
    pub quoted_text: String,
}

impl SourceBacklink {
    /// True when the quoted text is byte-identical to the span of the
    /// document at the recorded version.
    pub fn resolves_in(&self, corpus: &Corpus) -> bool {
        corpus.document(&self.document_id).is_some_and(|d| {
            d.version == self.document_version
                && d.body.get(self.passage_span.0..self.passage_span.1) == Some(self.quoted_text.as_str())
        })
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    #[serde(rename = "document", default)]
    documents: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    title: String,
    #[serde(default = "one")]
    version: u32,
    #[serde(default)]
    effective_date: Option<NaiveDate>,
    class: String,
    #[serde(default)]
    file: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Load a corpus directory: `manifest.toml` plus one plain-text file per
/// document (`file`, defaulting to `<id>.txt`). Every manifest entry must
/// carry the class the caller expects.
pub fn load_corpus_dir(dir: &Path, class: &CorpusClass) -> Result<Corpus, RetrievalError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| RetrievalError::Ingest(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest = toml::from_str(&text)
        .map_err(|e| RetrievalError::Ingest(format!("{}: {e}", manifest_path.display())))?;
    let mut documents = Vec::with_capacity(manifest.documents.len());
    for entry in manifest.documents {
        let entry_class: CorpusClass = entry
            .class
            .parse()
            .map_err(|e: String| RetrievalError::Ingest(format!("document `{}`: {e}", entry.id)))?;
        if &entry_class != class {
            return Err(RetrievalError::Ingest(format!(
                "document `{}` is class {entry_class}, expected {class}",
                entry.id
            )));
        }
        let file = entry.file.unwrap_or_else(|| format!("{}.txt", entry.id));
        let body = std::fs::read_to_string(dir.join(&file))
            .map_err(|e| RetrievalError::Ingest(format!("{file}: {e}")))?;
        documents.push(Document {
            id: DocumentId::new(entry.id),
            title: entry.title,
            body,
            version: entry.version,
            effective_date: entry.effective_date,
        });
    }
    let id = match class {
        CorpusClass::PolicyIndex => "policy".to_owned(),
        CorpusClass::StudentCorpus(s) => format!("student-{s}"),
    };
    let corpus = Corpus::new(id, class.clone(), documents);
    corpus.check_unique_ids()?;
    Ok(corpus)
}
