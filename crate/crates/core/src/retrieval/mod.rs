//! Grounding layer: ranked passage retrieval with source backlinks.
//!
//! Student corpora and the GRS policy index are separate indexes. The policy
//! path only ever sees a [`PolicyIndexHandle`], which can only be built from a
//! corpus of class [`CorpusClass::PolicyIndex`], so student text cannot reach
//! a policy query.

pub mod corpus;
pub mod guard;
pub mod index;
pub mod policy;
pub mod text;

use std::sync::Arc;

use thiserror::Error;

pub use corpus::{load_corpus_dir, Corpus, CorpusClass, Document, SourceBacklink};
pub use guard::{InjectionGuard, LexicalInjectionGuard, NoGuard};
pub use index::{Bm25, Hit, IndexStats, PassageIndex, QueryFilter, QueryResult, Ranker};
pub use policy::{
    apply_diff, clause_set, conflict_scan, policy_diff, Clause, ClauseChange, ClauseKey,
    ClauseSet, Conflict, ConflictReport,
};

use crate::ids::DocumentId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(DocumentId),
    #[error("corpus of class {0} cannot be used as the policy index")]
    NotPolicyCorpus(String),
    #[error("corpus ingestion failed: {0}")]
    Ingest(String),
}

/// Shared, immutable handle to a built index.
pub type IndexHandle = Arc<PassageIndex>;

pub fn index_corpus(corpus: Corpus) -> Result<IndexHandle, RetrievalError> {
    PassageIndex::build(corpus).map(Arc::new)
}

/// An index statically known to hold only policy documents.
#[derive(Debug, Clone)]
pub struct PolicyIndexHandle(IndexHandle);

impl PolicyIndexHandle {
    pub fn new(index: IndexHandle) -> Result<Self, RetrievalError> {
        match index.class() {
            CorpusClass::PolicyIndex => Ok(Self(index)),
            other => Err(RetrievalError::NotPolicyCorpus(other.to_string())),
        }
    }

    pub fn empty() -> Self {
        Self(index_corpus(Corpus::new("policy", CorpusClass::PolicyIndex, vec![])).expect("empty corpus indexes"))
    }

    pub fn index(&self) -> &PassageIndex {
        &self.0
    }

    pub fn query(&self, text: &str, k: usize) -> Vec<Hit> {
        self.0.query(text, k)
    }

    pub fn conflict_scan(&self) -> ConflictReport {
        conflict_scan(self.0.corpus())
    }
}
