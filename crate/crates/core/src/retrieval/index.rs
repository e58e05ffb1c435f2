//! Immutable passage index with pluggable lexical ranking.
//!
//! Documents are cut into windows of sentences and every window is indexed as
//! one retrieval unit. Term statistics (document frequency, average length)
//! are computed over those units. The default ranker is Okapi BM25:
//!
//! ```text
//! idf(t)      = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! score(q, p) = Σ_t∈q idf(t) · tf(t,p)·(k1 + 1) / (tf(t,p) + k1·(1 - b + b·|p|/avg|p|))
//! ```
//!
//! Results are ordered by score descending, then by document id and start
//! offset ascending, so identical inputs always give identical rankings.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, CorpusClass, SourceBacklink};
use super::guard::{InjectionGuard, LexicalInjectionGuard};
use super::text::{passage_windows, tokenize};
use super::RetrievalError;
use crate::ids::DocumentId;

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_OVERLAP: usize = 1;

#[derive(Debug, Clone)]
pub struct IndexedPassage {
    pub document_id: DocumentId,
    pub document_version: u32,
    pub span: (usize, usize),
    pub length: usize,
    pub term_freqs: HashMap<String, usize>,
    /// Set when the injection guard flagged the passage text.
    pub quarantined: Option<String>,
}

/// Corpus-level statistics a ranker may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub passages: usize,
    pub total_terms: usize,
    pub avg_length: f64,
    pub document_frequency: BTreeMap<String, usize>,
}

pub trait Ranker: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn score(&self, stats: &IndexStats, query_terms: &[String], passage: &IndexedPassage) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Ranker for Bm25 {
    fn name(&self) -> &str {
        "bm25"
    }

    fn score(&self, stats: &IndexStats, query_terms: &[String], passage: &IndexedPassage) -> f64 {
        let n = stats.passages as f64;
        let norm = if stats.avg_length > 0.0 {
            passage.length as f64 / stats.avg_length
        } else {
            0.0
        };
        let mut score = 0.0;
        for term in query_terms {
            let tf = match passage.term_freqs.get(term) {
                Some(&tf) if tf > 0 => tf as f64,
                _ => continue,
            };
            let df = stats.document_frequency.get(term).copied().unwrap_or(0) as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * (tf * (self.k1 + 1.0)) / (tf + self.k1 * (1.0 - self.b + self.b * norm));
        }
        score
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub passage: String,
    pub backlink: SourceBacklink,
    pub score: f64,
}

/// Restrictions applied at query time (from behaviour patches).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFilter {
    pub excluded_documents: BTreeSet<DocumentId>,
    /// Lowercased topic phrases; passages mentioning one are dropped.
    pub excluded_topics: BTreeSet<String>,
}

impl QueryFilter {
    pub fn allows(&self, document: &DocumentId, passage_text: &str) -> bool {
        if self.excluded_documents.contains(document) {
            return false;
        }
        if self.excluded_topics.is_empty() {
            return true;
        }
        let lower = passage_text.to_lowercase();
        !self.excluded_topics.iter().any(|t| lower.contains(t.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
    /// Matching passages withheld because the injection guard flagged them.
    pub quarantined: Vec<SourceBacklink>,
}

#[derive(Debug)]
pub struct PassageIndex {
    corpus: Arc<Corpus>,
    passages: Vec<IndexedPassage>,
    stats: IndexStats,
    ranker: Box<dyn Ranker>,
}

impl PassageIndex {
    pub fn build(corpus: Corpus) -> Result<Self, RetrievalError> {
        Self::build_with(
            corpus,
            Box::new(Bm25::default()),
            &LexicalInjectionGuard,
            DEFAULT_WINDOW,
            DEFAULT_OVERLAP,
        )
    }

    pub fn build_with(
        corpus: Corpus,
        ranker: Box<dyn Ranker>,
        guard: &dyn InjectionGuard,
        window: usize,
        overlap: usize,
    ) -> Result<Self, RetrievalError> {
        corpus.check_unique_ids()?;
        let mut passages = Vec::new();
        for doc in &corpus.documents {
            for (start, end) in passage_windows(&doc.body, window, overlap) {
                let text = &doc.body[start..end];
                let tokens = tokenize(text);
                let mut term_freqs = HashMap::new();
                for t in &tokens {
                    *term_freqs.entry(t.clone()).or_insert(0) += 1;
                }
                passages.push(IndexedPassage {
                    document_id: doc.id.clone(),
                    document_version: doc.version,
                    span: (start, end),
                    length: tokens.len(),
                    term_freqs,
                    quarantined: guard.inspect(text),
                });
            }
        }
        let mut document_frequency = BTreeMap::new();
        let mut total_terms = 0;
        for p in &passages {
            total_terms += p.length;
            for term in p.term_freqs.keys() {
                *document_frequency.entry(term.clone()).or_insert(0) += 1;
            }
        }
        let avg_length = if passages.is_empty() {
            0.0
        } else {
            total_terms as f64 / passages.len() as f64
        };
        let stats = IndexStats {
            passages: passages.len(),
            total_terms,
            avg_length,
            document_frequency,
        };
        Ok(Self {
            corpus: Arc::new(corpus),
            passages,
            stats,
            ranker,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn class(&self) -> &CorpusClass {
        &self.corpus.class
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn passages(&self) -> &[IndexedPassage] {
        &self.passages
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.stats.document_frequency.get(term).copied().unwrap_or(0)
    }

    pub fn ranker_name(&self) -> &str {
        self.ranker.name()
    }

    fn backlink(&self, p: &IndexedPassage) -> SourceBacklink {
        let doc = self
            .corpus
            .document(&p.document_id)
            .expect("passage refers to an indexed document");
        SourceBacklink {
            document_id: p.document_id.clone(),
            passage_span: p.span,
            document_version: p.document_version,
            quoted_text: doc.body[p.span.0..p.span.1].to_owned(),
        }
    }

    pub fn query(&self, text: &str, k: usize) -> Vec<Hit> {
        self.query_filtered(text, k, &QueryFilter::default()).hits
    }

    pub fn query_filtered(&self, text: &str, k: usize, filter: &QueryFilter) -> QueryResult {
        let k = k.max(1);
        let mut seen = BTreeSet::new();
        let terms: Vec<String> = tokenize(text).into_iter().filter(|t| seen.insert(t.clone())).collect();
        let mut scored: Vec<(f64, &IndexedPassage)> = Vec::new();
        let mut quarantined = Vec::new();
        for p in &self.passages {
            let score = self.ranker.score(&self.stats, &terms, p);
            if score <= 0.0 {
                continue;
            }
            let link = self.backlink(p);
            if !filter.allows(&p.document_id, &link.quoted_text) {
                continue;
            }
            if p.quarantined.is_some() {
                quarantined.push(link);
                continue;
            }
            scored.push((score, p));
        }
        scored.sort_by(|a, b| rank_order((a.0, a.1), (b.0, b.1)));
        let hits = scored
            .into_iter()
            .take(k)
            .map(|(score, p)| {
                let backlink = self.backlink(p);
                Hit {
                    passage: backlink.quoted_text.clone(),
                    backlink,
                    score,
                }
            })
            .collect();
        QueryResult { hits, quarantined }
    }

    /// Best passage of one document for `text`, ignoring the score floor.
    /// Used to satisfy required sources.
    pub fn best_in_document(&self, document: &DocumentId, text: &str) -> Option<Hit> {
        let terms = tokenize(text);
        self.passages
            .iter()
            .filter(|p| &p.document_id == document && p.quarantined.is_none())
            .map(|p| (self.ranker.score(&self.stats, &terms, p), p))
            .min_by(|a, b| rank_order(*a, *b))
            .map(|(score, p)| {
                let backlink = self.backlink(p);
                Hit {
                    passage: backlink.quoted_text.clone(),
                    backlink,
                    score,
                }
            })
    }
}

fn rank_order(a: (f64, &IndexedPassage), b: (f64, &IndexedPassage)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.document_id.cmp(&b.1.document_id))
        .then_with(|| a.1.span.0.cmp(&b.1.span.0))
}
