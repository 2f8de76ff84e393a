//! Article ingestion, tokenization, vocabulary construction and extended
//! co-author sets.
//!
//! The input format is JSONL: one object per line with `id`, `title`, `body`
//! and optional `authors` / `referenced_authors` string arrays. Unknown keys
//! are ignored. Author names are normalized (lowercase, trim, collapse
//! internal whitespace) on construction, so set operations downstream are
//! plain string comparisons.
//!
//! Tokenization feeds both the topic model and the word-frequency profiles.
//! It operates on the `body` field only; whether that carries an abstract or
//! a full text is up to the data producer.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stopwords::ENGLISH_STOPWORDS;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty: {0}")]
    EmptyCorpus(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate document id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("vocabulary is empty after pruning terms below document frequency {min_doc_freq}")]
    EmptyVocabulary { min_doc_freq: usize },
    #[error("invalid tokenizer config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One article: identifier, text and the author sets used for the
/// co-authorship signal. `tokens` is empty until [`Corpus::tokenize`] runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    pub authors: BTreeSet<String>,
    pub referenced_authors: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
}

impl Document {
    /// Builds a document, normalizing both author sets. Names that normalize
    /// to the empty string are dropped.
    pub fn new<I, J>(id: &str, title: &str, body: &str, authors: I, referenced_authors: J) -> Self
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
        J: IntoIterator,
        J::Item: AsRef<str>,
    {
        Document {
            id: id.to_string(),
            title: title.to_string(),
            body: body.to_string(),
            authors: normalize_names(authors),
            referenced_authors: normalize_names(referenced_authors),
            tokens: Vec::new(),
        }
    }
}

/// Ordered collection of documents with pairwise-distinct ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub source: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Fills `tokens` for every document from its body text. Documents are
    /// independent, so they are processed in parallel.
    pub fn tokenize(&mut self, cfg: &TokenizerConfig) {
        use rayon::prelude::*;
        self.documents
            .par_iter_mut()
            .for_each(|doc| doc.tokens = tokenize(&doc.body, cfg));
    }

    /// Writes the corpus back out as JSONL in the ingestion schema.
    /// Re-ingesting the output reproduces the same documents.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut out = BufWriter::new(file);
        for doc in &self.documents {
            let record = RawRecord {
                id: doc.id.clone(),
                title: doc.title.clone(),
                body: doc.body.clone(),
                authors: Some(doc.authors.iter().cloned().collect()),
                referenced_authors: Some(doc.referenced_authors.iter().cloned().collect()),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| CorpusError::io(path, std::io::Error::other(e)))?;
            writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
        }
        out.flush().map_err(|e| CorpusError::io(path, e))
    }
}

/// Result of [`ingest_corpus`]: the corpus plus ingestion metadata.
#[derive(Debug)]
pub struct Ingestion {
    pub corpus: Corpus,
    /// Number of records that were missing `authors` or `referenced_authors`.
    pub missing_author_fields: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    title: String,
    body: String,
    authors: Option<Vec<String>>,
    referenced_authors: Option<Vec<String>>,
}

/// Reads a JSONL file into a [`Corpus`], one document per line in file
/// order. Blank lines are skipped. Records missing an author field get an
/// empty set and bump the warning counter.
pub fn ingest_corpus(path: &Path) -> Result<Ingestion, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let reader = BufReader::new(file);

    let mut documents = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    let mut missing_author_fields = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        if let Some(first) = seen_ids.insert(record.id.clone(), line_no) {
            let _ = first;
            return Err(CorpusError::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        if record.authors.is_none() || record.referenced_authors.is_none() {
            missing_author_fields += 1;
        }
        documents.push(Document::new(
            &record.id,
            &record.title,
            &record.body,
            record.authors.unwrap_or_default(),
            record.referenced_authors.unwrap_or_default(),
        ));
    }

    if documents.is_empty() {
        return Err(CorpusError::EmptyCorpus(path.display().to_string()));
    }

    Ok(Ingestion {
        corpus: Corpus {
            documents,
            source: path.display().to_string(),
        },
        missing_author_fields,
    })
}

/// Tokenizer settings. Defaults: lowercase, strip non-alphabetic characters,
/// keep tokens of at least two characters, bundled English stopword list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub min_token_len: usize,
    pub stopwords: BTreeSet<String>,
    pub strip_non_alphabetic: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            min_token_len: 2,
            stopwords: ENGLISH_STOPWORDS.iter().map(|w| w.to_string()).collect(),
            strip_non_alphabetic: true,
        }
    }
}

impl TokenizerConfig {
    /// Replaces the stopword set, lowercasing entries when the lowercase
    /// flag is on so they match normalized tokens.
    pub fn with_stopwords<I>(mut self, words: I) -> Self
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        self.stopwords = words
            .into_iter()
            .map(|w| {
                let w = w.as_ref().trim();
                if self.lowercase {
                    w.to_lowercase()
                } else {
                    w.to_string()
                }
            })
            .filter(|w| !w.is_empty())
            .collect();
        self
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_token_len < 1 {
            return Err(CorpusError::InvalidConfig(
                "min_token_len must be at least 1".into(),
            ));
        }
        if self.lowercase {
            if let Some(w) = self.stopwords.iter().find(|w| **w != w.to_lowercase()) {
                return Err(CorpusError::InvalidConfig(format!(
                    "stopword {w:?} is not lowercase while the lowercase flag is set"
                )));
            }
        }
        Ok(())
    }
}

/// Splits text into normalized tokens. Deterministic; idempotent on its own
/// output under the same config.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let mut token: String = if cfg.strip_non_alphabetic {
                raw.chars().filter(|c| c.is_alphabetic()).collect()
            } else {
                raw.to_string()
            };
            if cfg.lowercase {
                token = token.to_lowercase();
            }
            if token.chars().count() < cfg.min_token_len || cfg.stopwords.contains(&token) {
                None
            } else {
                Some(token)
            }
        })
        .collect()
}

/// Distinct terms with contiguous integer ids, pruned by document frequency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    min_doc_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyData {
    terms: Vec<String>,
    min_doc_freq: usize,
}

impl From<VocabularyData> for Vocabulary {
    fn from(data: VocabularyData) -> Self {
        let index = data
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms: data.terms,
            index,
            min_doc_freq: data.min_doc_freq,
        }
    }
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData {
            terms: v.terms,
            min_doc_freq: v.min_doc_freq,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn min_doc_freq(&self) -> usize {
        self.min_doc_freq
    }

    /// Maps a token stream to vocabulary ids, dropping out-of-vocabulary
    /// tokens and preserving order.
    pub fn filter_tokens(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

/// Builds the vocabulary over a tokenized corpus. A term is kept iff it
/// occurs in at least `min_doc_freq` distinct documents; terms are sorted
/// lexicographically so ids are stable across document orderings.
pub fn build_vocabulary(corpus: &Corpus, min_doc_freq: usize) -> Result<Vocabulary, CorpusError> {
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    for doc in &corpus.documents {
        let distinct: HashSet<&str> = doc.tokens.iter().map(|t| t.as_str()).collect();
        for term in distinct {
            *doc_freq.entry(term).or_insert(0) += 1;
        }
    }

    let mut terms: Vec<String> = doc_freq
        .into_iter()
        .filter(|(_, df)| *df >= min_doc_freq)
        .map(|(term, _)| term.to_string())
        .collect();
    terms.sort_unstable();

    if terms.is_empty() {
        return Err(CorpusError::EmptyVocabulary { min_doc_freq });
    }

    let index = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(Vocabulary {
        terms,
        index,
        min_doc_freq,
    })
}

/// Union of a document's authors and referenced authors.
pub fn extended_coauthors(doc: &Document) -> BTreeSet<String> {
    doc.authors
        .union(&doc.referenced_authors)
        .map(|name| normalize_author(name))
        .filter(|name| !name.is_empty())
        .collect()
}

/// Lowercases, trims and collapses internal whitespace. Author identity is
/// exact match on the normalized form; no initials-vs-full-name resolution.
pub fn normalize_author(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn normalize_names<I>(names: I) -> BTreeSet<String>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    names
        .into_iter()
        .map(|n| normalize_author(n.as_ref()))
        .filter(|n| !n.is_empty())
        .collect()
}
