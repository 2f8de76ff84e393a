//! Latent topic extraction by collapsed Gibbs sampling and the hard
//! partition of the corpus into topic classes by dominant topic.
//!
//! One training run is single-threaded and bit-deterministic for a fixed
//! (corpus order, vocabulary, config) triple. The point estimates for the
//! topic-word matrix `phi` and the document-topic matrix `theta` come from
//! the final sweep's counts with Dirichlet smoothing; no averaging across
//! post-burn-in samples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Vocabulary};

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("no document has an in-vocabulary token")]
    NoTokens,
    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("invalid topic model config: {0}")]
    InvalidConfig(String),
    #[error("bad model file {path}: {message}")]
    BadModelFile { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sampler configuration. `dirichlet_doc_topic` is the document-topic
/// smoothing (the conventional alpha), `dirichlet_topic_word` the
/// topic-word smoothing (beta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub dirichlet_doc_topic: f64,
    pub dirichlet_topic_word: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        let num_topics = 26;
        LdaConfig {
            num_topics,
            dirichlet_doc_topic: 50.0 / num_topics as f64,
            dirichlet_topic_word: 0.01,
            iterations: 1000,
            burn_in: 200,
            seed: 42,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<(), TopicsError> {
        if self.num_topics < 1 {
            return Err(TopicsError::InvalidConfig("num_topics must be >= 1".into()));
        }
        for smoothing in [self.dirichlet_doc_topic, self.dirichlet_topic_word] {
            if !smoothing.is_finite() || smoothing <= 0.0 {
                return Err(TopicsError::InvalidConfig(
                    "smoothing parameters must be positive and finite".into(),
                ));
            }
        }
        if self.iterations < 1 {
            return Err(TopicsError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(TopicsError::InvalidConfig(format!(
                "burn_in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

/// Collapsed Gibbs sampler state: per-token topic assignments plus the
/// count tables they induce. Exposed so diagnostics and tests can drive
/// sweeps one at a time and inspect the bookkeeping.
#[derive(Debug)]
pub struct GibbsSampler {
    num_topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    doc_topic: Vec<u32>,  // N x K
    topic_word: Vec<u32>, // K x V
    topic_total: Vec<u32>,
    rng: ChaCha8Rng,
}

impl GibbsSampler {
    /// Initializes counts from uniformly random topic assignments drawn
    /// from the seeded generator. `docs` holds vocabulary ids per document.
    pub fn new(docs: Vec<Vec<usize>>, vocab_size: usize, cfg: &LdaConfig) -> Result<Self, TopicsError> {
        cfg.validate()?;
        if docs.iter().all(|d| d.is_empty()) {
            return Err(TopicsError::NoTokens);
        }
        let k = cfg.num_topics;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut doc_topic = vec![0u32; docs.len() * k];
        let mut topic_word = vec![0u32; k * vocab_size];
        let mut topic_total = vec![0u32; k];
        let mut assignments = Vec::with_capacity(docs.len());
        for (d, words) in docs.iter().enumerate() {
            let mut z = Vec::with_capacity(words.len());
            for &w in words {
                debug_assert!(w < vocab_size);
                let t = rng.random_range(0..k);
                z.push(t);
                doc_topic[d * k + t] += 1;
                topic_word[t * vocab_size + w] += 1;
                topic_total[t] += 1;
            }
            assignments.push(z);
        }
        Ok(GibbsSampler {
            num_topics: k,
            vocab_size,
            alpha: cfg.dirichlet_doc_topic,
            beta: cfg.dirichlet_topic_word,
            docs,
            assignments,
            doc_topic,
            topic_word,
            topic_total,
            rng,
        })
    }

    /// One full sweep: every token is resampled from its conditional
    /// distribution with its own current assignment removed from the counts.
    pub fn sweep(&mut self) {
        let k = self.num_topics;
        let v = self.vocab_size;
        let beta_total = self.beta * v as f64;
        let mut weights = vec![0.0f64; k];
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.doc_topic[d * k + old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_total[old] -= 1;

                let mut total = 0.0;
                for (t, slot) in weights.iter_mut().enumerate() {
                    let word_part = (self.topic_word[t * v + w] as f64 + self.beta)
                        / (self.topic_total[t] as f64 + beta_total);
                    let doc_part = self.doc_topic[d * k + t] as f64 + self.alpha;
                    *slot = word_part * doc_part;
                    total += *slot;
                }
                let draw = self.rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut new = k - 1;
                for (t, &weight) in weights.iter().enumerate() {
                    acc += weight;
                    if draw < acc {
                        new = t;
                        break;
                    }
                }

                self.assignments[d][i] = new;
                self.doc_topic[d * k + new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn doc_topic_count(&self, d: usize, t: usize) -> u32 {
        self.doc_topic[d * self.num_topics + t]
    }

    pub fn topic_word_count(&self, t: usize, w: usize) -> u32 {
        self.topic_word[t * self.vocab_size + w]
    }

    pub fn topic_total(&self, t: usize) -> u32 {
        self.topic_total[t]
    }

    /// Verifies the count tables against the assignments: per-document
    /// topic counts must sum to the document length and per-topic word
    /// counts to the topic total.
    pub fn check_count_conservation(&self) -> Result<(), String> {
        for (d, words) in self.docs.iter().enumerate() {
            let sum: u32 = (0..self.num_topics).map(|t| self.doc_topic_count(d, t)).sum();
            if sum as usize != words.len() {
                return Err(format!(
                    "document {d}: topic counts sum to {sum}, expected {}",
                    words.len()
                ));
            }
        }
        for t in 0..self.num_topics {
            let sum: u32 = (0..self.vocab_size).map(|w| self.topic_word_count(t, w)).sum();
            if sum != self.topic_total(t) {
                return Err(format!(
                    "topic {t}: word counts sum to {sum}, expected {}",
                    self.topic_total(t)
                ));
            }
        }
        let grand: u32 = self.topic_total.iter().sum();
        let tokens: usize = self.docs.iter().map(|d| d.len()).sum();
        if grand as usize != tokens {
            return Err(format!("topic totals sum to {grand}, expected {tokens}"));
        }
        Ok(())
    }

    fn phi(&self) -> Vec<Vec<f64>> {
        let beta_total = self.beta * self.vocab_size as f64;
        (0..self.num_topics)
            .map(|t| {
                let denom = self.topic_total[t] as f64 + beta_total;
                (0..self.vocab_size)
                    .map(|w| (self.topic_word[t * self.vocab_size + w] as f64 + self.beta) / denom)
                    .collect()
            })
            .collect()
    }

    fn theta(&self) -> Vec<Vec<f64>> {
        let k = self.num_topics;
        let alpha_total = self.alpha * k as f64;
        self.docs
            .iter()
            .enumerate()
            .map(|(d, words)| {
                let denom = words.len() as f64 + alpha_total;
                (0..k)
                    .map(|t| (self.doc_topic[d * k + t] as f64 + self.alpha) / denom)
                    .collect()
            })
            .collect()
    }
}

/// Trained topic model: topic-word distributions (`phi`, one row per
/// topic), document-topic distributions (`theta`, one row per document) and
/// the final per-token assignments they were estimated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub config: LdaConfig,
    pub vocabulary: Vocabulary,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// Topic id per in-vocabulary token, per document, in token order.
    pub assignments: Vec<Vec<usize>>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: TopicModel,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.config.num_topics
    }

    pub fn num_documents(&self) -> usize {
        self.theta.len()
    }

    pub fn save(&self, path: &Path) -> Result<(), TopicsError> {
        let file = File::create(path).map_err(|e| TopicsError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut out = BufWriter::new(file);
        let wrapper = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(&mut out, &wrapper).map_err(|e| TopicsError::BadModelFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        out.flush().map_err(|e| TopicsError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TopicsError> {
        let file = File::open(path).map_err(|e| TopicsError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let wrapper: ModelFile =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| TopicsError::BadModelFile {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if wrapper.format_version != MODEL_FORMAT_VERSION {
            return Err(TopicsError::BadModelFile {
                path: path.display().to_string(),
                message: format!(
                    "unsupported format version {} (expected {MODEL_FORMAT_VERSION})",
                    wrapper.format_version
                ),
            });
        }
        Ok(wrapper.model)
    }
}

/// Runs the configured number of full collapsed-Gibbs sweeps and estimates
/// the model from the final counts.
pub fn train_lda(
    corpus: &Corpus,
    vocab: &Vocabulary,
    cfg: &LdaConfig,
) -> Result<TopicModel, TopicsError> {
    let docs: Vec<Vec<usize>> = corpus
        .documents
        .iter()
        .map(|d| vocab.filter_tokens(&d.tokens))
        .collect();
    let mut sampler = GibbsSampler::new(docs, vocab.len(), cfg)?;
    for _ in 0..cfg.iterations {
        sampler.sweep();
        debug_assert!(sampler.check_count_conservation().is_ok());
    }
    Ok(TopicModel {
        config: cfg.clone(),
        vocabulary: vocab.clone(),
        phi: sampler.phi(),
        theta: sampler.theta(),
        assignments: sampler.assignments,
    })
}

/// Argmax over a document's topic distribution; ties go to the lowest
/// topic id.
pub fn dominant_topic(model: &TopicModel, doc_index: usize) -> Result<usize, TopicsError> {
    let row = model
        .theta
        .get(doc_index)
        .ok_or(TopicsError::IndexOutOfRange {
            what: "document",
            index: doc_index,
            limit: model.theta.len(),
        })?;
    let mut best = 0;
    for (t, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = t;
        }
    }
    Ok(best)
}

/// Documents of one topic class; `members` are corpus indices in corpus
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicClass {
    pub topic_id: usize,
    pub members: Vec<usize>,
}

/// Splits the corpus into one class per topic by dominant topic. Classes
/// may be empty; together they partition the corpus.
pub fn partition_by_topic(corpus: &Corpus, model: &TopicModel) -> Vec<TopicClass> {
    let mut classes: Vec<TopicClass> = (0..model.num_topics())
        .map(|topic_id| TopicClass {
            topic_id,
            members: Vec::new(),
        })
        .collect();
    for d in 0..corpus.documents.len() {
        let t = dominant_topic(model, d).expect("corpus and model sizes match");
        classes[t].members.push(d);
    }
    classes
}

/// The k most probable terms of a topic, descending; ties go to the lowest
/// term id. Asking for more terms than the vocabulary has returns them all.
pub fn top_words(model: &TopicModel, topic: usize, k: usize) -> Result<Vec<String>, TopicsError> {
    let row = model.phi.get(topic).ok_or(TopicsError::IndexOutOfRange {
        what: "topic",
        index: topic,
        limit: model.phi.len(),
    })?;
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(k)
        .map(|id| model.vocabulary.term(id).to_string())
        .collect())
}

/// Held-out perplexity: exp of the negative mean per-token log likelihood.
/// Held-out documents get a folded-in theta from one Gibbs pass with phi
/// frozen; the fold-in RNG stream is derived from the model seed, so the
/// result is deterministic. Out-of-vocabulary tokens are skipped.
pub fn perplexity(model: &TopicModel, heldout: &Corpus) -> Result<f64, TopicsError> {
    let k = model.num_topics();
    let alpha = model.config.dirichlet_doc_topic;
    let docs: Vec<Vec<usize>> = heldout
        .documents
        .iter()
        .map(|d| model.vocabulary.filter_tokens(&d.tokens))
        .collect();
    let total_tokens: usize = docs.iter().map(|d| d.len()).sum();
    if total_tokens == 0 {
        return Err(TopicsError::NoTokens);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ FOLD_IN_SALT);
    let mut log_likelihood = 0.0;
    for words in &docs {
        if words.is_empty() {
            continue;
        }
        // random init, then one frozen-phi sweep
        let mut counts = vec![0u32; k];
        let mut z = Vec::with_capacity(words.len());
        for _ in words {
            let t = rng.random_range(0..k);
            z.push(t);
            counts[t] += 1;
        }
        let mut weights = vec![0.0f64; k];
        for (i, &w) in words.iter().enumerate() {
            let old = z[i];
            counts[old] -= 1;
            let mut total = 0.0;
            for (t, slot) in weights.iter_mut().enumerate() {
                *slot = model.phi[t][w] * (counts[t] as f64 + alpha);
                total += *slot;
            }
            let draw = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut new = k - 1;
            for (t, &weight) in weights.iter().enumerate() {
                acc += weight;
                if draw < acc {
                    new = t;
                    break;
                }
            }
            z[i] = new;
            counts[new] += 1;
        }

        let denom = words.len() as f64 + alpha * k as f64;
        let theta: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 + alpha) / denom)
            .collect();
        for &w in words {
            let p: f64 = (0..k).map(|t| theta[t] * model.phi[t][w]).sum();
            log_likelihood += p.ln();
        }
    }

    Ok((-log_likelihood / total_tokens as f64).exp())
}

const FOLD_IN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic synthetic corpus drawn from `num_topics` disjoint
/// vocabulary blocks, one block per topic; document d is generated from
/// topic d % num_topics. Returns the corpus and the generating labels.
/// Intended for model-recovery checks and demos. Generated words are purely
/// alphabetic so they survive the default tokenizer unchanged.
pub fn synthetic_block_corpus(
    num_docs: usize,
    tokens_per_doc: usize,
    words_per_topic: usize,
    num_topics: usize,
    seed: u64,
) -> (Corpus, Vec<usize>) {
    use crate::corpus::Document;
    fn letters(x: usize) -> String {
        // digits mapped a..j, so words stay alphabetic
        x.to_string()
            .bytes()
            .map(|b| (b - b'0' + b'a') as char)
            .collect()
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut documents = Vec::with_capacity(num_docs);
    let mut labels = Vec::with_capacity(num_docs);
    for d in 0..num_docs {
        let topic = d % num_topics;
        let words: Vec<String> = (0..tokens_per_doc)
            .map(|_| {
                let w = rng.random_range(0..words_per_topic);
                format!("t{}w{}", letters(topic), letters(w))
            })
            .collect();
        let mut doc = Document::new(
            &format!("doc{d:04}"),
            &format!("synthetic {d}"),
            &words.join(" "),
            [] as [&str; 0],
            [] as [&str; 0],
        );
        doc.tokens = words;
        documents.push(doc);
        labels.push(topic);
    }
    (
        Corpus {
            documents,
            source: format!("synthetic-{num_topics}-topics"),
        },
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, Document, TokenizerConfig};

    fn tiny_corpus(bodies: &[&str]) -> (Corpus, Vocabulary) {
        let documents = bodies
            .iter()
            .enumerate()
            .map(|(i, b)| Document::new(&format!("d{i}"), "", b, [] as [&str; 0], [] as [&str; 0]))
            .collect();
        let mut corpus = Corpus {
            documents,
            source: "test".into(),
        };
        let cfg = TokenizerConfig {
            min_token_len: 1,
            stopwords: Default::default(),
            strip_non_alphabetic: false,
            ..TokenizerConfig::default()
        };
        corpus.tokenize(&cfg);
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        (corpus, vocab)
    }

    fn quick_cfg(num_topics: usize, iterations: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            num_topics,
            dirichlet_doc_topic: 1.0,
            dirichlet_topic_word: 0.01,
            iterations,
            burn_in: 0,
            seed,
        }
    }

    #[test]
    fn config_validation() {
        assert!(LdaConfig::default().validate().is_ok());
        let bad = LdaConfig {
            burn_in: 9,
            iterations: 9,
            ..LdaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LdaConfig {
            dirichlet_doc_topic: 0.0,
            ..LdaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LdaConfig {
            num_topics: 0,
            ..LdaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_topic_is_degenerate() {
        let (corpus, vocab) = tiny_corpus(&["a a b", "b c", "c c c a"]);
        let cfg = quick_cfg(1, 5, 7);
        let model = train_lda(&corpus, &vocab, &cfg).unwrap();
        for row in &model.theta {
            assert_eq!(row, &vec![1.0]);
        }
        // phi equals the smoothed empirical word distribution
        let mut counts = vec![0u32; vocab.len()];
        let mut total = 0u32;
        for doc in &corpus.documents {
            for t in &doc.tokens {
                counts[vocab.id(t).unwrap()] += 1;
                total += 1;
            }
        }
        let beta = cfg.dirichlet_topic_word;
        let denom = total as f64 + beta * vocab.len() as f64;
        for (w, &c) in counts.iter().enumerate() {
            assert_eq!(model.phi[0][w], (c as f64 + beta) / denom);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (corpus, vocab) = tiny_corpus(&["a a b c", "b c d", "d d a", "c b a d"]);
        let cfg = quick_cfg(3, 20, 123);
        let m1 = train_lda(&corpus, &vocab, &cfg).unwrap();
        let m2 = train_lda(&corpus, &vocab, &cfg).unwrap();
        assert_eq!(m1.assignments, m2.assignments);
        let bits = |m: &TopicModel| -> Vec<u64> {
            m.phi
                .iter()
                .chain(&m.theta)
                .flatten()
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&m1), bits(&m2));
    }

    #[test]
    fn rows_normalize_and_assignments_in_range() {
        let (corpus, vocab) = tiny_corpus(&["a a b c", "b c d", "d d a"]);
        let cfg = quick_cfg(4, 15, 5);
        let model = train_lda(&corpus, &vocab, &cfg).unwrap();
        for row in model.phi.iter().chain(&model.theta) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "row sums to {sum}");
            assert!(row.iter().all(|&p| p > 0.0));
        }
        for z in model.assignments.iter().flatten() {
            assert!(*z < cfg.num_topics);
        }
    }

    #[test]
    fn count_conservation_across_sweeps() {
        let (corpus, vocab) = tiny_corpus(&["a a b c", "b c d", "d d a", "", "a b c d"]);
        let docs: Vec<Vec<usize>> = corpus
            .documents
            .iter()
            .map(|d| vocab.filter_tokens(&d.tokens))
            .collect();
        let mut sampler = GibbsSampler::new(docs, vocab.len(), &quick_cfg(3, 10, 11)).unwrap();
        sampler.check_count_conservation().unwrap();
        for _ in 0..10 {
            sampler.sweep();
            sampler.check_count_conservation().unwrap();
        }
    }

    #[test]
    fn no_tokens_is_an_error() {
        let (corpus, vocab) = tiny_corpus(&["a", "b"]);
        let mut empty = corpus.clone();
        for doc in &mut empty.documents {
            doc.tokens = vec!["zzz".into()]; // all OOV
        }
        assert!(matches!(
            train_lda(&empty, &vocab, &quick_cfg(2, 5, 1)),
            Err(TopicsError::NoTokens)
        ));
    }

    #[test]
    fn dominant_topic_examples() {
        let model = toy_model(vec![vec![0.1, 0.7, 0.2], vec![0.5, 0.5, 0.0]]);
        assert_eq!(dominant_topic(&model, 0).unwrap(), 1);
        assert_eq!(dominant_topic(&model, 1).unwrap(), 0); // tie -> lowest id
        assert!(matches!(
            dominant_topic(&model, 2),
            Err(TopicsError::IndexOutOfRange { .. })
        ));
        let single = toy_model(vec![vec![1.0]]);
        assert_eq!(dominant_topic(&single, 0).unwrap(), 0);
    }

    #[test]
    fn partition_groups_by_dominant_topic() {
        let model = toy_model(vec![
            vec![0.9, 0.1],
            vec![0.2, 0.8],
            vec![0.6, 0.4],
        ]);
        let corpus = corpus_of_size(3);
        let classes = partition_by_topic(&corpus, &model);
        assert_eq!(classes.len(), 2);
        assert_eq!(classes[0].members, [0, 2]);
        assert_eq!(classes[1].members, [1]);

        let all_zero = toy_model(vec![vec![1.0, 0.0, 0.0]; 3]);
        let classes = partition_by_topic(&corpus_of_size(3), &all_zero);
        assert_eq!(classes[0].members, [0, 1, 2]);
        assert!(classes[1].members.is_empty());
        assert!(classes[2].members.is_empty());
    }

    #[test]
    fn top_words_ordering_and_bounds() {
        let (corpus, vocab) = tiny_corpus(&["a b c", "c b a"]);
        let mut model = train_lda(&corpus, &vocab, &quick_cfg(1, 2, 3)).unwrap();
        model.phi = vec![vec![0.3, 0.5, 0.2]];
        assert_eq!(top_words(&model, 0, 2).unwrap(), ["b", "a"]);
        assert_eq!(top_words(&model, 0, 0).unwrap(), Vec::<String>::new());
        assert_eq!(top_words(&model, 0, 99).unwrap().len(), 3);
        model.phi = vec![vec![0.4, 0.3, 0.3]];
        assert_eq!(top_words(&model, 0, 3).unwrap(), ["a", "b", "c"]); // tie -> lowest id
        assert!(matches!(
            top_words(&model, 1, 2),
            Err(TopicsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn perplexity_of_uniform_single_topic_model() {
        // ten equally frequent words force phi uniform over |W| = 10
        let body: String = (0..10).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let (corpus, vocab) = tiny_corpus(&[&body]);
        assert_eq!(vocab.len(), 10);
        let model = train_lda(&corpus, &vocab, &quick_cfg(1, 3, 9)).unwrap();
        let p = perplexity(&model, &corpus).unwrap();
        assert!((p - 10.0).abs() < 1e-6, "perplexity {p}");
    }

    #[test]
    fn perplexity_rejects_oov_only_heldout() {
        let (corpus, vocab) = tiny_corpus(&["a b", "b a"]);
        let model = train_lda(&corpus, &vocab, &quick_cfg(2, 3, 9)).unwrap();
        let mut heldout = corpus.clone();
        for doc in &mut heldout.documents {
            doc.tokens = vec!["zzz".into()];
        }
        assert!(matches!(
            perplexity(&model, &heldout),
            Err(TopicsError::NoTokens)
        ));
    }

    #[test]
    fn training_lowers_heldout_perplexity() {
        let (corpus, _) = synthetic_block_corpus(60, 40, 20, 2, 2024);
        let vocab = build_vocabulary(&corpus, 1).unwrap();
        let (heldout, _) = synthetic_block_corpus(20, 40, 20, 2, 4048);

        let trained = train_lda(&corpus, &vocab, &quick_cfg(2, 120, 31)).unwrap();
        let fresh = train_lda(&corpus, &vocab, &quick_cfg(2, 1, 31)).unwrap();
        let p_trained = perplexity(&trained, &heldout).unwrap();
        let p_fresh = perplexity(&fresh, &heldout).unwrap();
        assert!(
            p_trained < p_fresh,
            "trained {p_trained} should beat fresh {p_fresh}"
        );
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let (corpus, vocab) = tiny_corpus(&["a a b c", "b c d", "d d a"]);
        let model = train_lda(&corpus, &vocab, &quick_cfg(3, 10, 77)).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        model.save(f.path()).unwrap();
        let back = TopicModel::load(f.path()).unwrap();
        assert_eq!(back.assignments, model.assignments);
        assert_eq!(back.vocabulary, model.vocabulary);
        assert_eq!(back.config, model.config);
        let bits = |m: &TopicModel| -> Vec<u64> {
            m.phi
                .iter()
                .chain(&m.theta)
                .flatten()
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&back), bits(&model));
    }

    fn toy_model(theta: Vec<Vec<f64>>) -> TopicModel {
        let k = theta[0].len();
        let (corpus, vocab) = tiny_corpus(&["a b", "b a"]);
        let mut model = train_lda(&corpus, &vocab, &quick_cfg(1, 2, 1)).unwrap();
        model.config.num_topics = k;
        model.phi = vec![vec![1.0 / vocab.len() as f64; vocab.len()]; k];
        model.theta = theta;
        model
    }

    fn corpus_of_size(n: usize) -> Corpus {
        let documents = (0..n)
            .map(|i| {
                Document::new(&format!("d{i}"), "", "x", [] as [&str; 0], [] as [&str; 0])
            })
            .collect();
        Corpus {
            documents,
            source: "test".into(),
        }
    }
}
