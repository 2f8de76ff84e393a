//! Shared fixtures and independent reference implementations for the
//! integration and acceptance suites. The oracles here deliberately stay
//! separate from the library code paths they check.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topic_bundler::corpus::{build_vocabulary, Corpus, Document, TokenizerConfig, Vocabulary};
use topic_bundler::distance::FrequencyProfile;
use topic_bundler::topics::{dominant_topic, synthetic_block_corpus, TopicModel};

/// Direct transcription of the inter-textual distance formula: rescale the
/// longer text's frequencies into the shorter one's length, drop rescaled
/// terms below one from numerator and denominator alike, and normalize the
/// absolute gap over the union of terms.
pub fn labbe_oracle(a: &FrequencyProfile, b: &FrequencyProfile) -> f64 {
    let (a, b) = if a.total() > b.total() { (b, a) } else { (a, b) };
    let n_a = a.total() as f64;
    let scale = n_a / b.total() as f64;

    let terms: BTreeSet<usize> = a.freqs().keys().chain(b.freqs().keys()).copied().collect();
    let mut numerator = 0.0;
    let mut n_ab = 0.0;
    for t in terms {
        let fa = a.freqs().get(&t).copied().unwrap_or(0) as f64;
        let raw = b.freqs().get(&t).copied().unwrap_or(0) as f64 * scale;
        let e = if raw >= 1.0 { raw } else { 0.0 };
        numerator += (fa - e).abs();
        n_ab += e;
    }
    numerator / (n_a + n_ab)
}

/// Brute-force Jaccard complement over raw element scans.
pub fn jaccard_dissim_oracle(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let mut intersection = 0usize;
    for x in a {
        if b.contains(x) {
            intersection += 1;
        }
    }
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        1.0
    } else {
        1.0 - intersection as f64 / union as f64
    }
}

fn doc(id: &str, body: &str, authors: &[&str], referenced: &[&str]) -> Document {
    Document::new(id, &format!("title {id}"), body, authors, referenced)
}

/// Five documents with hand-picked token profiles and author sets. The
/// first pair reproduces the worked inter-textual example (distance 0.75);
/// the rest mix lengths and overlaps so the expectation filter and the
/// orientation rule both fire.
pub fn five_doc_fixture() -> (Corpus, Vocabulary) {
    let mut corpus = Corpus {
        documents: vec![
            doc(
                "d0",
                "alpha alpha beta beta",
                &["Ada One", "Ben Two", "Cy Three"],
                &[],
            ),
            doc(
                "d1",
                "beta gamma gamma gamma",
                &["Ben Two", "Cy Three", "Dee Four"],
                &[],
            ),
            doc(
                "d2",
                "alpha beta gamma delta epsilon alpha beta gamma delta epsilon alpha beta",
                &["Ada One", "Ben Two", "Cy Three"],
                &[],
            ),
            doc("d3", "delta delta epsilon", &[], &[]),
            doc(
                "d4",
                "alpha gamma epsilon zeta zeta zeta zeta zeta zeta zeta",
                &[],
                &[],
            ),
        ],
        source: "five-doc-fixture".into(),
    };
    let cfg = TokenizerConfig {
        stopwords: BTreeSet::new(),
        ..TokenizerConfig::default()
    };
    corpus.tokenize(&cfg);
    let vocab = build_vocabulary(&corpus, 1).expect("non-empty fixture vocabulary");
    (corpus, vocab)
}

fn letters(x: usize) -> String {
    x.to_string()
        .bytes()
        .map(|b| (b - b'0' + b'a') as char)
        .collect()
}

/// Synthetic corpus from disjoint per-topic vocabularies, with author sets
/// drawn from per-topic pools so both dissimilarity signals carry
/// structure. Deterministic for a fixed seed.
pub fn synthetic_corpus_with_authors(
    num_docs: usize,
    tokens_per_doc: usize,
    words_per_topic: usize,
    num_topics: usize,
    seed: u64,
) -> Corpus {
    let (mut corpus, labels) =
        synthetic_block_corpus(num_docs, tokens_per_doc, words_per_topic, num_topics, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    const POOL: usize = 6;
    for (d, document) in corpus.documents.iter_mut().enumerate() {
        let topic = labels[d];
        let own: Vec<String> = (0..POOL)
            .map(|i| format!("author {} {}", letters(topic), letters(i)))
            .collect();
        let mut authors = BTreeSet::new();
        while authors.len() < 2 {
            authors.insert(own[rng.random_range(0..POOL)].clone());
        }
        let mut referenced = BTreeSet::new();
        for _ in 0..rng.random_range(0..3usize) {
            let t = rng.random_range(0..num_topics);
            let i = rng.random_range(0..POOL);
            referenced.insert(format!("author {} {}", letters(t), letters(i)));
        }
        document.authors = authors;
        document.referenced_authors = referenced;
        document.tokens.clear(); // the pipeline re-tokenizes from the body
    }
    corpus
}

/// Writes a corpus as JSONL under `dir` and returns the file path.
pub fn corpus_to_jsonl(corpus: &Corpus, dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(name);
    corpus.write_jsonl(&path).expect("fixture write");
    path
}

/// Fraction of documents whose dominant topic matches the generating
/// label under the best of the two label matchings (two-topic case).
pub fn two_topic_purity(model: &TopicModel, truth: &[usize]) -> f64 {
    let n = truth.len();
    let mut direct = 0usize;
    for (d, &label) in truth.iter().enumerate() {
        let predicted = dominant_topic(model, d).expect("doc index in range");
        if predicted == label {
            direct += 1;
        }
    }
    direct.max(n - direct) as f64 / n as f64
}

/// Map from bundle files to a canonical set-of-sets for comparisons.
pub fn membership_sets(entries: &[topic_bundler::pipeline::BundleEntry]) -> BTreeSet<Vec<String>> {
    entries
        .iter()
        .map(|e| {
            let mut m = e.members.clone();
            m.sort();
            m
        })
        .collect()
}
