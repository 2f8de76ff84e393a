//! Turns a collection of scientific articles into topic-organized bundles.
//!
//! The pipeline has two steps. First, latent topics are extracted with a
//! collapsed-Gibbs LDA sampler and every article is assigned to the class
//! of its dominant topic. Second, each class is clustered hierarchically
//! over a blend of two dissimilarities, extended-co-authorship distance
//! (one minus the Jaccard coefficient of author-plus-referenced-author
//! sets) and inter-textual distance over word frequencies, and the
//! dendrogram is cut into ⌈√n⌉ bundles.
//!
//! Modules follow the stages:
//!
//! * [`corpus`]: JSONL ingestion, tokenization, vocabulary, author sets
//! * [`topics`]: the Gibbs sampler, topic classes, perplexity, persistence
//! * [`distance`]: pairwise dissimilarities and proximity matrices
//! * [`cluster`]: nearest-neighbor-chain agglomeration and the √n cut
//! * [`pipeline`]: orchestration, file outputs and the comparison mode
//!
//! Runs are deterministic: the same input, config and seed produce
//! identical models and byte-identical bundle files.

pub mod cluster;
pub mod corpus;
pub mod distance;
pub mod pipeline;
mod stopwords;
pub mod topics;

pub use cluster::{agglomerate, bundle_count, cut_dendrogram, naive_agglomerate, Bundle, Dendrogram, Linkage};
pub use corpus::{build_vocabulary, extended_coauthors, ingest_corpus, tokenize, Corpus, Document, TokenizerConfig, Vocabulary};
pub use distance::{build_proximity, coauth_dissimilarity, frequency_profile, intertextual_distance, FrequencyProfile, MatrixKind, ProximityMatrix};
pub use pipeline::{compare_semantics, run_pipeline, BundleFile, ComparisonReport, PipelineConfig, RunManifest};
pub use topics::{dominant_topic, partition_by_topic, perplexity, top_words, train_lda, LdaConfig, TopicClass, TopicModel};
