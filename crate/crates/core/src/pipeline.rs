//! End-to-end orchestration: ingest, topic model, per-class proximity,
//! agglomeration, square-root cut, and all file outputs. Also the
//! comparison mode that bundles every class twice (blended weight and
//! content-only) and reports internal cohesion metrics side by side.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    agglomerate, bundle_count, cut_dendrogram, Bundle, ClusterError, Dendrogram, Linkage,
};
use crate::corpus::{
    build_vocabulary, extended_coauthors, ingest_corpus, Corpus, CorpusError, TokenizerConfig,
    Vocabulary,
};
use crate::distance::{
    coauth_matrix, combine_matrices, content_matrix, frequency_profile, DistanceError,
    ProximityMatrix,
};
use crate::topics::{
    partition_by_topic, top_words, train_lda, LdaConfig, TopicClass, TopicModel, TopicsError,
};

/// Module error wrapped with the pipeline stage it surfaced in.
#[derive(Debug, Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: String,
    #[source]
    pub source: StageError,
}

impl PipelineError {
    fn new(stage: impl Into<String>, source: impl Into<StageError>) -> Self {
        PipelineError {
            stage: stage.into(),
            source: source.into(),
        }
    }

    /// Process exit code: 1 config, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Topics(#[from] TopicsError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {message}")]
    BadFile { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::InvalidConfig(_)
            | StageError::Corpus(CorpusError::InvalidConfig(_))
            | StageError::Topics(TopicsError::InvalidConfig(_)) => 1,
            StageError::Invariant(_)
            | StageError::Distance(DistanceError::EntryOutOfRange { .. }) => 3,
            _ => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        StageError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Everything one run needs. `weight` is the blend factor between
/// co-authorship and content dissimilarity.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub tokenizer: TokenizerConfig,
    pub lda: LdaConfig,
    pub weight: f64,
    pub linkage: Linkage,
    pub min_doc_freq: usize,
    pub compare: bool,
    pub dump_matrices: bool,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            out_dir: out_dir.into(),
            tokenizer: TokenizerConfig::default(),
            lda: LdaConfig::default(),
            weight: 0.5,
            linkage: Linkage::Average,
            min_doc_freq: 2,
            compare: false,
            dump_matrices: false,
        }
    }

    pub fn validate(&self) -> Result<(), StageError> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(StageError::InvalidConfig(format!(
                "weight {} outside [0,1]",
                self.weight
            )));
        }
        if self.min_doc_freq < 1 {
            return Err(StageError::InvalidConfig(
                "min_doc_freq must be at least 1".into(),
            ));
        }
        self.tokenizer.validate()?;
        self.lda.validate()?;
        Ok(())
    }
}

/// Flat, fully deterministic snapshot of the configuration for the
/// manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub input: String,
    pub out_dir: String,
    pub num_topics: usize,
    pub doc_topic_prior: f64,
    pub topic_word_prior: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub weight: f64,
    pub linkage: String,
    pub min_doc_freq: usize,
    pub lowercase: bool,
    pub strip_non_alphabetic: bool,
    pub min_token_len: usize,
    pub stopword_count: usize,
}

impl ConfigSnapshot {
    /// LDA fields come from the model that actually ran, which matters when
    /// a run resumes from a previously trained model file.
    fn from_run(cfg: &PipelineConfig, lda: &LdaConfig) -> Self {
        ConfigSnapshot {
            input: cfg.input.display().to_string(),
            out_dir: cfg.out_dir.display().to_string(),
            num_topics: lda.num_topics,
            doc_topic_prior: lda.dirichlet_doc_topic,
            topic_word_prior: lda.dirichlet_topic_word,
            iterations: lda.iterations,
            burn_in: lda.burn_in,
            seed: lda.seed,
            weight: cfg.weight,
            linkage: cfg.linkage.to_string(),
            min_doc_freq: cfg.min_doc_freq,
            lowercase: cfg.tokenizer.lowercase,
            strip_non_alphabetic: cfg.tokenizer.strip_non_alphabetic,
            min_token_len: cfg.tokenizer.min_token_len,
            stopword_count: cfg.tokenizer.stopwords.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub vocabulary_terms: usize,
    pub missing_author_fields: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSummary {
    pub topic_id: usize,
    pub size: usize,
    pub bundle_count: usize,
    pub top_words: Vec<String>,
    pub bundle_file: Option<String>,
}

/// Written once per run as `manifest.json`. Timings vary run to run; every
/// other field is deterministic for a fixed config and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ConfigSnapshot,
    pub corpus: CorpusStats,
    pub classes: Vec<ClassSummary>,
    pub warnings: Vec<String>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, StageError> {
        let file = File::open(path).map_err(|e| StageError::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| StageError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// On-disk schema of one topic class's bundles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleFile {
    pub topic_id: usize,
    pub top_words: Vec<String>,
    pub bundles: Vec<BundleEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub bundle_id: usize,
    pub members: Vec<String>,
}

/// Writes a bundle file; re-reading reproduces it exactly. An empty bundle
/// list is a bug upstream, not valid output.
pub fn write_bundles(bundles: &BundleFile, path: &Path) -> Result<(), StageError> {
    if bundles.bundles.is_empty() {
        return Err(StageError::Invariant(format!(
            "refusing to write empty bundle list for topic {}",
            bundles.topic_id
        )));
    }
    let file = File::create(path).map_err(|e| StageError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, bundles)
        .map_err(|e| StageError::io(path, std::io::Error::other(e)))?;
    writeln!(out).map_err(|e| StageError::io(path, e))?;
    out.flush().map_err(|e| StageError::io(path, e))
}

pub fn read_bundles(path: &Path) -> Result<BundleFile, StageError> {
    let file = File::open(path).map_err(|e| StageError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| StageError::BadFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Cohesion metrics for one bundling scheme, measured against the blended
/// proximity matrix so the two schemes are comparable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeMetrics {
    pub mean_within: f64,
    pub mean_between: f64,
    pub silhouette: f64,
    pub bundles: Vec<BundleEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassComparison {
    pub topic_id: usize,
    pub size: usize,
    pub bundle_count: usize,
    pub combined: SchemeMetrics,
    pub content_only: SchemeMetrics,
}

/// Side-by-side report of blended vs content-only bundling. The metrics
/// are internal proxies (dissimilarity means and a silhouette-style score),
/// not human judgments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub weight: f64,
    pub linkage: String,
    pub note: String,
    pub classes: Vec<ClassComparison>,
}

impl ComparisonReport {
    pub fn load(path: &Path) -> Result<Self, StageError> {
        let file = File::open(path).map_err(|e| StageError::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| StageError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

struct Prepared {
    corpus: Corpus,
    vocab: Vocabulary,
    model: TopicModel,
    classes: Vec<TopicClass>,
    missing_author_fields: usize,
    timings: BTreeMap<String, u64>,
    model_written: bool,
}

const TOP_WORDS_PER_TOPIC: usize = 10;

/// Runs the whole pipeline and writes model, bundle files, dendrogram
/// exports and the manifest under `cfg.out_dir`. Deterministic for a fixed
/// config and seed; on failure, partial outputs are removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let prepared = prepare_full(cfg)?;
    let (manifest, _) = execute_prepared(cfg, prepared)?;
    Ok(manifest)
}

/// Like [`run_pipeline`] but resumes from a previously trained model file
/// instead of training. The corpus is re-tokenized with the configured
/// tokenizer, which must match the one used for training.
pub fn run_pipeline_with_model(
    cfg: &PipelineConfig,
    model_path: &Path,
) -> Result<RunManifest, PipelineError> {
    let prepared = prepare_from_model(cfg, model_path)?;
    let (manifest, _) = execute_prepared(cfg, prepared)?;
    Ok(manifest)
}

/// Bundles every topic class twice on identical inputs, once with the
/// configured weight and once content-only, and reports per-class cohesion
/// metrics side by side. Also writes the standard pipeline outputs plus
/// `comparison.json`.
pub fn compare_semantics(cfg: &PipelineConfig) -> Result<ComparisonReport, PipelineError> {
    let forced = PipelineConfig {
        compare: true,
        ..cfg.clone()
    };
    let prepared = prepare_full(&forced)?;
    let (_, report) = execute_prepared(&forced, prepared)?;
    Ok(report.expect("comparison was requested"))
}

fn prepare_full(cfg: &PipelineConfig) -> Result<Prepared, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new("config", e))?;
    ensure_out_dir(cfg)?;
    let mut timings = BTreeMap::new();

    let started = Instant::now();
    let ingestion =
        ingest_corpus(&cfg.input).map_err(|e| PipelineError::new("ingest", e))?;
    let mut corpus = ingestion.corpus;
    timings.insert("ingest".into(), started.elapsed().as_millis() as u64);

    let started = Instant::now();
    corpus.tokenize(&cfg.tokenizer);
    timings.insert("tokenize".into(), started.elapsed().as_millis() as u64);

    let started = Instant::now();
    let vocab = build_vocabulary(&corpus, cfg.min_doc_freq)
        .map_err(|e| PipelineError::new("vocabulary", e))?;
    timings.insert("vocabulary".into(), started.elapsed().as_millis() as u64);

    let started = Instant::now();
    let model =
        train_lda(&corpus, &vocab, &cfg.lda).map_err(|e| PipelineError::new("train", e))?;
    timings.insert("train".into(), started.elapsed().as_millis() as u64);

    let started = Instant::now();
    let classes = partition_by_topic(&corpus, &model);
    timings.insert("partition".into(), started.elapsed().as_millis() as u64);

    Ok(Prepared {
        corpus,
        vocab,
        model,
        classes,
        missing_author_fields: ingestion.missing_author_fields,
        timings,
        model_written: false,
    })
}

fn prepare_from_model(cfg: &PipelineConfig, model_path: &Path) -> Result<Prepared, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new("config", e))?;
    ensure_out_dir(cfg)?;
    let mut timings = BTreeMap::new();

    let started = Instant::now();
    let model = TopicModel::load(model_path).map_err(|e| PipelineError::new("load-model", e))?;
    timings.insert("load-model".into(), started.elapsed().as_millis() as u64);

    let started = Instant::now();
    let ingestion =
        ingest_corpus(&cfg.input).map_err(|e| PipelineError::new("ingest", e))?;
    let mut corpus = ingestion.corpus;
    corpus.tokenize(&cfg.tokenizer);
    timings.insert("ingest".into(), started.elapsed().as_millis() as u64);

    if model.num_documents() != corpus.len() {
        return Err(PipelineError::new(
            "load-model",
            StageError::InvalidConfig(format!(
                "model was trained on {} documents but the corpus has {}",
                model.num_documents(),
                corpus.len()
            )),
        ));
    }

    let started = Instant::now();
    let classes = partition_by_topic(&corpus, &model);
    timings.insert("partition".into(), started.elapsed().as_millis() as u64);

    let vocab = model.vocabulary.clone();
    Ok(Prepared {
        corpus,
        vocab,
        model,
        classes,
        missing_author_fields: ingestion.missing_author_fields,
        timings,
        model_written: true, // the model file already exists elsewhere
    })
}

/// Per-class computation result, produced in parallel and written out
/// sequentially in topic order.
struct ClassOutput {
    summary: ClassSummary,
    bundle_file: Option<BundleFile>,
    dendrogram: Option<Dendrogram>,
    matrices: Option<ClassMatrices>,
    comparison: Option<ClassComparison>,
    warnings: Vec<String>,
}

struct ClassMatrices {
    coauth: ProximityMatrix,
    content: ProximityMatrix,
    combined: ProximityMatrix,
}

fn execute_prepared(
    cfg: &PipelineConfig,
    prepared: Prepared,
) -> Result<(RunManifest, Option<ComparisonReport>), PipelineError> {
    let Prepared {
        corpus,
        vocab,
        model,
        classes,
        missing_author_fields,
        mut timings,
        model_written,
    } = prepared;

    let started = Instant::now();
    let outputs: Result<Vec<ClassOutput>, PipelineError> = classes
        .par_iter()
        .map(|class| compute_class(cfg, &corpus, &model, class))
        .collect();
    let outputs = outputs?;
    timings.insert("bundle".into(), started.elapsed().as_millis() as u64);

    // All computation succeeded; now touch the filesystem, cleaning up
    // everything we created if any write fails.
    let started = Instant::now();
    let mut tracker = OutputTracker::default();
    let write_result = write_outputs(
        cfg,
        &model,
        &outputs,
        model_written,
        &mut tracker,
    );
    if let Err(e) = write_result {
        tracker.remove_all();
        return Err(e);
    }
    timings.insert("write".into(), started.elapsed().as_millis() as u64);

    let mut warnings = Vec::new();
    if missing_author_fields > 0 {
        warnings.push(format!(
            "{missing_author_fields} record(s) were missing author fields"
        ));
    }
    for out in &outputs {
        warnings.extend(out.warnings.iter().cloned());
    }

    let comparison = if cfg.compare {
        let report = ComparisonReport {
            weight: cfg.weight,
            linkage: cfg.linkage.to_string(),
            note: "within/between dissimilarity and silhouette are internal \
                   cohesion proxies computed on the blended matrix, not human judgments"
                .into(),
            classes: outputs
                .iter()
                .filter_map(|o| o.comparison.clone())
                .collect(),
        };
        let path = tracker.track(cfg.out_dir.join("comparison.json"));
        if let Err(e) = write_json_pretty(&report, &path) {
            tracker.remove_all();
            return Err(PipelineError::new("write", e));
        }
        Some(report)
    } else {
        None
    };

    let manifest = RunManifest {
        config: ConfigSnapshot::from_run(cfg, &model.config),
        corpus: CorpusStats {
            documents: corpus.len(),
            vocabulary_terms: vocab.len(),
            missing_author_fields,
        },
        classes: outputs.into_iter().map(|o| o.summary).collect(),
        warnings,
        timings_ms: timings,
    };
    let manifest_path = tracker.track(cfg.out_dir.join("manifest.json"));
    if let Err(e) = write_json_pretty(&manifest, &manifest_path) {
        tracker.remove_all();
        return Err(PipelineError::new("write", e));
    }

    Ok((manifest, comparison))
}

fn compute_class(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    model: &TopicModel,
    class: &TopicClass,
) -> Result<ClassOutput, PipelineError> {
    let stage = format!("bundle(topic {})", class.topic_id);
    let n = class.members.len();
    let words = top_words(model, class.topic_id, TOP_WORDS_PER_TOPIC)
        .map_err(|e| PipelineError::new(&stage, e))?;

    if n == 0 {
        return Ok(ClassOutput {
            summary: ClassSummary {
                topic_id: class.topic_id,
                size: 0,
                bundle_count: 0,
                top_words: words,
                bundle_file: None,
            },
            bundle_file: None,
            dendrogram: None,
            matrices: None,
            comparison: None,
            warnings: vec![format!("topic {}: empty class skipped", class.topic_id)],
        });
    }

    let labels: Vec<String> = class
        .members
        .iter()
        .map(|&d| corpus.documents[d].id.clone())
        .collect();

    if n == 1 {
        let file = BundleFile {
            topic_id: class.topic_id,
            top_words: words.clone(),
            bundles: vec![BundleEntry {
                bundle_id: 0,
                members: labels.clone(),
            }],
        };
        return Ok(ClassOutput {
            summary: ClassSummary {
                topic_id: class.topic_id,
                size: 1,
                bundle_count: 1,
                top_words: words,
                bundle_file: Some(bundle_file_name(class.topic_id)),
            },
            bundle_file: Some(file),
            dendrogram: None,
            matrices: None,
            comparison: None,
            warnings: vec![format!(
                "topic {}: singleton class emitted as a single bundle without clustering",
                class.topic_id
            )],
        });
    }

    let mut profiles = Vec::with_capacity(n);
    for &d in &class.members {
        let profile = frequency_profile(&corpus.documents[d].tokens, &model.vocabulary)
            .map_err(|e| {
                let enriched = match e {
                    DistanceError::EmptyText(_) => {
                        DistanceError::EmptyText(Some(corpus.documents[d].id.clone()))
                    }
                    other => other,
                };
                PipelineError::new(&stage, enriched)
            })?;
        profiles.push(profile);
    }
    let coauthors: Vec<_> = class
        .members
        .iter()
        .map(|&d| extended_coauthors(&corpus.documents[d]))
        .collect();

    let coauth = coauth_matrix(labels.clone(), &coauthors)
        .map_err(|e| PipelineError::new(&stage, e))?;
    let content = content_matrix(labels.clone(), &profiles)
        .map_err(|e| PipelineError::new(&stage, e))?;
    let combined = combine_matrices(&coauth, &content, cfg.weight)
        .map_err(|e| PipelineError::new(&stage, e))?;

    let dendro = agglomerate(&combined, cfg.linkage).map_err(|e| PipelineError::new(&stage, e))?;
    let k = bundle_count(n);
    let bundles = cut_dendrogram(&dendro, k).map_err(|e| PipelineError::new(&stage, e))?;

    let file = BundleFile {
        topic_id: class.topic_id,
        top_words: words.clone(),
        bundles: to_entries(&bundles, &labels),
    };

    let comparison = if cfg.compare {
        let content_scheme = combine_matrices(&coauth, &content, 0.0)
            .map_err(|e| PipelineError::new(&stage, e))?;
        let dendro_content =
            agglomerate(&content_scheme, cfg.linkage).map_err(|e| PipelineError::new(&stage, e))?;
        let bundles_content =
            cut_dendrogram(&dendro_content, k).map_err(|e| PipelineError::new(&stage, e))?;
        Some(ClassComparison {
            topic_id: class.topic_id,
            size: n,
            bundle_count: k,
            combined: scheme_metrics(&combined, &bundles, &labels),
            content_only: scheme_metrics(&combined, &bundles_content, &labels),
        })
    } else {
        None
    };

    Ok(ClassOutput {
        summary: ClassSummary {
            topic_id: class.topic_id,
            size: n,
            bundle_count: k,
            top_words: words,
            bundle_file: Some(bundle_file_name(class.topic_id)),
        },
        bundle_file: Some(file),
        dendrogram: Some(dendro),
        matrices: Some(ClassMatrices {
            coauth,
            content,
            combined,
        }),
        comparison,
        warnings: Vec::new(),
    })
}

fn to_entries(bundles: &[Bundle], labels: &[String]) -> Vec<BundleEntry> {
    bundles
        .iter()
        .map(|b| {
            let mut members: Vec<String> =
                b.members.iter().map(|&leaf| labels[leaf].clone()).collect();
            members.sort_unstable();
            BundleEntry {
                bundle_id: b.bundle_id,
                members,
            }
        })
        .collect()
}

/// Mean within-bundle and between-bundle dissimilarity plus a silhouette
/// score, all measured on `metric`. Singleton bundles contribute zero
/// silhouette; classes without within- or between-pairs report 0.
fn scheme_metrics(metric: &ProximityMatrix, bundles: &[Bundle], labels: &[String]) -> SchemeMetrics {
    let n = metric.n();
    let mut assignment = vec![usize::MAX; n];
    for bundle in bundles {
        for &leaf in &bundle.members {
            assignment[leaf] = bundle.bundle_id;
        }
    }

    let mut within_sum = 0.0;
    let mut within_pairs = 0usize;
    let mut between_sum = 0.0;
    let mut between_pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let d = metric.get(i, j);
            if assignment[i] == assignment[j] {
                within_sum += d;
                within_pairs += 1;
            } else {
                between_sum += d;
                between_pairs += 1;
            }
        }
    }

    let silhouette = if bundles.len() < 2 {
        0.0
    } else {
        let mut total = 0.0;
        for i in 0..n {
            let own = &bundles[assignment[i]].members;
            if own.len() < 2 {
                continue; // singleton: s(i) = 0
            }
            let a: f64 = own
                .iter()
                .filter(|&&m| m != i)
                .map(|&m| metric.get(i, m))
                .sum::<f64>()
                / (own.len() - 1) as f64;
            let b = bundles
                .iter()
                .filter(|b| b.bundle_id != assignment[i])
                .map(|b| {
                    b.members.iter().map(|&m| metric.get(i, m)).sum::<f64>()
                        / b.members.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
        }
        total / n as f64
    };

    SchemeMetrics {
        mean_within: if within_pairs > 0 {
            within_sum / within_pairs as f64
        } else {
            0.0
        },
        mean_between: if between_pairs > 0 {
            between_sum / between_pairs as f64
        } else {
            0.0
        },
        silhouette,
        bundles: to_entries(bundles, labels),
    }
}

fn bundle_file_name(topic_id: usize) -> String {
    format!("topic-{topic_id:03}.bundles.json")
}

#[derive(Default)]
struct OutputTracker {
    created: Vec<PathBuf>,
}

impl OutputTracker {
    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.created.push(path.clone());
        path
    }

    fn remove_all(&self) {
        for path in &self.created {
            let _ = std::fs::remove_file(path);
        }
    }
}

fn write_outputs(
    cfg: &PipelineConfig,
    model: &TopicModel,
    outputs: &[ClassOutput],
    model_written: bool,
    tracker: &mut OutputTracker,
) -> Result<(), PipelineError> {
    let wrap = |e: StageError| PipelineError::new("write", e);

    if !model_written {
        let path = tracker.track(cfg.out_dir.join("model.json"));
        model
            .save(&path)
            .map_err(|e| wrap(StageError::Topics(e)))?;
    }

    for out in outputs {
        let topic_id = out.summary.topic_id;
        if let Some(file) = &out.bundle_file {
            let path = tracker.track(cfg.out_dir.join(bundle_file_name(topic_id)));
            write_bundles(file, &path).map_err(wrap)?;
        }
        if let Some(dendro) = &out.dendrogram {
            let path = tracker.track(
                cfg.out_dir
                    .join(format!("topic-{topic_id:03}.dendrogram.txt")),
            );
            dendro
                .write_text(&path)
                .map_err(|e| wrap(StageError::Cluster(e)))?;
        }
        if cfg.dump_matrices {
            if let Some(m) = &out.matrices {
                for (tag, matrix) in [
                    ("coauth", &m.coauth),
                    ("content", &m.content),
                    ("combined", &m.combined),
                ] {
                    let bin = tracker.track(
                        cfg.out_dir.join(format!("topic-{topic_id:03}.{tag}.pmx")),
                    );
                    matrix
                        .write_binary(&bin)
                        .map_err(|e| wrap(StageError::Distance(e)))?;
                    let txt = tracker.track(
                        cfg.out_dir.join(format!("topic-{topic_id:03}.{tag}.txt")),
                    );
                    matrix
                        .write_text(&txt)
                        .map_err(|e| wrap(StageError::Distance(e)))?;
                }
            }
        }
    }
    Ok(())
}

/// Creating the output directory up front both validates writability and
/// fails a misconfigured run before the expensive training stage.
fn ensure_out_dir(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::new("config", StageError::io(&cfg.out_dir, e)))
}

fn write_json_pretty<T: Serialize>(value: &T, path: &Path) -> Result<(), StageError> {
    let file = File::create(path).map_err(|e| StageError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| StageError::io(path, std::io::Error::other(e)))?;
    writeln!(out).map_err(|e| StageError::io(path, e))?;
    out.flush().map_err(|e| StageError::io(path, e))
}

/// Fixed-width text rendering of a comparison report for terminal output.
pub fn render_comparison(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "comparison (weight {} vs content-only, {} linkage)\n",
        report.weight, report.linkage
    ));
    out.push_str(&format!("note: {}\n", report.note));
    out.push_str(&format!(
        "{:<6} {:>5} {:>4}  {:<13} {:>8} {:>9} {:>11}\n",
        "topic", "size", "k", "scheme", "within", "between", "silhouette"
    ));
    for class in &report.classes {
        for (name, metrics) in [
            ("combined", &class.combined),
            ("content-only", &class.content_only),
        ] {
            out.push_str(&format!(
                "{:<6} {:>5} {:>4}  {:<13} {:>8.4} {:>9.4} {:>11.4}\n",
                class.topic_id,
                class.size,
                class.bundle_count,
                name,
                metrics.mean_within,
                metrics.mean_between,
                metrics.silhouette
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_jsonl(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        path
    }

    fn record(id: &str, body: &str, authors: &[&str]) -> String {
        serde_json::json!({
            "id": id,
            "title": format!("title {id}"),
            "body": body,
            "authors": authors,
            "referenced_authors": [],
        })
        .to_string()
    }

    fn quick_lda(k: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            num_topics: k,
            dirichlet_doc_topic: 1.0,
            dirichlet_topic_word: 0.01,
            iterations: 30,
            burn_in: 0,
            seed,
        }
    }

    #[test]
    fn three_documents_one_topic_two_bundles() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_jsonl(
            dir.path(),
            "in.jsonl",
            &[
                record("a", "shared words appear here shared words", &["x y"]),
                record("b", "shared words appear there shared words", &["x y"]),
                record("c", "shared words appear everywhere shared words", &["z w"]),
            ],
        );
        let mut cfg = PipelineConfig::new(input, dir.path().join("out"));
        cfg.lda = quick_lda(1, 3);
        cfg.min_doc_freq = 2;
        let manifest = run_pipeline(&cfg).unwrap();
        assert_eq!(manifest.classes.len(), 1);
        assert_eq!(manifest.classes[0].size, 3);
        assert_eq!(manifest.classes[0].bundle_count, 2);
        let bundles = read_bundles(&cfg.out_dir.join(bundle_file_name(0))).unwrap();
        assert_eq!(bundles.bundles.len(), 2);
        let all: Vec<String> = bundles
            .bundles
            .iter()
            .flat_map(|b| b.members.iter().cloned())
            .collect();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn empty_bundle_list_is_rejected() {
        let file = BundleFile {
            topic_id: 0,
            top_words: vec![],
            bundles: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let err = write_bundles(&file, &dir.path().join("x.json")).unwrap_err();
        assert!(matches!(err, StageError::Invariant(_)));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn bundle_file_round_trip() {
        let file = BundleFile {
            topic_id: 4,
            top_words: vec!["alpha".into(), "beta".into()],
            bundles: vec![
                BundleEntry {
                    bundle_id: 0,
                    members: vec!["a".into(), "b".into()],
                },
                BundleEntry {
                    bundle_id: 1,
                    members: vec!["c".into()],
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        write_bundles(&file, &path).unwrap();
        assert_eq!(read_bundles(&path).unwrap(), file);
    }

    #[test]
    fn invalid_weight_is_a_config_error() {
        let mut cfg = PipelineConfig::new("in.jsonl", "out");
        cfg.weight = 1.5;
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.stage, "config");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(dir.path().join("absent.jsonl"), dir.path().join("out"));
        cfg.lda = quick_lda(1, 3);
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.stage, "ingest");
        assert_eq!(err.exit_code(), 2);
    }
}
