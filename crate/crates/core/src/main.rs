//! Command-line frontend. Subcommands mirror the pipeline stages so each
//! one can resume from the previous stage's artifacts:
//!
//! * `ingest`:  validate a JSONL corpus and write the normalized copy
//! * `train`:   train the topic model and write `model.json`
//! * `bundle`:  full run (or resume from `--model`), writing bundle files
//! * `compare`: bundle with the combined-vs-content-only report
//! * `report`:  summarize a previous run from its manifest
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 internal invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use topic_bundler::corpus::{build_vocabulary, ingest_corpus, TokenizerConfig};
use topic_bundler::pipeline::{
    compare_semantics, read_bundles, render_comparison, run_pipeline, run_pipeline_with_model,
    ComparisonReport, PipelineConfig, PipelineError, RunManifest, StageError,
};
use topic_bundler::topics::{perplexity, top_words, train_lda, LdaConfig};
use topic_bundler::Linkage;

#[derive(Parser)]
#[command(name = "topic-bundler", version, about = "Extract topics from article collections and bundle each topic class")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainOpts {
    /// Number of topics
    #[arg(long, default_value_t = 26)]
    topics: usize,
    /// Sampler seed; identical seeds reproduce identical outputs
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Full Gibbs sweeps over the corpus
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Sweeps regarded as burn-in (must be below --iterations)
    #[arg(long = "burn-in", default_value_t = 200)]
    burn_in: usize,
    /// Keep a term only if it occurs in at least this many documents
    #[arg(long = "min-doc-freq", default_value_t = 2)]
    min_doc_freq: usize,
    /// Stopword file, one word per line (default: bundled English list)
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct BundleOpts {
    /// Weight of the co-authorship distance in the blend (0 = content only)
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Linkage criterion: single, complete or average
    #[arg(long, default_value = "average")]
    linkage: Linkage,
    /// Resume from a trained model file instead of training
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also dump per-class proximity matrices (binary and text)
    #[arg(long = "dump-matrices")]
    dump_matrices: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize a JSONL corpus
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the topic model and write model.json
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainOpts,
    },
    /// Run the full pipeline: topics, proximity, ⌈√n⌉ bundles per class
    Bundle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        bundle: BundleOpts,
        /// Also write the combined-vs-content-only comparison report
        #[arg(long)]
        compare: bool,
    },
    /// Bundle and report combined vs content-only schemes side by side
    Compare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        bundle: BundleOpts,
    },
    /// Print a summary of a previous run
    Report {
        /// Output directory of the run to summarize
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code().clamp(0, 255) as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest { input, out } => cmd_ingest(&input, &out),
        Command::Train { input, out, train } => cmd_train(&input, &out, &train),
        Command::Bundle {
            input,
            out,
            train,
            bundle,
            compare,
        } => cmd_bundle(&input, &out, &train, &bundle, compare),
        Command::Compare {
            input,
            out,
            train,
            bundle,
        } => cmd_compare(&input, &out, &train, &bundle),
        Command::Report { out } => cmd_report(&out),
    }
}

fn stage<E: Into<StageError>>(name: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage: name.to_string(),
        source: e.into(),
    }
}

fn tokenizer_from(train: &TrainOpts) -> Result<TokenizerConfig, PipelineError> {
    let cfg = TokenizerConfig::default();
    match &train.stopwords {
        None => Ok(cfg),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError {
                stage: "config".into(),
                source: StageError::Io {
                    path: path.display().to_string(),
                    source: e,
                },
            })?;
            Ok(cfg.with_stopwords(text.lines()))
        }
    }
}

fn lda_from(train: &TrainOpts) -> LdaConfig {
    LdaConfig {
        num_topics: train.topics,
        dirichlet_doc_topic: 50.0 / train.topics.max(1) as f64,
        seed: train.seed,
        iterations: train.iterations,
        burn_in: train.burn_in,
        ..LdaConfig::default()
    }
}

fn pipeline_config(
    input: &Path,
    out: &Path,
    train: &TrainOpts,
    bundle: &BundleOpts,
    compare: bool,
) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::new(input, out);
    cfg.tokenizer = tokenizer_from(train)?;
    cfg.lda = lda_from(train);
    cfg.weight = bundle.alpha;
    cfg.linkage = bundle.linkage;
    cfg.min_doc_freq = train.min_doc_freq;
    cfg.compare = compare;
    cfg.dump_matrices = bundle.dump_matrices;
    Ok(cfg)
}

fn cmd_ingest(input: &Path, out: &Path) -> Result<(), PipelineError> {
    let ingestion = ingest_corpus(input).map_err(stage("ingest"))?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError {
        stage: "write".into(),
        source: StageError::Io {
            path: out.display().to_string(),
            source: e,
        },
    })?;
    let path = out.join("corpus.jsonl");
    ingestion.corpus.write_jsonl(&path).map_err(stage("write"))?;
    println!(
        "ingested {} document(s) from {} into {}",
        ingestion.corpus.len(),
        input.display(),
        path.display()
    );
    if ingestion.missing_author_fields > 0 {
        println!(
            "warning: {} record(s) missing author fields",
            ingestion.missing_author_fields
        );
    }
    Ok(())
}

fn cmd_train(input: &Path, out: &Path, train: &TrainOpts) -> Result<(), PipelineError> {
    let tokenizer = tokenizer_from(train)?;
    let lda = lda_from(train);

    let ingestion = ingest_corpus(input).map_err(stage("ingest"))?;
    let mut corpus = ingestion.corpus;
    corpus.tokenize(&tokenizer);
    let vocab = build_vocabulary(&corpus, train.min_doc_freq).map_err(stage("vocabulary"))?;
    let model = train_lda(&corpus, &vocab, &lda).map_err(stage("train"))?;

    std::fs::create_dir_all(out).map_err(|e| PipelineError {
        stage: "write".into(),
        source: StageError::Io {
            path: out.display().to_string(),
            source: e,
        },
    })?;
    let path = out.join("model.json");
    model.save(&path).map_err(stage("write"))?;

    println!(
        "trained {} topics over {} documents, {} terms; model written to {}",
        lda.num_topics,
        corpus.len(),
        vocab.len(),
        path.display()
    );
    let fit = perplexity(&model, &corpus).map_err(stage("report"))?;
    println!("training-set perplexity: {fit:.2}");
    for t in 0..lda.num_topics {
        let words = top_words(&model, t, 8).map_err(stage("report"))?;
        println!("topic {t:>3}: {}", words.join(" "));
    }
    Ok(())
}

fn cmd_bundle(
    input: &Path,
    out: &Path,
    train: &TrainOpts,
    bundle: &BundleOpts,
    compare: bool,
) -> Result<(), PipelineError> {
    let cfg = pipeline_config(input, out, train, bundle, compare)?;
    let manifest = match &bundle.model {
        Some(model_path) => run_pipeline_with_model(&cfg, model_path)?,
        None => run_pipeline(&cfg)?,
    };
    print_manifest(&manifest);
    if compare {
        let report = ComparisonReport::load(&cfg.out_dir.join("comparison.json"))
            .map_err(stage("report"))?;
        print!("{}", render_comparison(&report));
    }
    Ok(())
}

fn cmd_compare(
    input: &Path,
    out: &Path,
    train: &TrainOpts,
    bundle: &BundleOpts,
) -> Result<(), PipelineError> {
    let cfg = pipeline_config(input, out, train, bundle, true)?;
    let report = compare_semantics(&cfg)?;
    print!("{}", render_comparison(&report));
    Ok(())
}

fn cmd_report(out: &Path) -> Result<(), PipelineError> {
    let manifest = RunManifest::load(&out.join("manifest.json")).map_err(stage("report"))?;
    print_manifest(&manifest);
    for class in &manifest.classes {
        if let Some(name) = &class.bundle_file {
            let bundles = read_bundles(&out.join(name)).map_err(stage("report"))?;
            for b in &bundles.bundles {
                println!(
                    "topic {:>3} bundle {:>3}: {}",
                    class.topic_id,
                    b.bundle_id,
                    b.members.join(", ")
                );
            }
        }
    }
    let comparison_path = out.join("comparison.json");
    if comparison_path.exists() {
        let report = ComparisonReport::load(&comparison_path).map_err(stage("report"))?;
        print!("{}", render_comparison(&report));
    }
    Ok(())
}

fn print_manifest(manifest: &RunManifest) {
    println!(
        "{} documents, {} vocabulary terms, {} topic classes",
        manifest.corpus.documents,
        manifest.corpus.vocabulary_terms,
        manifest.classes.len()
    );
    for class in &manifest.classes {
        println!(
            "topic {:>3}: {:>5} article(s) -> {:>3} bundle(s)  [{}]",
            class.topic_id,
            class.size,
            class.bundle_count,
            class.top_words.join(" ")
        );
    }
    for warning in &manifest.warnings {
        println!("warning: {warning}");
    }
}
