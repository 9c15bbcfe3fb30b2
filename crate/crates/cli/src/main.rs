use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delirium_core::eval::MatchMode;
use delirium_core::filter::ThresholdMode;
use delirium_core::pipeline::{
    end_to_end_smoke, read_manifest, rerun, run_pipeline, run_stage, PipelineConfig, PipelineError,
    RunManifest, SplitSource, Stage,
};

/// Delirium symptom extraction pipeline.
#[derive(Parser, Debug)]
#[command(name = "delirium", version)]
struct Cli {
    /// TOML config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: config `paths.out_dir`, then $DELIRIUM_OUT).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for stochastic stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Keep the `Other` category.
    #[arg(long, global = true)]
    include_other: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic annotated corpus.
    Synth {
        #[arg(long)]
        notes: Option<usize>,
    },
    /// Select notes with enough keyword hits.
    Filter(FilterArgs),
    /// Draw a seeded sample from an id list.
    Sample {
        #[arg(long)]
        ids: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Split a corpus into train/dev/test.
    Split(SplitArgs),
    /// Per-category annotation counts and percentages per split.
    Summarize {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        split: PathBuf,
    },
    /// Tokenize, sentence-split and BIO-encode corpora into `.seq` files.
    Preprocess {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train the token classifier.
    Train(TrainArgs),
    /// Tag a `.seq` file or corpus with a trained model.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Strict and lenient scores of predictions against gold.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Agreement between two annotators' layers of one corpus.
    Agreement {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long = "reference")]
        annotator_a: String,
        #[arg(long = "response")]
        annotator_b: String,
    },
    /// Span-level confusion matrix as CSV.
    Confusion {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        mode: Option<MatchMode>,
    },
    /// Run every stage from filtering to evaluation.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Generate a synthetic corpus and run the full pipeline on it.
    Smoke {
        #[arg(long)]
        notes: Option<usize>,
    },
    /// Replay a stage from its manifest and check the outputs match.
    Rerun { manifest: PathBuf },
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long)]
    min_hits: Option<usize>,
    #[arg(long)]
    threshold: Option<ThresholdMode>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Restrict the corpus to these ids.
    #[arg(long)]
    ids: Option<PathBuf>,
    /// Train, dev and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    ratios: Option<Vec<f64>>,
    /// Explicit `id<TAB>split` assignment.
    #[arg(long, conflicts_with = "ratios")]
    split_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2_penalty: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

fn usage(msg: impl Into<String>) -> PipelineError {
    PipelineError::Usage(msg.into())
}

fn required<T>(value: Option<T>, key: &str) -> Result<T, PipelineError> {
    value.ok_or_else(|| usage(format!("missing config key: {key}")))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.out_dir.is_some() {
        config.paths.out_dir = cli.out_dir.clone();
    }
    if cli.include_other {
        config.include_other = true;
    }
    Ok(config)
}

fn stage_for(command: &Command, config: &PipelineConfig) -> Result<Stage, PipelineError> {
    let out_dir = config.require_out_dir()?;
    let include_other = config.include_other;
    let corpus = |flag: &Option<PathBuf>| required(flag.clone().or(config.paths.corpus.clone()), "paths.corpus");
    Ok(match command {
        Command::Synth { notes } => Stage::Synth {
            notes: notes.unwrap_or(config.synth.notes),
            seed: config.require_seed()?,
            out_dir,
        },
        Command::Filter(a) => Stage::Filter {
            corpus: corpus(&a.corpus)?,
            keywords: a.keywords.clone().or(config.paths.keywords.clone()),
            min_hits: a.min_hits.unwrap_or(config.filter.min_hits),
            threshold: a.threshold.unwrap_or(config.filter.threshold),
            out_dir,
        },
        Command::Sample { ids, n } => Stage::Sample {
            ids: ids.clone(),
            n: required(n.or(config.sample.n), "sample.n")?,
            seed: config.require_seed()?,
            out_dir,
        },
        Command::Split(a) => {
            let source = match (&a.split_file, &a.ratios) {
                (Some(f), _) => SplitSource::File(f.clone()),
                (None, Some(r)) => SplitSource::Ratios {
                    train: r[0],
                    dev: r[1],
                    test: r[2],
                    seed: config.require_seed()?,
                },
                (None, None) => match &config.split.file {
                    Some(f) => SplitSource::File(f.clone()),
                    None => {
                        let [train, dev, test] = config.split.ratios;
                        SplitSource::Ratios {
                            train,
                            dev,
                            test,
                            seed: config.require_seed()?,
                        }
                    }
                },
            };
            Stage::Split {
                corpus: corpus(&a.corpus)?,
                ids: a.ids.clone(),
                source,
                out_dir,
            }
        }
        Command::Summarize { corpus: c, split } => Stage::Summarize {
            corpus: corpus(c)?,
            split: split.clone(),
            include_other,
            out_dir,
        },
        Command::Preprocess { inputs } => Stage::Preprocess {
            inputs: inputs.clone(),
            include_other,
            out_dir,
        },
        Command::Train(a) => {
            let mut train = config.train.clone();
            train.seed = config.require_seed()?;
            train.include_other = include_other;
            train.epochs = a.epochs.unwrap_or(train.epochs);
            train.learning_rate = a.learning_rate.unwrap_or(train.learning_rate);
            train.l2_penalty = a.l2_penalty.unwrap_or(train.l2_penalty);
            train.patience = a.patience.unwrap_or(train.patience);
            train.batch_size = a.batch_size.unwrap_or(train.batch_size);
            Stage::Train {
                train: a.train.clone(),
                dev: a.dev.clone(),
                keywords: a.keywords.clone().or(config.paths.keywords.clone()),
                config: train,
                out_dir,
            }
        }
        Command::Predict { model, input } => Stage::Predict {
            model: required(model.clone().or(config.paths.model.clone()), "paths.model")?,
            input: input.clone(),
            out_dir,
        },
        Command::Evaluate { gold, pred } => Stage::Evaluate {
            gold: gold.clone(),
            pred: pred.clone(),
            include_other,
            out_dir,
        },
        Command::Agreement {
            corpus: c,
            annotator_a,
            annotator_b,
        } => Stage::Agreement {
            corpus: corpus(c)?,
            annotator_a: annotator_a.clone(),
            annotator_b: annotator_b.clone(),
            include_other,
            out_dir,
        },
        Command::Confusion { gold, pred, mode } => Stage::Confusion {
            gold: gold.clone(),
            pred: pred.clone(),
            mode: mode.unwrap_or(config.eval.confusion_mode),
            include_other,
            out_dir,
        },
        Command::Run { .. } | Command::Smoke { .. } | Command::Rerun { .. } => {
            unreachable!("handled by the caller")
        }
    })
}

fn print_outputs(manifest: &RunManifest) {
    for o in &manifest.outputs {
        println!("{}", o.path);
    }
}

fn print_file(path: &Path) {
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let mut config = load_config(cli)?;
    match &cli.command {
        Command::Run { corpus } => {
            if corpus.is_some() {
                config.paths.corpus = corpus.clone();
            }
            let report = run_pipeline(&config)?;
            print!(
                "{}",
                delirium_core::eval::render_report(&report, delirium_core::eval::ReportFormat::Text)
            );
        }
        Command::Smoke { notes } => {
            if let Some(n) = notes {
                config.synth.notes = *n;
            }
            let report = end_to_end_smoke(&config)?;
            print!(
                "{}",
                delirium_core::eval::render_report(&report, delirium_core::eval::ReportFormat::Text)
            );
        }
        Command::Rerun { manifest } => {
            let old = read_manifest(manifest)?;
            let new = rerun(manifest)?;
            print_outputs(&new);
            if old.outputs != new.outputs {
                return Err(PipelineError::Stage {
                    stage: new.params.name(),
                    source: delirium_core::pipeline::StageError::Invalid {
                        path: manifest.display().to_string(),
                        message: "outputs differ from the recorded run".into(),
                    },
                });
            }
        }
        command => {
            let stage = stage_for(command, &config)?;
            let manifest = run_stage(&stage)?;
            match &stage {
                Stage::Evaluate { out_dir, .. } => print_file(&out_dir.join("eval_report.txt")),
                Stage::Summarize { out_dir, .. } => print_file(&out_dir.join("summary.txt")),
                Stage::Agreement { out_dir, .. } => print_file(&out_dir.join("agreement.txt")),
                _ => print_outputs(&manifest),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
