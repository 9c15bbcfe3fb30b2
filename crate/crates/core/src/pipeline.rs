//! File-level stage runners.
//!
//! Every stage reads only the files named in its [`Stage`] parameters and
//! writes only under its output directory, finishing with a
//! `<stage>.manifest.json` that records the parameters, input and output
//! digests, the seed and the tool version. [`rerun`] replays a manifest.

use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    default_phrase_bank, load_corpus, split_corpus, summarize, synth_generate, to_jsonl,
    AnnotatedNote, CorpusError, CorpusFormat, Note, SplitPlan, SplitSpec, SymptomCategory,
};
use crate::eval::{
    agreement, annotator_layer, confusion, corpus_spans, evaluate, parse_report_json, render_report,
    report_csv, EvalError, EvalReport, MatchMode, NoteSpans, ReportFormat, Span,
};
use crate::filter::{filter_corpus, sample, FilterError, KeywordList, Scanner, ThresholdMode};
use crate::preprocess::{
    preprocess_corpus, read_sequences, sequences_to_string, spans_by_note, SequenceExample,
    SequenceFileError,
};
use crate::tagger::{load_model, predict_examples, save_model, train, TaggerError, TrainConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DELIRIUM_OUT";

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Sequence {
        path: String,
        #[source]
        source: SequenceFileError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: StageError,
    },
    #[error("{0}")]
    Usage(String),
}

impl PipelineError {
    /// 1 for data validation failures, 2 for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage { .. } => 1,
            PipelineError::Usage(_) => 2,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            PipelineError::Stage { stage, .. } => Some(stage),
            PipelineError::Usage(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSource {
    Ratios { train: f64, dev: f64, test: f64, seed: u64 },
    File(PathBuf),
}

/// One stage invocation with all of its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "lowercase")]
pub enum Stage {
    Synth {
        notes: usize,
        seed: u64,
        out_dir: PathBuf,
    },
    Filter {
        corpus: PathBuf,
        keywords: Option<PathBuf>,
        min_hits: usize,
        threshold: ThresholdMode,
        out_dir: PathBuf,
    },
    Sample {
        ids: PathBuf,
        n: usize,
        seed: u64,
        out_dir: PathBuf,
    },
    Split {
        corpus: PathBuf,
        ids: Option<PathBuf>,
        source: SplitSource,
        out_dir: PathBuf,
    },
    Summarize {
        corpus: PathBuf,
        split: PathBuf,
        include_other: bool,
        out_dir: PathBuf,
    },
    Preprocess {
        inputs: Vec<PathBuf>,
        include_other: bool,
        out_dir: PathBuf,
    },
    Train {
        train: PathBuf,
        dev: Option<PathBuf>,
        keywords: Option<PathBuf>,
        config: TrainConfig,
        out_dir: PathBuf,
    },
    Predict {
        model: PathBuf,
        input: PathBuf,
        out_dir: PathBuf,
    },
    Evaluate {
        gold: PathBuf,
        pred: PathBuf,
        include_other: bool,
        out_dir: PathBuf,
    },
    Agreement {
        corpus: PathBuf,
        annotator_a: String,
        annotator_b: String,
        include_other: bool,
        out_dir: PathBuf,
    },
    Confusion {
        gold: PathBuf,
        pred: PathBuf,
        mode: MatchMode,
        include_other: bool,
        out_dir: PathBuf,
    },
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Synth { .. } => "synth",
            Stage::Filter { .. } => "filter",
            Stage::Sample { .. } => "sample",
            Stage::Split { .. } => "split",
            Stage::Summarize { .. } => "summarize",
            Stage::Preprocess { .. } => "preprocess",
            Stage::Train { .. } => "train",
            Stage::Predict { .. } => "predict",
            Stage::Evaluate { .. } => "evaluate",
            Stage::Agreement { .. } => "agreement",
            Stage::Confusion { .. } => "confusion",
        }
    }

    pub fn out_dir(&self) -> &Path {
        match self {
            Stage::Synth { out_dir, .. }
            | Stage::Filter { out_dir, .. }
            | Stage::Sample { out_dir, .. }
            | Stage::Split { out_dir, .. }
            | Stage::Summarize { out_dir, .. }
            | Stage::Preprocess { out_dir, .. }
            | Stage::Train { out_dir, .. }
            | Stage::Predict { out_dir, .. }
            | Stage::Evaluate { out_dir, .. }
            | Stage::Agreement { out_dir, .. }
            | Stage::Confusion { out_dir, .. } => out_dir,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Stage::Synth { seed, .. } | Stage::Sample { seed, .. } => Some(*seed),
            Stage::Split {
                source: SplitSource::Ratios { seed, .. },
                ..
            } => Some(*seed),
            Stage::Train { config, .. } => Some(config.seed),
            _ => None,
        }
    }

    /// Files the stage reads.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        match self {
            Stage::Synth { .. } => {}
            Stage::Filter { corpus, keywords, .. } => {
                out.push(corpus.clone());
                out.extend(keywords.clone());
            }
            Stage::Sample { ids, .. } => out.push(ids.clone()),
            Stage::Split { corpus, ids, source, .. } => {
                out.push(corpus.clone());
                out.extend(ids.clone());
                if let SplitSource::File(f) = source {
                    out.push(f.clone());
                }
            }
            Stage::Summarize { corpus, split, .. } => out.extend([corpus.clone(), split.clone()]),
            Stage::Preprocess { inputs, .. } => out.extend(inputs.iter().cloned()),
            Stage::Train { train, dev, keywords, .. } => {
                out.push(train.clone());
                out.extend(dev.clone());
                out.extend(keywords.clone());
            }
            Stage::Predict { model, input, .. } => out.extend([model.clone(), input.clone()]),
            Stage::Evaluate { gold, pred, .. } | Stage::Confusion { gold, pred, .. } => {
                out.extend([gold.clone(), pred.clone()])
            }
            Stage::Agreement { corpus, .. } => out.push(corpus.clone()),
        }
        out
    }

    /// Checks parameters and that every input exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let usage = |m: String| Err(PipelineError::Usage(format!("{}: {m}", self.name())));
        for p in self.inputs() {
            if !p.exists() {
                return usage(format!("input {} does not exist", p.display()));
            }
        }
        match self {
            Stage::Synth { notes: 0, .. } => usage("notes must be at least 1".into()),
            Stage::Filter { min_hits: 0, .. } => usage("min_hits must be at least 1".into()),
            Stage::Preprocess { inputs, .. } if inputs.is_empty() => {
                usage("no input corpora given".into())
            }
            Stage::Preprocess { inputs, .. } => {
                let stems: BTreeSet<_> = inputs.iter().map(|p| p.file_stem()).collect();
                if stems.len() != inputs.len() {
                    return usage("input file names must be distinct".into());
                }
                Ok(())
            }
            Stage::Train { config, .. } => config
                .validate()
                .map_err(|e| PipelineError::Usage(format!("train: {e}"))),
            _ => Ok(()),
        }
    }

    /// Path of the manifest this stage writes.
    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir().join(format!("{}.manifest.json", self.name()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    /// SHA-256 of the parameters' canonical JSON.
    pub config_hash: String,
    pub params: Stage,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn io_err(path: &Path, source: std::io::Error) -> StageError {
    StageError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn digest_file(path: &Path) -> Result<FileDigest, StageError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Output bookkeeping for one stage run.
struct Outputs {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(stage: &Stage) -> Result<Outputs, StageError> {
        let dir = stage.out_dir().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let inputs = stage
            .inputs()
            .iter()
            .filter_map(|p| p.canonicalize().ok())
            .collect();
        Ok(Outputs {
            dir,
            inputs,
            written: Vec::new(),
        })
    }

    fn claim(&mut self, name: &str) -> Result<PathBuf, StageError> {
        let path = self.dir.join(name);
        if let Ok(canon) = path.canonicalize() {
            if self.inputs.contains(&canon) {
                return Err(StageError::Invalid {
                    path: path.display().to_string(),
                    message: "output would overwrite an input".into(),
                });
            }
        }
        self.written.push(path.clone());
        Ok(path)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, StageError> {
        let path = self.claim(name)?;
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

fn read_text(path: &Path) -> Result<String, StageError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_corpus(path: &Path) -> Result<Vec<AnnotatedNote>, StageError> {
    let format = if path.is_dir() {
        CorpusFormat::Standoff
    } else {
        CorpusFormat::Jsonl
    };
    Ok(load_corpus(path, format)?)
}

/// One id per line; blank lines are skipped.
pub fn read_ids(path: &Path) -> Result<Vec<String>, StageError> {
    let ids: Vec<String> = read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let distinct: BTreeSet<&String> = ids.iter().collect();
    if distinct.len() != ids.len() {
        return Err(StageError::Invalid {
            path: path.display().to_string(),
            message: "duplicate ids".into(),
        });
    }
    Ok(ids)
}

fn ids_file(ids: &[String]) -> String {
    ids.iter().map(|id| format!("{id}\n")).collect()
}

fn read_keywords(path: Option<&Path>) -> Result<KeywordList, StageError> {
    match path {
        None => Ok(KeywordList::starter()),
        Some(p) => Ok(KeywordList::parse(&read_text(p)?, &p.display().to_string())?),
    }
}

pub fn read_sequence_file(path: &Path) -> Result<Vec<SequenceExample>, StageError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_sequences(BufReader::new(file), &path.display().to_string()).map_err(|source| {
        StageError::Sequence {
            path: path.display().to_string(),
            source,
        }
    })
}

fn is_sequence_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "seq")
}

/// Spans from a `.seq` file (decoded from its labels) or a corpus.
pub fn read_spans(path: &Path, include_other: bool) -> Result<NoteSpans, StageError> {
    if is_sequence_file(path) {
        let (spans, repairs) = spans_by_note(&read_sequence_file(path)?);
        if repairs > 0 {
            log::warn!("{}: repaired {repairs} invalid BIO transitions", path.display());
        }
        Ok(spans
            .into_iter()
            .map(|(id, s)| (id, s.iter().map(Span::from).collect()))
            .collect())
    } else {
        Ok(corpus_spans(&read_corpus(path)?, include_other))
    }
}

fn restrict(corpus: Vec<AnnotatedNote>, ids: &[String], origin: &Path) -> Result<Vec<AnnotatedNote>, StageError> {
    let known: BTreeSet<&str> = corpus.iter().map(|n| n.id()).collect();
    if let Some(missing) = ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(StageError::Invalid {
            path: origin.display().to_string(),
            message: format!("id {missing} is not in the corpus"),
        });
    }
    let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    Ok(corpus.into_iter().filter(|n| keep.contains(n.id())).collect())
}

fn categories(include_other: bool) -> &'static [SymptomCategory] {
    SymptomCategory::in_scope(include_other)
}

fn execute(stage: &Stage, out: &mut Outputs) -> Result<(), StageError> {
    match stage {
        Stage::Synth { notes, seed, .. } => {
            let corpus = synth_generate(*seed, *notes, &default_phrase_bank())?;
            out.write("corpus.jsonl", to_jsonl(&corpus))?;
        }
        Stage::Filter {
            corpus,
            keywords,
            min_hits,
            threshold,
            ..
        } => {
            let notes: Vec<Note> = read_corpus(corpus)?.into_iter().map(|n| n.note).collect();
            let list = read_keywords(keywords.as_deref())?;
            let scanner = Scanner::new(&list)?;
            let ids = filter_corpus(&notes, &scanner, *min_hits, *threshold)?;
            log::info!("filter: {} of {} notes selected", ids.len(), notes.len());
            out.write("filtered_ids.txt", ids_file(&ids))?;
        }
        Stage::Sample { ids, n, seed, .. } => {
            let population = read_ids(ids)?;
            let picked = sample(&population, *n, *seed)?;
            out.write("sampled_ids.txt", ids_file(&picked))?;
        }
        Stage::Split {
            corpus, ids, source, ..
        } => {
            let mut notes = read_corpus(corpus)?;
            if let Some(ids) = ids {
                notes = restrict(notes, &read_ids(ids)?, ids)?;
            }
            let plan = match source {
                SplitSource::Ratios {
                    train,
                    dev,
                    test,
                    seed,
                } => SplitPlan::Ratios {
                    train: *train,
                    dev: *dev,
                    test: *test,
                    seed: *seed,
                },
                SplitSource::File(f) => {
                    SplitPlan::Explicit(SplitSpec::parse_tsv(&read_text(f)?, &f.display().to_string())?)
                }
            };
            let splits = split_corpus(&notes, &plan)?;
            let (a, b, c) = splits.sizes();
            log::info!("split: train {a}, dev {b}, test {c}");
            out.write("split.tsv", splits.spec.to_tsv())?;
            out.write("train.jsonl", to_jsonl(&splits.train))?;
            out.write("dev.jsonl", to_jsonl(&splits.dev))?;
            out.write("test.jsonl", to_jsonl(&splits.test))?;
        }
        Stage::Summarize {
            corpus,
            split,
            include_other,
            ..
        } => {
            let spec = SplitSpec::parse_tsv(&read_text(split)?, &split.display().to_string())?;
            let ids: Vec<String> = spec.assignment.keys().cloned().collect();
            let notes = restrict(read_corpus(corpus)?, &ids, split)?;
            let splits = split_corpus(&notes, &SplitPlan::Explicit(spec))?;
            let summary = summarize(&splits.train, &splits.dev, &splits.test, *include_other);
            out.write("summary.txt", summary.render_text())?;
            out.write("summary.csv", summary.to_csv())?;
        }
        Stage::Preprocess {
            inputs,
            include_other,
            ..
        } => {
            for input in inputs {
                let stem = input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "corpus".into());
                let (examples, stats) = preprocess_corpus(&read_corpus(input)?, *include_other);
                log::info!(
                    "preprocess {stem}: {} notes, {} sentences, {} tokens, {} annotations, {} clipped",
                    stats.notes,
                    stats.sentences,
                    stats.tokens,
                    stats.annotations,
                    stats.clipped
                );
                out.write(&format!("{stem}.seq"), sequences_to_string(&examples))?;
                let mut json = serde_json::to_string_pretty(&stats).expect("stats serialize");
                json.push('\n');
                out.write(&format!("{stem}.stats.json"), json)?;
            }
        }
        Stage::Train {
            train: train_path,
            dev,
            keywords,
            config,
            ..
        } => {
            let train_ex = read_sequence_file(train_path)?;
            let dev_ex = match dev {
                Some(d) => read_sequence_file(d)?,
                None => Vec::new(),
            };
            let mut config = config.clone();
            config.keywords = read_keywords(keywords.as_deref())?.entries().to_vec();
            let (model, log) = train(&train_ex, &dev_ex, &config)?;
            log::info!(
                "train: best epoch {} of {}, dev strict F1 {:?}",
                log.best_epoch,
                log.epochs.len() - 1,
                log.best_dev_f1
            );
            let model_path = out.claim("model.bin")?;
            out.claim("model.manifest.json")?;
            save_model(&model, &model_path, Some(&config), Some(&log))?;
            let mut json = serde_json::to_string_pretty(&log).expect("log serializes");
            json.push('\n');
            out.write("train_log.json", json)?;
        }
        Stage::Predict { model, input, .. } => {
            let model = load_model(model)?;
            let examples = if is_sequence_file(input) {
                read_sequence_file(input)?
            } else {
                preprocess_corpus(&read_corpus(input)?, true).0
            };
            let predicted = predict_examples(&model, &examples);
            out.write("predictions.seq", sequences_to_string(&predicted))?;
        }
        Stage::Evaluate {
            gold,
            pred,
            include_other,
            ..
        } => {
            let report = evaluate(
                &read_spans(gold, *include_other)?,
                &read_spans(pred, *include_other)?,
                categories(*include_other),
            );
            log::info!(
                "evaluate: strict micro F1 {:.4}, lenient micro F1 {:.4}",
                report.strict.micro.f1,
                report.lenient.micro.f1
            );
            out.write("eval_report.txt", render_report(&report, ReportFormat::Text))?;
            out.write("eval_report.json", render_report(&report, ReportFormat::Json))?;
            out.write("eval_report.csv", report_csv(&report))?;
        }
        Stage::Agreement {
            corpus,
            annotator_a,
            annotator_b,
            include_other,
            ..
        } => {
            let notes = read_corpus(corpus)?;
            let layer = |name: &str| {
                let mut spans = annotator_layer(&notes, Some(name));
                let cats = categories(*include_other);
                spans.values_mut().for_each(|v| v.retain(|s| cats.contains(&s.category)));
                spans
            };
            let (a, b) = (layer(annotator_a), layer(annotator_b));
            let mut text = format!("reference {annotator_a}, response {annotator_b}\n");
            let mut json = serde_json::Map::new();
            for mode in [MatchMode::Strict, MatchMode::Lenient] {
                let s = agreement(&a, &b, mode, categories(*include_other))?;
                let name = serde_json::to_value(mode).expect("mode serializes");
                let name = name.as_str().expect("mode is a string").to_string();
                text.push_str(&format!(
                    "{name}: P {:.4} R {:.4} F1 {:.4}\n",
                    s.precision, s.recall, s.f1
                ));
                json.insert(name, serde_json::to_value(s).expect("scores serialize"));
            }
            out.write("agreement.txt", text)?;
            let mut body = serde_json::to_string_pretty(&json).expect("json");
            body.push('\n');
            out.write("agreement.json", body)?;
        }
        Stage::Confusion {
            gold,
            pred,
            mode,
            include_other,
            ..
        } => {
            let m = confusion(
                &read_spans(gold, *include_other)?,
                &read_spans(pred, *include_other)?,
                *mode,
                categories(*include_other),
            );
            out.write("confusion.csv", m.to_csv())?;
        }
    }
    Ok(())
}

/// Validates and runs one stage, then writes its manifest.
pub fn run_stage(stage: &Stage) -> Result<RunManifest, PipelineError> {
    stage.validate()?;
    let wrap = |source: StageError| PipelineError::Stage {
        stage: stage.name(),
        source,
    };
    log::info!("running {}", stage.name());
    let inputs = stage
        .inputs()
        .iter()
        .map(|p| digest_file(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wrap)?;
    let mut out = Outputs::new(stage).map_err(wrap)?;
    execute(stage, &mut out).map_err(wrap)?;
    let outputs = out
        .written
        .iter()
        .map(|p| digest_file(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wrap)?;
    let params = serde_json::to_string(stage).expect("stage serializes");
    let manifest = RunManifest {
        stage: stage.name().to_string(),
        tool_version: TOOL_VERSION.to_string(),
        seed: stage.seed(),
        config_hash: sha256_hex(params.as_bytes()),
        params: stage.clone(),
        inputs,
        outputs,
    };
    let path = stage.manifest_path();
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| wrap(io_err(&path, e)))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Usage(format!("malformed manifest {}: {e}", path.display())))
}

/// Replays a recorded run after checking that its inputs are unchanged.
/// Returns the new manifest; compare its `outputs` with the old one.
pub fn rerun(manifest_path: &Path) -> Result<RunManifest, PipelineError> {
    let old = read_manifest(manifest_path)?;
    let stage = old.params.clone();
    for recorded in &old.inputs {
        let current = digest_file(Path::new(&recorded.path)).map_err(|source| PipelineError::Stage {
            stage: stage.name(),
            source,
        })?;
        if current.sha256 != recorded.sha256 {
            return Err(PipelineError::Stage {
                stage: stage.name(),
                source: StageError::Invalid {
                    path: recorded.path.clone(),
                    message: "input changed since the recorded run".into(),
                },
            });
        }
    }
    run_stage(&stage)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    /// A trained model; when set, the full run skips training.
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_hits: usize,
    pub threshold: ThresholdMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_hits: 1,
            threshold: ThresholdMode::Occurrences,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Number of filtered notes to keep; all when unset.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    /// Explicit assignment; overrides `ratios`.
    pub file: Option<PathBuf>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.7, 0.1, 0.2],
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub notes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { notes: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub confusion_mode: MatchMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            confusion_mode: MatchMode::Strict,
        }
    }
}

/// Configuration for a full run, read from TOML. Command-line flags override
/// individual keys. The top-level seed drives every stochastic stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub include_other: bool,
    pub paths: PathsConfig,
    pub filter: FilterConfig,
    pub sample: SampleConfig,
    pub split: SplitConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(input: &str) -> Result<PipelineConfig, PipelineError> {
        toml::from_str(input).map_err(|e| PipelineError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn require_seed(&self) -> Result<u64, PipelineError> {
        self.seed
            .ok_or_else(|| PipelineError::Usage("missing config key: seed".into()))
    }

    /// Output directory: config, then `DELIRIUM_OUT`.
    pub fn require_out_dir(&self) -> Result<PathBuf, PipelineError> {
        self.paths
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .ok_or_else(|| {
                PipelineError::Usage(format!("missing config key: paths.out_dir (or set {OUT_DIR_ENV})"))
            })
    }
}

/// The stages of a full run over `paths.corpus`, in execution order, each
/// writing to its own subdirectory of the output directory.
pub fn plan(config: &PipelineConfig) -> Result<Vec<Stage>, PipelineError> {
    let seed = config.require_seed()?;
    let out = config.require_out_dir()?;
    let corpus = config
        .paths
        .corpus
        .clone()
        .ok_or_else(|| PipelineError::Usage("missing config key: paths.corpus".into()))?;
    let include_other = config.include_other;
    let mut stages = vec![Stage::Filter {
        corpus: corpus.clone(),
        keywords: config.paths.keywords.clone(),
        min_hits: config.filter.min_hits,
        threshold: config.filter.threshold,
        out_dir: out.join("filter"),
    }];
    let mut ids = out.join("filter").join("filtered_ids.txt");
    if let Some(n) = config.sample.n {
        stages.push(Stage::Sample {
            ids,
            n,
            seed,
            out_dir: out.join("sample"),
        });
        ids = out.join("sample").join("sampled_ids.txt");
    }
    let [train, dev, test] = config.split.ratios;
    let split_dir = out.join("split");
    stages.push(Stage::Split {
        corpus: corpus.clone(),
        ids: Some(ids),
        source: match &config.split.file {
            Some(f) => SplitSource::File(f.clone()),
            None => SplitSource::Ratios { train, dev, test, seed },
        },
        out_dir: split_dir.clone(),
    });
    stages.push(Stage::Summarize {
        corpus,
        split: split_dir.join("split.tsv"),
        include_other,
        out_dir: out.join("summarize"),
    });
    let pre = out.join("preprocess");
    stages.push(Stage::Preprocess {
        inputs: ["train", "dev", "test"]
            .iter()
            .map(|s| split_dir.join(format!("{s}.jsonl")))
            .collect(),
        include_other,
        out_dir: pre.clone(),
    });
    let model = match &config.paths.model {
        Some(m) => m.clone(),
        None => {
            stages.push(Stage::Train {
                train: pre.join("train.seq"),
                dev: Some(pre.join("dev.seq")),
                keywords: config.paths.keywords.clone(),
                config: TrainConfig {
                    seed,
                    include_other,
                    ..config.train.clone()
                },
                out_dir: out.join("train"),
            });
            out.join("train").join("model.bin")
        }
    };
    stages.push(Stage::Predict {
        model,
        input: pre.join("test.seq"),
        out_dir: out.join("predict"),
    });
    let gold = split_dir.join("test.jsonl");
    let pred = out.join("predict").join("predictions.seq");
    stages.push(Stage::Evaluate {
        gold: gold.clone(),
        pred: pred.clone(),
        include_other,
        out_dir: out.join("evaluate"),
    });
    stages.push(Stage::Confusion {
        gold,
        pred,
        mode: config.eval.confusion_mode,
        include_other,
        out_dir: out.join("confusion"),
    });
    Ok(stages)
}

/// Runs every planned stage in order and returns the evaluation report.
pub fn run_pipeline(config: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let stages = plan(config)?;
    for stage in &stages {
        run_stage(stage)?;
    }
    let report_path = config.require_out_dir()?.join("evaluate").join("eval_report.json");
    let text = fs::read_to_string(&report_path).map_err(|e| PipelineError::Stage {
        stage: "evaluate",
        source: io_err(&report_path, e),
    })?;
    parse_report_json(&text).map_err(|e| PipelineError::Stage {
        stage: "evaluate",
        source: e.into(),
    })
}

/// Generates a synthetic corpus under `<out>/synth` and runs the full pipeline
/// on it.
pub fn end_to_end_smoke(config: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let seed = config.require_seed()?;
    let out = config.require_out_dir()?;
    let synth = Stage::Synth {
        notes: config.synth.notes,
        seed,
        out_dir: out.join("synth"),
    };
    run_stage(&synth)?;
    let mut config = config.clone();
    config.paths.corpus = Some(out.join("synth").join("corpus.jsonl"));
    config.paths.out_dir = Some(out);
    run_pipeline(&config)
}
