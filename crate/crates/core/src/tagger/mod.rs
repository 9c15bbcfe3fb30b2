//! Token classifier: sparse features, a linear layer with softmax over BIO
//! labels, cross-entropy training with dev-set model selection, and
//! BIO-constrained greedy decoding.

mod features;
mod io;
mod model;
mod train;

pub use features::{word_shape, FeatureExtractor, FeatureVector};
pub use io::{
    decode_model, encode_model, load_model, load_model_expecting, manifest_path, save_model,
    ModelManifest, FORMAT_VERSION,
};
pub use model::{
    decode_constrained, forward, gradient, loss, objective, predict, predict_examples,
    predict_sentence, softmax, Gradient, LabeledToken, TaggerModel, PROB_FLOOR,
};
pub use train::{example_spans, strict_micro_f1, train, EpochRecord, TrainConfig, TrainLog};

#[derive(Debug, thiserror::Error)]
pub enum TaggerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("feature id {id} out of range for a model with {size} features")]
    FeatureOutOfRange { id: u32, size: usize },
    #[error("label {label} in note {note_id} is not in the model label set")]
    UnknownLabel { label: String, note_id: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("label set mismatch: expected {expected:?}, found {found:?}")]
    LabelSetMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
