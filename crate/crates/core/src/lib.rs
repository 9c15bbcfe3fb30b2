//! Delirium symptom extraction from clinical notes.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! * [`filter`]: keyword scanning and threshold selection of candidate notes,
//!   snowball keyword-list growth, seeded sampling.
//! * [`corpus`]: notes with character-offset span annotations over eight
//!   symptom categories (plus `Other`), JSONL and standoff I/O, splits,
//!   per-category summaries and a synthetic corpus generator.
//! * [`preprocess`]: tokenization, sentence splitting, BIO encoding and
//!   decoding, and the column file format used to exchange predictions.
//! * [`tagger`]: a linear softmax token classifier trained with cross-entropy
//!   and selected on dev-set strict F1.
//! * [`eval`]: strict and lenient span scoring, confusion matrices and
//!   inter-annotator agreement.
//! * [`pipeline`]: file-level stage runners with run manifests.

pub mod corpus;
pub mod eval;
pub mod filter;
pub mod pipeline;
pub mod preprocess;
pub mod tagger;
