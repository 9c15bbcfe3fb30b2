use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureExtractor;
use super::model::{loss, objective, predict_sentence, softmax, LabeledToken, TaggerModel};
use super::TaggerError;
use crate::eval::{evaluate, NoteSpans, Span};
use crate::preprocess::{decode_bio, label_inventory, BioLabel, SequenceExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub l2_penalty: f64,
    /// Epochs without dev improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    /// Tokens per mini-batch.
    pub batch_size: usize,
    /// Train with the `Other` labels as well.
    pub include_other: bool,
    /// Keyword phrases for the keyword-membership feature.
    pub keywords: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            seed: 0,
            l2_penalty: 1e-6,
            patience: 5,
            batch_size: 1,
            include_other: false,
            keywords: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TaggerError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(TaggerError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(TaggerError::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(TaggerError::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean token cross-entropy over the training set after this epoch.
    pub train_loss: f64,
    /// Strict micro F1 on the dev set, if there is one.
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: Option<f64>,
    pub stopped_early: bool,
}

/// Gold spans of labelled examples, keyed by note id.
pub fn example_spans(examples: &[SequenceExample]) -> NoteSpans {
    let mut out = NoteSpans::new();
    for ex in examples {
        let spans = decode_bio(&ex.tokens, &ex.labels).spans;
        out.entry(ex.note_id.clone())
            .or_default()
            .extend(spans.iter().map(Span::from));
    }
    out
}

/// Strict micro F1 of the model's predictions against the examples' labels.
pub fn strict_micro_f1(model: &TaggerModel, examples: &[SequenceExample]) -> f64 {
    let gold = example_spans(examples);
    let mut pred = NoteSpans::new();
    for ex in examples {
        let labels = predict_sentence(model, &ex.tokens);
        let spans = decode_bio(&ex.tokens, &labels).spans;
        pred.entry(ex.note_id.clone())
            .or_default()
            .extend(spans.iter().map(Span::from));
    }
    let categories: Vec<_> = model
        .labels()
        .iter()
        .filter_map(|l| match l {
            BioLabel::B(c) => Some(*c),
            _ => None,
        })
        .collect();
    evaluate(&gold, &pred, &categories).strict.micro.f1
}

fn mean_loss(model: &TaggerModel, tokens: &[LabeledToken]) -> f64 {
    objective(model, tokens, 0.0)
}

/// Mini-batch gradient descent on mean token cross-entropy with L2, keeping
/// the epoch with the best dev strict micro F1 (earliest on ties). Without dev
/// examples the last epoch is kept.
pub fn train(
    train_examples: &[SequenceExample],
    dev_examples: &[SequenceExample],
    config: &TrainConfig,
) -> Result<(TaggerModel, TrainLog), TaggerError> {
    config.validate()?;
    if train_examples.iter().all(|e| e.tokens.is_empty()) {
        return Err(TaggerError::EmptyTrainingSet);
    }
    let labels = label_inventory(config.include_other);
    for ex in train_examples.iter().chain(dev_examples) {
        if let Some(l) = ex.labels.iter().find(|l| !labels.contains(l)) {
            return Err(TaggerError::UnknownLabel {
                label: l.to_string(),
                note_id: ex.note_id.clone(),
            });
        }
    }

    // Feature space comes from the training set only, in first-seen order.
    let extractor = FeatureExtractor::new(&config.keywords);
    let mut index: BTreeMap<String, u32> = BTreeMap::new();
    let mut features: Vec<String> = Vec::new();
    let mut raw: Vec<(Vec<u32>, usize)> = Vec::new();
    for ex in train_examples {
        for (names, label) in extractor.sentence_features(&ex.tokens).into_iter().zip(&ex.labels) {
            let ids = names
                .into_iter()
                .map(|n| {
                    *index.entry(n.clone()).or_insert_with(|| {
                        features.push(n);
                        (features.len() - 1) as u32
                    })
                })
                .collect();
            let y = labels.iter().position(|l| l == label).expect("checked above");
            raw.push((ids, y));
        }
    }
    let mut model = TaggerModel::new(labels, features, config.keywords.clone());
    let tokens: Vec<LabeledToken> = raw
        .into_iter()
        .map(|(ids, y)| (super::FeatureVector::new(ids), y))
        .collect();

    let mut log = TrainLog::default();
    let dev_f1 = |m: &TaggerModel| (!dev_examples.is_empty()).then(|| strict_micro_f1(m, dev_examples));
    log.epochs.push(EpochRecord {
        epoch: 0,
        train_loss: mean_loss(&model, &tokens),
        dev_f1: dev_f1(&model),
    });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    let n_labels = model.n_labels();
    let n_features = model.n_features();
    let decay = 1.0 - config.learning_rate * config.l2_penalty;
    let lr = config.learning_rate;
    let mut best: Option<(f64, usize, TaggerModel)> = None;
    let mut since_best = 0;
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(config.batch_size.min(tokens.len()));

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        // Stored weights are `W / scale`; decay only touches `scale`.
        let mut scale = 1.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            probs.clear();
            let mut batch_loss = 0.0;
            for &t in batch {
                let (x, y) = &tokens[t];
                let weights = model.weights();
                let logits: Vec<f64> = (0..n_labels)
                    .map(|l| {
                        let row = &weights[l * n_features..(l + 1) * n_features];
                        scale * x.indices().iter().map(|&i| row[i as usize]).sum::<f64>()
                            + model.bias()[l]
                    })
                    .collect();
                let p = softmax(&logits);
                batch_loss += loss(&p, *y);
                probs.push(p);
            }
            if !batch_loss.is_finite() {
                return Err(TaggerError::NonFiniteLoss { epoch, batch: b });
            }
            scale *= decay;
            let step = lr / batch.len() as f64;
            for (&t, p) in batch.iter().zip(&probs) {
                let (x, y) = &tokens[t];
                for (l, &pl) in p.iter().enumerate() {
                    let delta = step * (pl - if l == *y { 1.0 } else { 0.0 });
                    model.bias_mut()[l] -= delta;
                    let row = &mut model.weights_mut()[l * n_features..(l + 1) * n_features];
                    for &i in x.indices() {
                        row[i as usize] -= delta / scale;
                    }
                }
            }
            if scale < 1e-100 {
                model.weights_mut().iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
        if scale != 1.0 {
            model.weights_mut().iter_mut().for_each(|w| *w *= scale);
        }

        let train_loss = mean_loss(&model, &tokens);
        if !train_loss.is_finite() {
            return Err(TaggerError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        let f1 = dev_f1(&model);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_f1: f1,
        });
        log::debug!("epoch {epoch}: loss {train_loss:.6} dev F1 {f1:?}");

        let score = f1.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => score > *b || (f1.is_none()),
        };
        if improved {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    let (score, epoch, model) = best.expect("at least one epoch ran");
    log.best_epoch = epoch;
    log.best_dev_f1 = (!dev_examples.is_empty()).then_some(score);
    Ok((model, log))
}
