use std::collections::HashMap;

use rayon::prelude::*;

use super::features::{FeatureExtractor, FeatureVector};
use super::TaggerError;
use crate::preprocess::{BioLabel, SequenceExample, Token};

/// Probabilities below this are floored before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Linear softmax token classifier over sparse binary features.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    labels: Vec<BioLabel>,
    features: Vec<String>,
    feature_index: HashMap<String, u32>,
    keywords: Vec<String>,
    extractor: FeatureExtractor,
    /// Row-major `[labels × features]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl TaggerModel {
    /// Zero-initialized model.
    pub fn new(labels: Vec<BioLabel>, features: Vec<String>, keywords: Vec<String>) -> TaggerModel {
        let n = labels.len() * features.len();
        let n_labels = labels.len();
        TaggerModel::from_parts(labels, features, keywords, vec![0.0; n], vec![0.0; n_labels])
            .expect("zero model is valid")
    }

    pub fn from_parts(
        labels: Vec<BioLabel>,
        features: Vec<String>,
        keywords: Vec<String>,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<TaggerModel, TaggerError> {
        if labels.is_empty() {
            return Err(TaggerError::InvalidModel("empty label set".into()));
        }
        if weights.len() != labels.len() * features.len() || bias.len() != labels.len() {
            return Err(TaggerError::InvalidModel(format!(
                "weight shape mismatch: {} labels, {} features, {} weights, {} biases",
                labels.len(),
                features.len(),
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(TaggerError::InvalidModel("non-finite parameter".into()));
        }
        let feature_index: HashMap<String, u32> = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i as u32))
            .collect();
        if feature_index.len() != features.len() {
            return Err(TaggerError::InvalidModel("duplicate feature name".into()));
        }
        let extractor = FeatureExtractor::new(&keywords);
        Ok(TaggerModel {
            labels,
            features,
            feature_index,
            keywords,
            extractor,
            weights,
            bias,
        })
    }

    pub fn labels(&self) -> &[BioLabel] {
        &self.labels
    }

    pub fn label_index(&self, label: BioLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, label: usize, feature: usize) -> f64 {
        self.weights[label * self.features.len() + feature]
    }

    /// Maps feature strings to ids, dropping unseen ones.
    pub fn vectorize(&self, names: &[String]) -> FeatureVector {
        FeatureVector::new(
            names
                .iter()
                .filter_map(|n| self.feature_index.get(n).copied())
                .collect(),
        )
    }

    /// Feature vectors for every token of a sentence.
    pub fn sentence_vectors(&self, tokens: &[Token]) -> Vec<FeatureVector> {
        self.extractor
            .sentence_features(tokens)
            .iter()
            .map(|names| self.vectorize(names))
            .collect()
    }

    pub(crate) fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        let f = self.features.len();
        self.bias
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let row = &self.weights[l * f..(l + 1) * f];
                b + x.indices().iter().map(|&i| row[i as usize]).sum::<f64>()
            })
            .collect()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Label distribution `softmax(W·x + b)`.
pub fn forward(features: &FeatureVector, model: &TaggerModel) -> Result<Vec<f64>, TaggerError> {
    if let Some(&bad) = features.indices().last() {
        if bad as usize >= model.n_features() {
            return Err(TaggerError::FeatureOutOfRange {
                id: bad,
                size: model.n_features(),
            });
        }
    }
    Ok(softmax(&model.logits(features)))
}

/// Cross-entropy `-ln p[gold]`, with `p[gold]` floored at [`PROB_FLOOR`].
pub fn loss(probabilities: &[f64], gold: usize) -> f64 {
    -probabilities[gold].max(PROB_FLOOR).ln()
}

/// A feature vector with its gold label index.
pub type LabeledToken = (FeatureVector, usize);

/// Mean cross-entropy over the tokens plus `l2 / 2 · ‖W‖²` (bias not penalized).
pub fn objective(model: &TaggerModel, batch: &[LabeledToken], l2: f64) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let ce: f64 = batch
        .iter()
        .map(|(x, y)| loss(&softmax(&model.logits(x)), *y))
        .sum::<f64>()
        / batch.len() as f64;
    let penalty: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    ce + penalty
}

/// Dense gradient of [`objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Adds `scale · (p − onehot(y))` for one token to a dense gradient and returns
/// the token's cross-entropy.
fn accumulate(
    model: &TaggerModel,
    x: &FeatureVector,
    y: usize,
    scale: f64,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> f64 {
    let p = softmax(&model.logits(x));
    let f = model.n_features();
    for (l, &pl) in p.iter().enumerate() {
        let delta = scale * (pl - if l == y { 1.0 } else { 0.0 });
        grad_b[l] += delta;
        let row = &mut grad_w[l * f..(l + 1) * f];
        for &i in x.indices() {
            row[i as usize] += delta;
        }
    }
    loss(&p, y)
}

pub fn gradient(model: &TaggerModel, batch: &[LabeledToken], l2: f64) -> Gradient {
    let mut grad = Gradient {
        weights: model.weights.iter().map(|w| l2 * w).collect(),
        bias: vec![0.0; model.n_labels()],
    };
    if batch.is_empty() {
        return grad;
    }
    let scale = 1.0 / batch.len() as f64;
    for (x, y) in batch {
        accumulate(model, x, *y, scale, &mut grad.weights, &mut grad.bias);
    }
    grad
}

/// Greedy per-token argmax that never emits an `I-X` unless the previous
/// label is `B-X` or `I-X`. Ties go to the lowest label index.
pub fn decode_constrained(scores: &[Vec<f64>], labels: &[BioLabel]) -> Vec<BioLabel> {
    let mut out = Vec::with_capacity(scores.len());
    let mut prev: Option<BioLabel> = None;
    for row in scores {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in row.iter().enumerate() {
            if !labels[i].may_follow(prev) {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        // `O` and every `B-X` are always legal, so a legal label exists.
        let label = labels[best.expect("a legal label exists").0];
        out.push(label);
        prev = Some(label);
    }
    out
}

/// Labels one tokenized sentence.
pub fn predict_sentence(model: &TaggerModel, tokens: &[Token]) -> Vec<BioLabel> {
    let scores: Vec<Vec<f64>> = model
        .sentence_vectors(tokens)
        .iter()
        .map(|x| softmax(&model.logits(x)))
        .collect();
    decode_constrained(&scores, model.labels())
}

/// Labels many sentences in parallel; output order follows the input.
pub fn predict<T: AsRef<[Token]> + Sync>(model: &TaggerModel, sentences: &[T]) -> Vec<Vec<BioLabel>> {
    sentences
        .par_iter()
        .map(|s| predict_sentence(model, s.as_ref()))
        .collect()
}

/// Copies the examples with their labels replaced by predictions.
pub fn predict_examples(model: &TaggerModel, examples: &[SequenceExample]) -> Vec<SequenceExample> {
    examples
        .par_iter()
        .map(|ex| SequenceExample {
            labels: predict_sentence(model, &ex.tokens),
            ..ex.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SymptomCategory;
    use crate::preprocess::{is_bio_valid, label_inventory, tokenize};

    fn model(n_features: usize) -> TaggerModel {
        TaggerModel::new(
            label_inventory(false),
            (0..n_features).map(|i| format!("f{i}")).collect(),
            vec![],
        )
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = model(4);
        let p = forward(&FeatureVector::new(vec![0, 2]), &m).unwrap();
        assert_eq!(p.len(), 17);
        for v in &p {
            assert!((v - 1.0 / 17.0).abs() < 1e-15);
        }
        assert!((loss(&p, 3) - 17f64.ln()).abs() < 1e-12);
        assert!((17f64.ln() - 2.8332).abs() < 1e-4);
    }

    #[test]
    fn large_bias_dominates() {
        let mut m = model(2);
        m.bias_mut()[5] = 10.0;
        let p = forward(&FeatureVector::default(), &m).unwrap();
        assert!(p[5] > 0.999);
    }

    #[test]
    fn out_of_range_feature() {
        let m = model(2);
        assert!(matches!(
            forward(&FeatureVector::new(vec![2]), &m),
            Err(TaggerError::FeatureOutOfRange { id: 2, size: 2 })
        ));
    }

    #[test]
    fn loss_edge_cases() {
        assert_eq!(loss(&[0.0, 1.0], 1), 0.0);
        assert!((loss(&[1.0, 0.0], 1) - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constrained_start_never_inside() {
        let labels = label_inventory(false);
        let i_att = labels
            .iter()
            .position(|l| *l == BioLabel::I(SymptomCategory::DisturbedAttention))
            .unwrap();
        let mut row = vec![0.0; labels.len()];
        row[i_att] = 0.9;
        row[0] = 0.05;
        let out = decode_constrained(&[row], &labels);
        assert_eq!(out, [BioLabel::O]);
    }

    #[test]
    fn constrained_ties_lowest_index() {
        let labels = label_inventory(false);
        let row = vec![0.5; labels.len()];
        assert_eq!(decode_constrained(&[row], &labels), [BioLabel::O]);
    }

    #[test]
    fn biased_toward_outside() {
        let mut m = model(3);
        m.bias_mut()[0] = 50.0;
        let labels = predict_sentence(&m, &tokenize("Pt is restless."));
        assert!(labels.iter().all(|l| *l == BioLabel::O));
    }

    #[test]
    fn predictions_are_valid_bio() {
        let mut m = model(0);
        let labels = m.labels().to_vec();
        // strongly prefer I-PMA everywhere
        let i_pma = labels
            .iter()
            .position(|l| *l == BioLabel::I(SymptomCategory::PsychomotorActivity))
            .unwrap();
        m.bias_mut()[i_pma] = 5.0;
        let out = predict_sentence(&m, &tokenize("a b c d"));
        assert!(is_bio_valid(&out));
        assert_eq!(out[0], BioLabel::O);
    }

    #[test]
    fn shape_checks() {
        assert!(TaggerModel::from_parts(label_inventory(false), vec!["a".into()], vec![], vec![0.0; 3], vec![0.0; 17]).is_err());
        assert!(TaggerModel::from_parts(vec![], vec![], vec![], vec![], vec![]).is_err());
        let mut w = vec![0.0; 17];
        w[0] = f64::NAN;
        assert!(TaggerModel::from_parts(label_inventory(false), vec!["a".into()], vec![], w, vec![0.0; 17]).is_err());
    }
}
