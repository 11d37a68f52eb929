use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, VeracityError, VeracityVerdict};
use crate::corpus::Veracity;
use crate::hashing::Fnv1a;
use crate::textprep::{vectorize, CleanDoc, SparseVec, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDoc {
    pub doc: CleanDoc,
    pub fake: bool,
}

/// Logistic regression over normalized TF-IDF vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFakeNewsModel {
    pub vocab: Vocabulary,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Fingerprint of the training set.
    pub trained_on: String,
}

impl LinearFakeNewsModel {
    pub fn new(vocab: Vocabulary, weights: Vec<f64>, bias: f64, trained_on: impl Into<String>) -> Self {
        Self {
            vocab,
            weights,
            bias,
            trained_on: trained_on.into(),
        }
    }

    pub fn score_vector(&self, x: &SparseVec) -> f64 {
        sigmoid(x.dot_dense(&self.weights) + self.bias)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scores `doc`; fake when the score exceeds 0.5.
pub fn classify(doc: &CleanDoc, model: &LinearFakeNewsModel) -> Result<VeracityVerdict, VeracityError> {
    if model.weights.len() != model.vocab.len() {
        return Err(VeracityError::VocabularyMismatch {
            weights: model.weights.len(),
            vocab: model.vocab.len(),
        });
    }
    let x = vectorize(doc, &model.vocab);
    Ok(VeracityVerdict::from_score(&doc.doc_id, model.score_vector(&x)))
}

impl Classifier for LinearFakeNewsModel {
    fn judge(&self, doc_id: &str, doc: &CleanDoc, _: &str) -> Result<VeracityVerdict, VeracityError> {
        let mut v = classify(doc, self)?;
        v.doc_id = doc_id.to_string();
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub max_features: Option<usize>,
    pub epochs: usize,
    /// Initial learning rate.
    pub eta0: f64,
    /// L2 penalty.
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: 0,
            max_features: Some(5000),
            epochs: 20,
            eta0: 0.5,
            alpha: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: LinearFakeNewsModel,
    pub train_size: usize,
    pub test_size: usize,
    /// `None` when the split leaves no held-out documents.
    pub test_accuracy: Option<f64>,
    pub seconds: f64,
}

fn fingerprint(docs: &[LabeledDoc]) -> String {
    let mut h = Fnv1a::default();
    for d in docs {
        h.write(if d.fake { b"F" } else { b"R" });
        for t in &d.doc.tokens {
            h.write(t.as_bytes()).write(b" ");
        }
        h.write(b"\n");
    }
    format!("{:016x}", h.finish())
}

/// Stratified split: each class is shuffled on its own and cut at the
/// train fraction, so both halves keep the class ratio.
fn stratified_split(docs: &[LabeledDoc], frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].fake == class).collect();
        idx.shuffle(rng);
        let cut = ((idx.len() as f64) * frac).round() as usize;
        let cut = cut.clamp(1.min(idx.len()), idx.len());
        test.extend_from_slice(&idx[cut..]);
        idx.truncate(cut);
        train.extend(idx);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Fits the model by stochastic gradient descent on the log loss with an
/// L2 penalty, then reports held-out accuracy. Deterministic for a seed.
pub fn train_linear(docs: &[LabeledDoc], cfg: &TrainConfig) -> Result<TrainReport, VeracityError> {
    if docs.is_empty() {
        return Err(VeracityError::EmptyCorpus);
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(VeracityError::BadSplit(cfg.train_fraction));
    }
    let fakes = docs.iter().filter(|d| d.fake).count();
    if fakes == 0 || fakes == docs.len() {
        return Err(VeracityError::SingleClassCorpus);
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, test_idx) = stratified_split(docs, cfg.train_fraction, &mut rng);

    let train_docs: Vec<CleanDoc> = train_idx.iter().map(|&i| docs[i].doc.clone()).collect();
    let vocab = Vocabulary::build(&train_docs, cfg.max_features).map_err(|_| VeracityError::EmptyCorpus)?;
    let xs: Vec<SparseVec> = train_docs.iter().map(|d| vectorize(d, &vocab)).collect();
    let ys: Vec<f64> = train_idx.iter().map(|&i| if docs[i].fake { 1.0 } else { 0.0 }).collect();

    // w = scale * v keeps the per-step L2 shrink O(1).
    let mut v = vec![0.0; vocab.len()];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut t = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = cfg.eta0 / (1.0 + cfg.eta0 * cfg.alpha * t);
            t += 1.0;
            let z = scale * xs[i].dot_dense(&v) + bias;
            let g = sigmoid(z) - ys[i];
            scale *= 1.0 - eta * cfg.alpha;
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            for &(j, x) in &xs[i].entries {
                v[j] -= eta * g * x / scale;
            }
            bias -= eta * g;
        }
    }
    let weights: Vec<f64> = v.iter().map(|w| w * scale).collect();
    let model = LinearFakeNewsModel::new(vocab, weights, bias, fingerprint(docs));

    let test_accuracy = (!test_idx.is_empty()).then(|| {
        let correct = test_idx
            .iter()
            .filter(|&&i| {
                let x = vectorize(&docs[i].doc, &model.vocab);
                (model.score_vector(&x) > super::DECISION_THRESHOLD) == docs[i].fake
            })
            .count();
        correct as f64 / test_idx.len() as f64
    });
    Ok(TrainReport {
        model,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
        test_accuracy,
        seconds: started.elapsed().as_secs_f64(),
    })
}

impl From<(CleanDoc, Veracity)> for LabeledDoc {
    fn from((doc, v): (CleanDoc, Veracity)) -> Self {
        LabeledDoc {
            doc,
            fake: v == Veracity::Fake,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: usize, toks: &[&str]) -> CleanDoc {
        CleanDoc::new(id.to_string(), toks.iter().map(|s| s.to_string()).collect())
    }

    fn toy() -> Vec<LabeledDoc> {
        (0..100)
            .map(|i| {
                let fake = i % 2 == 0;
                let marker = if fake { "hoax" } else { "gaug" };
                let filler = ["rain", "river", "storm"][i % 3];
                LabeledDoc {
                    doc: doc(i, &[marker, filler]),
                    fake,
                }
            })
            .collect()
    }

    #[test]
    fn separable_corpus_is_learned() {
        let r = train_linear(&toy(), &TrainConfig::default()).unwrap();
        assert_eq!(r.test_accuracy, Some(1.0));
        assert_eq!(r.train_size, 70);
        assert_eq!(r.test_size, 30);
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_linear(&toy(), &TrainConfig::default()).unwrap().model;
        let b = train_linear(&toy(), &TrainConfig::default()).unwrap().model;
        assert_eq!(a, b);
    }

    #[test]
    fn split_keeps_class_ratio() {
        let docs: Vec<LabeledDoc> = (0..100)
            .map(|i| LabeledDoc {
                doc: doc(i, &["x"]),
                fake: i < 20,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (train, test) = stratified_split(&docs, 0.7, &mut rng);
        assert_eq!(train.iter().filter(|&&i| docs[i].fake).count(), 14);
        assert_eq!(test.iter().filter(|&&i| docs[i].fake).count(), 6);
        assert_eq!(train.len() + test.len(), 100);
    }

    #[test]
    fn degenerate_corpora_are_rejected() {
        assert_eq!(
            train_linear(&[], &TrainConfig::default()).unwrap_err(),
            VeracityError::EmptyCorpus
        );
        let one: Vec<LabeledDoc> = toy().into_iter().filter(|d| d.fake).collect();
        assert_eq!(
            train_linear(&one, &TrainConfig::default()).unwrap_err(),
            VeracityError::SingleClassCorpus
        );
        let cfg = TrainConfig {
            train_fraction: 1.0,
            ..Default::default()
        };
        assert_eq!(train_linear(&toy(), &cfg).unwrap_err(), VeracityError::BadSplit(1.0));
    }

    fn vocab() -> Vocabulary {
        Vocabulary::build(&[doc(0, &["hoax", "rain"])], None).unwrap()
    }

    #[test]
    fn zero_model_scores_half_and_is_real() {
        let m = LinearFakeNewsModel::new(vocab(), vec![0.0, 0.0], 0.0, "");
        let v = classify(&doc(1, &["rain"]), &m).unwrap();
        assert_eq!(v.score, 0.5);
        assert_eq!(v.label, Veracity::Real);
    }

    #[test]
    fn heavy_weight_flags_fake() {
        let m = LinearFakeNewsModel::new(vocab(), vec![10.0, 0.0], 0.0, "");
        let v = classify(&doc(1, &["hoax"]), &m).unwrap();
        let expected = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((v.score - expected).abs() < 1e-15);
        assert!((v.score - 0.99995).abs() < 1e-5);
        assert_eq!(v.label, Veracity::Fake);
    }

    #[test]
    fn empty_doc_scores_bias() {
        let m = LinearFakeNewsModel::new(vocab(), vec![1.0, 1.0], -1.2, "");
        let v = classify(&doc(1, &[]), &m).unwrap();
        assert!((v.score - sigmoid(-1.2)).abs() < 1e-15);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let m = LinearFakeNewsModel::new(vocab(), vec![1.0], 0.0, "");
        assert_eq!(
            classify(&doc(1, &[]), &m).unwrap_err(),
            VeracityError::VocabularyMismatch { weights: 1, vocab: 2 }
        );
    }
}
