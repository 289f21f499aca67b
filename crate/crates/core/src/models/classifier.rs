//! Multinomial logistic regression trained by gradient descent on the mean
//! softmax cross-entropy.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::data::{ClassId, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: None,
            seed: 0,
        }
    }
}

/// Weights (`classes x dim`) and per-class bias of a linear softmax model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl SoftmaxParams {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        SoftmaxParams {
            weights: Matrix::zeros(classes, dim),
            bias: vec![0.0; classes],
        }
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .mul_vec(z)
            .into_iter()
            .zip(&self.bias)
            .map(|(a, b)| a + b)
            .collect()
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    logits.iter_mut().for_each(|l| *l /= total);
}

/// Mean cross-entropy of `params` on `(inputs, targets)` and its gradient.
pub fn cross_entropy_with_grad(params: &SoftmaxParams, inputs: &[Vec<f64>], targets: &[usize]) -> (f64, SoftmaxParams) {
    let classes = params.bias.len();
    let dim = params.weights.cols;
    let mut grad = SoftmaxParams::zeros(classes, dim);
    let mut loss = 0.0;
    let n = inputs.len() as f64;
    for (z, &y) in inputs.iter().zip(targets) {
        let mut p = params.logits(z);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + p.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        loss += lse - p[y];
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for (k, &pk) in p.iter().enumerate() {
            grad.bias[k] += pk / n;
            grad.weights
                .row_mut(k)
                .iter_mut()
                .zip(z)
                .for_each(|(g, zi)| *g += pk * zi / n);
        }
    }
    (loss / n, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    /// Sorted; the position of a class is its logit index.
    pub classes: Vec<ClassId>,
    /// Per-dimension standardization applied before the linear map.
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub params: SoftmaxParams,
    /// Full-data loss before each epoch, then the final loss.
    #[serde(skip)]
    pub loss_history: Vec<f64>,
}

impl Classifier {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.params.logits(&self.standardize(x)))
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut l = self.logits(x)?;
        softmax_in_place(&mut l);
        Ok(l)
    }

    /// Batch prediction; output order follows input order.
    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<ClassId>> {
        rows.par_iter().map(|x| predict_classifier(self, x)).collect()
    }
}

/// Index of the largest logit; the first (smallest class id) wins ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

pub fn predict_classifier(model: &Classifier, x: &[f64]) -> Result<ClassId> {
    let logits = model.logits(x)?;
    Ok(model.classes[argmax(&logits)].clone())
}

pub fn fit_classifier(data: &[LabeledSample], classes: &[ClassId], config: &TrainConfig) -> Result<Classifier> {
    if data.is_empty() {
        return Err(Error::invalid("data", "cannot train a classifier on no samples"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::invalid("learning_rate", "must be positive"));
    }
    if config.batch_size == Some(0) {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    let mut classes = classes.to_vec();
    classes.sort();
    classes.dedup();
    let dim = data[0].x.len();
    let targets = data
        .iter()
        .map(|s| {
            if s.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.x.len(),
                });
            }
            classes
                .binary_search(&s.label)
                .map_err(|_| Error::Validation(format!("training label {} is not in the class set", s.label)))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = data.len() as f64;
    let mut shift = vec![0.0; dim];
    for s in data {
        shift.iter_mut().zip(&s.x).for_each(|(m, x)| *m += x / n);
    }
    let mut scale = vec![0.0; dim];
    for s in data {
        scale
            .iter_mut()
            .zip(s.x.iter().zip(&shift))
            .for_each(|(v, (x, m))| *v += (x - m) * (x - m) / n);
    }
    scale.iter_mut().for_each(|v| *v = if *v > 1e-12 { v.sqrt() } else { 1.0 });

    let mut model = Classifier {
        classes,
        shift,
        scale,
        params: SoftmaxParams::zeros(0, dim),
        loss_history: Vec::with_capacity(config.epochs + 1),
    };
    model.params = SoftmaxParams::zeros(model.classes.len(), dim);
    let inputs: Vec<Vec<f64>> = data.iter().map(|s| model.standardize(&s.x)).collect();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle = rng::substream(config.seed, rng::CLASSIFIER);

    for epoch in 0..config.epochs {
        let (loss, grad) = cross_entropy_with_grad(&model.params, &inputs, &targets);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        model.loss_history.push(loss);
        match config.batch_size {
            None => step(&mut model.params, &grad, config.learning_rate),
            Some(b) => minibatch_epoch(&mut model.params, &inputs, &targets, &mut order, b, config.learning_rate, &mut shuffle),
        }
    }
    let (loss, _) = cross_entropy_with_grad(&model.params, &inputs, &targets);
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch: config.epochs });
    }
    model.loss_history.push(loss);
    Ok(model)
}

fn step(params: &mut SoftmaxParams, grad: &SoftmaxParams, lr: f64) {
    params
        .weights
        .data
        .iter_mut()
        .zip(&grad.weights.data)
        .for_each(|(w, g)| *w -= lr * g);
    params.bias.iter_mut().zip(&grad.bias).for_each(|(b, g)| *b -= lr * g);
}

fn minibatch_epoch(
    params: &mut SoftmaxParams,
    inputs: &[Vec<f64>],
    targets: &[usize],
    order: &mut [usize],
    batch: usize,
    lr: f64,
    rng: &mut StreamRng,
) {
    order.shuffle(rng);
    for chunk in order.chunks(batch) {
        let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
        let ys: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
        let (_, grad) = cross_entropy_with_grad(params, &xs, &ys);
        step(params, &grad, lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample(x: &[f64], label: &str) -> LabeledSample {
        LabeledSample {
            x: x.to_vec(),
            label: ClassId::from(label),
        }
    }

    fn two_blobs() -> Vec<LabeledSample> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        (0..60)
            .map(|i| {
                let (c, l) = if i % 2 == 0 { (-2.0, "a") } else { (2.0, "b") };
                sample(&[c + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)], l)
            })
            .collect()
    }

    #[test]
    fn separable_classes_are_learned() {
        let data = two_blobs();
        let m = fit_classifier(&data, &["b".into(), "a".into()], &TrainConfig::default()).unwrap();
        assert_eq!(m.classes, vec![ClassId::from("a"), ClassId::from("b")]);
        for s in &data {
            assert_eq!(predict_classifier(&m, &s.x).unwrap(), s.label);
        }
    }

    #[test]
    fn loss_is_non_increasing_and_probabilities_are_a_simplex() {
        let data = two_blobs();
        let m = fit_classifier(&data, &["a".into(), "b".into()], &TrainConfig::default()).unwrap();
        for w in m.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-3);
        }
        assert!(m.loss_history.last() <= m.loss_history.first());
        for s in &data {
            let p = m.probabilities(&s.x).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn divergence_names_the_epoch() {
        let data = vec![sample(&[0.0], "a"), sample(&[1.0], "b"), sample(&[2.0], "a"), sample(&[2.0], "b")];
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            epochs: 50,
            ..TrainConfig::default()
        };
        let err = fit_classifier(&data, &["a".into(), "b".into()], &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn unknown_label_and_dimension_errors() {
        let data = vec![sample(&[1.0], "z")];
        assert!(fit_classifier(&data, &["a".into()], &TrainConfig::default()).is_err());
        let m = fit_classifier(&two_blobs(), &["a".into(), "b".into()], &TrainConfig::default()).unwrap();
        assert!(predict_classifier(&m, &[1.0]).is_err());
    }

    #[test]
    fn duplicated_data_gives_same_decision_function() {
        let data = two_blobs();
        let doubled: Vec<LabeledSample> = data.iter().chain(&data).cloned().collect();
        let classes = [ClassId::from("a"), ClassId::from("b")];
        let a = fit_classifier(&data, &classes, &TrainConfig::default()).unwrap();
        let b = fit_classifier(&doubled, &classes, &TrainConfig::default()).unwrap();
        for i in -10..=10 {
            for j in -10..=10 {
                let x = [f64::from(i) * 0.4, f64::from(j) * 0.2];
                let (pa, pb) = (a.probabilities(&x).unwrap(), b.probabilities(&x).unwrap());
                assert!(pa.iter().zip(&pb).all(|(u, v)| (u - v).abs() <= 1e-6));
            }
        }
    }

    #[test]
    fn forced_logits_and_shift_invariance() {
        let mut m = Classifier {
            classes: vec!["a".into(), "b".into(), "c".into()],
            shift: vec![0.0],
            scale: vec![1.0],
            params: SoftmaxParams::zeros(3, 1),
            loss_history: vec![],
        };
        m.params.bias = vec![1.0, 0.0, 0.0];
        assert_eq!(predict_classifier(&m, &[0.5]).unwrap(), ClassId::from("a"));
        m.params.bias.iter_mut().for_each(|b| *b += 7.5);
        assert_eq!(predict_classifier(&m, &[0.5]).unwrap(), ClassId::from("a"));
        m.params.bias = vec![0.0, 2.0, 2.0];
        assert_eq!(predict_classifier(&m, &[0.0]).unwrap(), ClassId::from("b"));
    }

    #[test]
    fn predict_matches_explicit_max_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut params = SoftmaxParams::zeros(5, 3);
        params.weights.data.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        params.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let m = Classifier {
            classes: (0..5).map(|i| ClassId::new(format!("k{i}"))).collect(),
            shift: vec![0.0; 3],
            scale: vec![1.0; 3],
            params,
            loss_history: vec![],
        };
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut best = (f64::NEG_INFINITY, 0);
            for k in 0..5 {
                let l: f64 = (0..3).map(|d| m.params.weights.get(k, d) * x[d]).sum::<f64>() + m.params.bias[k];
                if l > best.0 {
                    best = (l, k);
                }
            }
            assert_eq!(predict_classifier(&m, &x).unwrap(), m.classes[best.1]);
        }
    }

    #[test]
    fn minibatch_training_is_seeded() {
        let data = two_blobs();
        let cfg = TrainConfig {
            batch_size: Some(8),
            seed: 5,
            ..TrainConfig::default()
        };
        let classes = [ClassId::from("a"), ClassId::from("b")];
        let a = fit_classifier(&data, &classes, &cfg).unwrap();
        let b = fit_classifier(&data, &classes, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
