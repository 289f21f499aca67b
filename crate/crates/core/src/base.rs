//! Fit-and-predict runners for the two base model families, shared by the
//! transductive loop and the analysis harness.

use serde::{Deserialize, Serialize};

use crate::data::{ClassId, LabeledSample, PseudoLabelSet, SemanticTable};
use crate::error::{Result, StageExt};
use crate::hars::{synthesize_classes, SynthSet};
use crate::models::{classify_embedding_batch, fit_classifier, fit_embedding, fit_generator, BaseKind, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseParams {
    /// Ridge penalty of the embedding or generator regression.
    pub ridge: f64,
    /// Generated samples per candidate class (generative base only).
    pub n_unseen: usize,
    pub classifier: TrainConfig,
}

impl Default for BaseParams {
    fn default() -> Self {
        BaseParams {
            ridge: 1.0,
            n_unseen: 300,
            classifier: TrainConfig::default(),
        }
    }
}

/// Per-class generated sample counts for a classifier training set.
pub type ClassCounts = Vec<(ClassId, usize)>;

/// Fits a generator on `train`, draws `counts` samples, trains the softmax
/// classifier on them and labels `rows`.
pub fn generative_predict(
    train: &[LabeledSample],
    semantics: &SemanticTable,
    counts: &[(ClassId, usize)],
    rows: &[Vec<f64>],
    params: &BaseParams,
    seed: u64,
) -> Result<PseudoLabelSet> {
    let gen = fit_generator(train, &SynthSet::default(), semantics, params.ridge).stage("fit-generator")?;
    let synth = synthesize_classes(&gen, semantics, counts, seed).stage("synthesize-unseen")?;
    let classes: Vec<ClassId> = counts.iter().map(|(c, _)| c.clone()).collect();
    let config = TrainConfig {
        seed,
        ..params.classifier.clone()
    };
    let classifier = fit_classifier(&synth.labeled_samples(), &classes, &config).stage("fit-classifier")?;
    Ok(classifier.predict_batch(rows).stage("predict")?.into_iter().collect())
}

/// Trains `base` on `train` and labels `rows` with one of `candidates`.
pub fn fit_predict(
    base: BaseKind,
    train: &[LabeledSample],
    semantics: &SemanticTable,
    candidates: &[ClassId],
    rows: &[Vec<f64>],
    params: &BaseParams,
    seed: u64,
) -> Result<PseudoLabelSet> {
    match base {
        BaseKind::Embedding => {
            let model = fit_embedding(train, semantics, params.ridge).stage("fit-embedding")?;
            Ok(classify_embedding_batch(&model, rows, candidates, semantics)
                .stage("predict")?
                .into_iter()
                .collect())
        }
        BaseKind::Generative => {
            let mut sorted = candidates.to_vec();
            sorted.sort();
            sorted.dedup();
            let counts: ClassCounts = sorted.into_iter().map(|c| (c, params.n_unseen)).collect();
            generative_predict(train, semantics, &counts, rows, params, seed)
        }
    }
}
