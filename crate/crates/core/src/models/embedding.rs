//! Linear semantic-to-visual embedding with nearest-prototype decisions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::{ridge_regression, Matrix};
use crate::data::{ClassId, LabeledSample, SemanticTable};
use crate::error::{Error, Result};

/// Maps a class's semantic vector to its visual prototype `W e + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub lambda: f64,
}

impl EmbeddingModel {
    pub fn prototype(&self, semantic: &[f64]) -> Vec<f64> {
        self.weights
            .mul_vec(semantic)
            .into_iter()
            .zip(&self.bias)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn visual_dim(&self) -> usize {
        self.weights.rows
    }
}

/// Closed-form ridge fit of visual features on the semantic vectors of their
/// labels. Pseudo-labeled rows enter exactly like labeled ones.
pub fn fit_embedding(train: &[LabeledSample], semantics: &SemanticTable, lambda: f64) -> Result<EmbeddingModel> {
    if train.is_empty() {
        return Err(Error::invalid("train", "cannot fit an embedding on an empty table"));
    }
    let inputs = train
        .iter()
        .map(|s| semantics.vector(&s.label))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<&[f64]> = train.iter().map(|s| s.x.as_slice()).collect();
    let fit = ridge_regression(&inputs, &targets, lambda)?;
    Ok(EmbeddingModel {
        weights: fit.weights,
        bias: fit.bias,
        lambda,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Prototypes of `candidates` in sorted class order.
pub fn candidate_prototypes(
    model: &EmbeddingModel,
    candidates: &[ClassId],
    semantics: &SemanticTable,
) -> Result<Vec<(ClassId, Vec<f64>)>> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidates", "candidate set is empty"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort();
    sorted.dedup();
    sorted
        .into_iter()
        .map(|c| {
            let p = model.prototype(semantics.vector(&c)?);
            Ok((c, p))
        })
        .collect()
}

fn nearest(x: &[f64], prototypes: &[(ClassId, Vec<f64>)]) -> ClassId {
    let mut best = &prototypes[0];
    let mut best_d = sq_dist(x, &best.1);
    for p in &prototypes[1..] {
        let d = sq_dist(x, &p.1);
        if d < best_d {
            best = p;
            best_d = d;
        }
    }
    best.0.clone()
}

/// Nearest mapped prototype among `candidates`; ties go to the smaller id.
pub fn classify_embedding(
    model: &EmbeddingModel,
    x: &[f64],
    candidates: &[ClassId],
    semantics: &SemanticTable,
) -> Result<ClassId> {
    if x.len() != model.visual_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.visual_dim(),
            got: x.len(),
        });
    }
    let prototypes = candidate_prototypes(model, candidates, semantics)?;
    Ok(nearest(x, &prototypes))
}

/// [`classify_embedding`] over many rows; output order follows input order.
pub fn classify_embedding_batch(
    model: &EmbeddingModel,
    rows: &[Vec<f64>],
    candidates: &[ClassId],
    semantics: &SemanticTable,
) -> Result<Vec<ClassId>> {
    let prototypes = candidate_prototypes(model, candidates, semantics)?;
    if let Some(bad) = rows.iter().find(|r| r.len() != model.visual_dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.visual_dim(),
            got: bad.len(),
        });
    }
    Ok(rows.par_iter().map(|x| nearest(x, &prototypes)).collect())
}
