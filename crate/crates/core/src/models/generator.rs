//! Conditional Gaussian feature generator: `x ~ N(A e + b, diag(var))`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::{ridge_regression, Matrix};
use crate::data::{LabeledSample, SemanticTable};
use crate::error::{Error, Result};
use crate::hars::SynthSet;
use crate::rng::StreamRng;

/// Lower bound on every per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub variance: Vec<f64>,
    pub lambda: f64,
}

impl GenerativeModel {
    pub fn mean(&self, semantic: &[f64]) -> Vec<f64> {
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

    pub fn semantic_dim(&self) -> usize {
        self.weights.cols
    }
}

/// A visual row paired with the semantic vector it is conditioned on.
#[derive(Clone, Copy, Debug)]
pub struct ConditionalRow<'a> {
    pub visual: &'a [f64],
    pub semantic: &'a [f64],
}

/// Fits the generator on labeled real rows plus synthesized rows, which carry
/// their own (interpolated) semantic vectors.
pub fn fit_generator(
    real: &[LabeledSample],
    synth: &SynthSet,
    semantics: &SemanticTable,
    lambda: f64,
) -> Result<GenerativeModel> {
    let mut rows = Vec::with_capacity(real.len() + synth.len());
    for s in real {
        rows.push(ConditionalRow {
            visual: &s.x,
            semantic: semantics.vector(&s.label)?,
        });
    }
    for r in synth.rows() {
        rows.push(ConditionalRow {
            visual: &r.visual,
            semantic: &r.semantic,
        });
    }
    fit_generator_rows(&rows, lambda)
}

/// Ridge fit of the conditional mean; the shared diagonal variance is the
/// pooled within-group variance, where rows sharing a bitwise-identical
/// semantic vector form a group.
pub fn fit_generator_rows(rows: &[ConditionalRow<'_>], lambda: f64) -> Result<GenerativeModel> {
    if rows.is_empty() {
        return Err(Error::invalid("train", "cannot fit a generator on no rows"));
    }
    let s_dim = rows[0].semantic.len();
    let v_dim = rows[0].visual.len();
    if let Some(r) = rows.iter().find(|r| r.semantic.len() != s_dim || r.visual.len() != v_dim) {
        return Err(Error::DimensionMismatch {
            expected: v_dim,
            got: r.visual.len(),
        });
    }
    let inputs: Vec<&[f64]> = rows.iter().map(|r| r.semantic).collect();
    let targets: Vec<&[f64]> = rows.iter().map(|r| r.visual).collect();
    let fit = ridge_regression(&inputs, &targets, lambda)?;

    let mut groups: BTreeMap<Vec<u64>, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let key = r.semantic.iter().map(|x| x.to_bits()).collect();
        let (n, sum, sumsq) = groups
            .entry(key)
            .or_insert_with(|| (0, vec![0.0; v_dim], vec![0.0; v_dim]));
        *n += 1;
        for (d, &x) in r.visual.iter().enumerate() {
            sum[d] += x;
            sumsq[d] += x * x;
        }
    }
    let dof = rows.len() - groups.len();
    let mut variance = vec![0.0; v_dim];
    if dof > 0 {
        for (n, sum, sumsq) in groups.values() {
            for d in 0..v_dim {
                variance[d] += (sumsq[d] - sum[d] * sum[d] / *n as f64).max(0.0);
            }
        }
        variance.iter_mut().for_each(|v| *v /= dof as f64);
    }
    variance.iter_mut().for_each(|v| *v = v.max(VARIANCE_FLOOR));

    Ok(GenerativeModel {
        weights: fit.weights,
        bias: fit.bias,
        variance,
        lambda,
    })
}

/// Draws `n` samples conditioned on `semantic`.
pub fn sample_generator(model: &GenerativeModel, semantic: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = StreamRng::seed_from_u64(seed);
    sample_with(model, semantic, n, &mut rng)
}

pub(crate) fn sample_with(
    model: &GenerativeModel,
    semantic: &[f64],
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<f64>>> {
    if semantic.len() != model.semantic_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.semantic_dim(),
            got: semantic.len(),
        });
    }
    let mean = model.mean(semantic);
    let sd: Vec<f64> = model.variance.iter().map(|v| v.sqrt()).collect();
    Ok((0..n)
        .map(|_| {
            mean.iter()
                .zip(&sd)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect()
        })
        .collect())
}
