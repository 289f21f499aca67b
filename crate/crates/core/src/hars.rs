//! Inductive hardness-based synthesizing.
//!
//! The pipeline identifies hard unseen classes by semantic similarity, then
//! injects them twice:
//!
//! 1. around every hard class it interpolates real samples of the class's
//!    most similar seen classes ("support" classes) and trains the generator
//!    on those virtual classes together with the real seen data;
//! 2. when synthesizing unseen-class training data for the classifier it
//!    draws `beta` times more samples for hard classes than for easy ones.
//!
//! With `alpha = 0` and `beta = 1` both injections vanish and the pipeline is
//! the plain generate-then-classify baseline.

use std::collections::BTreeSet;

use log::info;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::BaseParams;
use crate::data::{ClassId, ClassSplit, DatasetBundle, FeatureTable, LabeledSample, PseudoLabelSet, SemanticTable};
use crate::error::{Error, Result, StageExt};
use crate::eval::{evaluate, EvalReport};
use crate::hardness::{cosine_distance, identify_ss, HardnessReport};
use crate::models::generator::sample_with;
use crate::models::{fit_classifier, fit_generator, GenerativeModel, TrainConfig};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarsConfig {
    /// Number of hard classes.
    pub k: usize,
    /// Support seen classes per hard class.
    pub support: usize,
    /// Seen synthesizing scale.
    pub alpha: f64,
    /// Unseen synthesizing scale.
    pub beta: f64,
    /// Generated samples per easy unseen class.
    pub n_unseen: usize,
    pub seed: u64,
    pub ridge: f64,
    pub classifier: TrainConfig,
}

impl HarsConfig {
    pub fn new(k: usize) -> Self {
        let base = BaseParams::default();
        HarsConfig {
            k,
            support: 2,
            alpha: 2.0,
            beta: 2.0,
            n_unseen: base.n_unseen,
            seed: 0,
            ridge: base.ridge,
            classifier: base.classifier,
        }
    }

    pub fn validate(&self, split: &ClassSplit) -> Result<()> {
        if self.k == 0 || self.k > split.unseen_count() {
            return Err(Error::invalid("K", format!("must be in 1..={}", split.unseen_count())));
        }
        if self.support == 0 {
            return Err(Error::invalid("S", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", "must be finite and non-negative"));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", "must be finite and at least 1"));
        }
        if self.n_unseen == 0 {
            return Err(Error::invalid("N_u", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthTag {
    HardSeenInterp,
    UnseenGen,
}

/// Where a synthesized row came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    /// `x = gamma * x_first + (1 - gamma) * x_second`, likewise for semantics.
    HardSeenInterp {
        hard_class: ClassId,
        first_class: ClassId,
        first_row: usize,
        second_class: ClassId,
        second_row: usize,
        gamma: f64,
    },
    UnseenGen { class: ClassId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRow {
    pub visual: Vec<f64>,
    pub semantic: Vec<f64>,
    pub provenance: Provenance,
}

impl SynthRow {
    pub fn tag(&self) -> SynthTag {
        match self.provenance {
            Provenance::HardSeenInterp { .. } => SynthTag::HardSeenInterp,
            Provenance::UnseenGen { .. } => SynthTag::UnseenGen,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthSet {
    rows: Vec<SynthRow>,
}

impl SynthSet {
    pub fn new(rows: Vec<SynthRow>) -> Self {
        SynthSet { rows }
    }

    pub fn rows(&self) -> &[SynthRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Generated rows as labeled classifier training data. Interpolated rows
    /// have no class and are skipped.
    pub fn labeled_samples(&self) -> Vec<LabeledSample> {
        self.rows
            .iter()
            .filter_map(|r| match &r.provenance {
                Provenance::UnseenGen { class } => Some(LabeledSample {
                    x: r.visual.clone(),
                    label: class.clone(),
                }),
                Provenance::HardSeenInterp { .. } => None,
            })
            .collect()
    }
}

/// Rounds half away from zero.
pub fn scaled_count(scale: f64, n: usize) -> usize {
    (scale * n as f64).round() as usize
}

/// The `count` seen classes closest to `hard_class` in cosine distance.
pub fn support_seen_classes(
    hard_class: &ClassId,
    semantics: &SemanticTable,
    split: &ClassSplit,
    count: usize,
) -> Result<Vec<ClassId>> {
    if count > split.seen().len() {
        return Err(Error::invalid(
            "S",
            format!("{count} support classes requested but only {} seen classes exist", split.seen().len()),
        ));
    }
    let target = semantics.vector(hard_class)?;
    let mut ranked = split
        .seen()
        .iter()
        .map(|s| Ok((cosine_distance(target, semantics.vector(s)?)?, s)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    Ok(ranked.into_iter().take(count).map(|(_, s)| s.clone()).collect())
}

fn open_unit(rng: &mut rng::StreamRng) -> f64 {
    loop {
        let g: f64 = rng.random();
        if g > 0.0 {
            return g;
        }
    }
}

/// Interpolated "hard class" rows around each hard unseen class.
///
/// For each hard class, `round(alpha * N_s)` rows are drawn, `N_s` being the
/// number of training samples in its support classes. Each row picks one
/// sample uniformly from the pooled support samples and a second one from the
/// support samples of the other support classes, and mixes both the features
/// and the class semantic vectors with a single `gamma ~ U(0, 1)`.
pub fn synthesize_hard_seen(
    train: &FeatureTable,
    semantics: &SemanticTable,
    split: &ClassSplit,
    hard: &[ClassId],
    alpha: f64,
    support: usize,
    seed: u64,
) -> Result<SynthSet> {
    let by_class = train.rows_by_class();
    let per_class: Vec<Vec<SynthRow>> = hard
        .par_iter()
        .enumerate()
        .map(|(h, hard_class)| {
            let supports = support_seen_classes(hard_class, semantics, split, support)?;
            let pools: Vec<(&ClassId, &[usize])> = supports
                .iter()
                .map(|s| match by_class.get(s) {
                    Some(rows) => Ok((s, rows.as_slice())),
                    None => Err(Error::Validation(format!(
                        "support class {s} of hard class {hard_class} has no training samples"
                    ))),
                })
                .collect::<Result<_>>()?;
            let n_support: usize = pools.iter().map(|(_, r)| r.len()).sum();
            let n_rows = scaled_count(alpha, n_support);
            if n_rows > 0 && pools.len() < 2 {
                return Err(Error::invalid("S", "interpolation needs at least two support classes"));
            }
            let mut rng = rng::indexed_substream(seed, rng::HARD_SEEN, h as u64);
            let mut rows = Vec::with_capacity(n_rows);
            for _ in 0..n_rows {
                let (ci, ri) = pick(&pools, None, n_support, &mut rng);
                let (cj, rj) = pick(&pools, Some(ci), n_support - pools[ci].1.len(), &mut rng);
                let gamma = open_unit(&mut rng);
                rows.push(interpolate(
                    hard_class,
                    (pools[ci].0, ri, train.row(ri), semantics.vector(pools[ci].0)?),
                    (pools[cj].0, rj, train.row(rj), semantics.vector(pools[cj].0)?),
                    gamma,
                ));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(SynthSet::new(per_class.into_iter().flatten().collect()))
}

/// Uniform draw over the pooled rows, optionally excluding one pool.
fn pick(pools: &[(&ClassId, &[usize])], skip: Option<usize>, total: usize, rng: &mut rng::StreamRng) -> (usize, usize) {
    let mut at = rng.random_range(0..total);
    for (i, (_, rows)) in pools.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if at < rows.len() {
            return (i, rows[at]);
        }
        at -= rows.len();
    }
    unreachable!("draw exceeds pooled row count")
}

fn interpolate(
    hard_class: &ClassId,
    first: (&ClassId, usize, &[f32], &[f64]),
    second: (&ClassId, usize, &[f32], &[f64]),
    gamma: f64,
) -> SynthRow {
    let mix = |a: f64, b: f64| gamma * a + (1.0 - gamma) * b;
    SynthRow {
        visual: first.2.iter().zip(second.2).map(|(&a, &b)| mix(a.into(), b.into())).collect(),
        semantic: first.3.iter().zip(second.3).map(|(&a, &b)| mix(a, b)).collect(),
        provenance: Provenance::HardSeenInterp {
            hard_class: hard_class.clone(),
            first_class: first.0.clone(),
            first_row: first.1,
            second_class: second.0.clone(),
            second_row: second.1,
            gamma,
        },
    }
}

/// Samples `count` rows for each `(class, count)`; the `i`-th entry draws from
/// its own substream `i`, so the output does not depend on scheduling.
pub fn synthesize_classes(
    gen: &GenerativeModel,
    semantics: &SemanticTable,
    counts: &[(ClassId, usize)],
    seed: u64,
) -> Result<SynthSet> {
    let per_class: Vec<Vec<SynthRow>> = counts
        .par_iter()
        .enumerate()
        .map(|(i, (class, n))| {
            let e = semantics.vector(class)?;
            let mut rng = rng::indexed_substream(seed, rng::UNSEEN_SYNTH, i as u64);
            Ok(sample_with(gen, e, *n, &mut rng)?
                .into_iter()
                .map(|visual| SynthRow {
                    visual,
                    semantic: e.to_vec(),
                    provenance: Provenance::UnseenGen { class: class.clone() },
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(SynthSet::new(per_class.into_iter().flatten().collect()))
}

/// Per-class sample counts: `N_u` for easy classes, `round(beta * N_u)` for
/// hard ones, in sorted unseen-class order.
pub fn unseen_counts(split: &ClassSplit, hard: &[ClassId], n_unseen: usize, beta: f64) -> Vec<(ClassId, usize)> {
    let hard: BTreeSet<&ClassId> = hard.iter().collect();
    split
        .unseen()
        .iter()
        .map(|c| {
            let n = if hard.contains(c) { scaled_count(beta, n_unseen) } else { n_unseen };
            (c.clone(), n)
        })
        .collect()
}

pub fn synthesize_unseen(
    gen: &GenerativeModel,
    semantics: &SemanticTable,
    split: &ClassSplit,
    hard: &[ClassId],
    n_unseen: usize,
    beta: f64,
    seed: u64,
) -> Result<SynthSet> {
    if n_unseen == 0 {
        return Err(Error::invalid("N_u", "must be at least 1"));
    }
    synthesize_classes(gen, semantics, &unseen_counts(split, hard, n_unseen, beta), seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarsOutput {
    pub predictions: PseudoLabelSet,
    pub hardness: HardnessReport,
    pub seen_synth_rows: usize,
    pub unseen_synth_rows: usize,
    /// Present when the unseen test rows carry ground-truth labels.
    pub report: Option<EvalReport>,
}

fn unseen_rows(bundle: &DatasetBundle) -> Vec<Vec<f64>> {
    (0..bundle.test_unseen.len()).map(|i| bundle.test_unseen.row_f64(i)).collect()
}

fn labeled_report(bundle: &DatasetBundle, predictions: &PseudoLabelSet) -> Result<Option<EvalReport>> {
    if bundle.test_unseen.is_empty() || !bundle.test_unseen.is_fully_labeled() {
        return Ok(None);
    }
    evaluate(predictions, bundle.test_unseen.labels(), &bundle.split).map(Some)
}

fn classifier_config(config: &HarsConfig) -> TrainConfig {
    TrainConfig {
        seed: config.seed,
        ..config.classifier.clone()
    }
}

/// Runs the full inductive pipeline on `bundle`.
pub fn run_hars(bundle: &DatasetBundle, config: &HarsConfig) -> Result<HarsOutput> {
    config.validate(&bundle.split).stage("configure")?;
    let split = &bundle.split;
    let hardness = identify_ss(&bundle.semantics, split, config.k).stage("identify")?;
    info!("hard classes: {:?}", hardness.hard);

    let seen_synth = synthesize_hard_seen(
        &bundle.train_seen,
        &bundle.semantics,
        split,
        &hardness.hard,
        config.alpha,
        config.support,
        config.seed,
    )
    .stage("synthesize-seen")?;

    let gen = fit_generator(&bundle.train_seen.samples(), &seen_synth, &bundle.semantics, config.ridge)
        .stage("fit-generator")?;

    let unseen_synth = synthesize_unseen(
        &gen,
        &bundle.semantics,
        split,
        &hardness.hard,
        config.n_unseen,
        config.beta,
        config.seed,
    )
    .stage("synthesize-unseen")?;

    let unseen: Vec<ClassId> = split.unseen().iter().cloned().collect();
    let classifier = fit_classifier(&unseen_synth.labeled_samples(), &unseen, &classifier_config(config))
        .stage("fit-classifier")?;

    let predictions: PseudoLabelSet = classifier
        .predict_batch(&unseen_rows(bundle))
        .stage("predict")?
        .into_iter()
        .collect();
    let report = labeled_report(bundle, &predictions).stage("evaluate")?;
    Ok(HarsOutput {
        predictions,
        hardness,
        seen_synth_rows: seen_synth.len(),
        unseen_synth_rows: unseen_synth.len(),
        report,
    })
}

/// The plain generative pipeline: fit the generator on seen data only, draw
/// `N_u` samples for every unseen class, train the classifier, predict.
pub fn run_generative_baseline(bundle: &DatasetBundle, config: &HarsConfig) -> Result<(PseudoLabelSet, Option<EvalReport>)> {
    let gen = fit_generator(&bundle.train_seen.samples(), &SynthSet::default(), &bundle.semantics, config.ridge)
        .stage("fit-generator")?;
    let counts: Vec<(ClassId, usize)> = bundle
        .split
        .unseen()
        .iter()
        .map(|c| (c.clone(), config.n_unseen))
        .collect();
    let synth = synthesize_classes(&gen, &bundle.semantics, &counts, config.seed).stage("synthesize-unseen")?;
    let unseen: Vec<ClassId> = counts.into_iter().map(|(c, _)| c).collect();
    let classifier =
        fit_classifier(&synth.labeled_samples(), &unseen, &classifier_config(config)).stage("fit-classifier")?;
    let predictions: PseudoLabelSet = classifier
        .predict_batch(&unseen_rows(bundle))
        .stage("predict")?
        .into_iter()
        .collect();
    let report = labeled_report(bundle, &predictions).stage("evaluate")?;
    Ok((predictions, report))
}
