//! Evaluation protocol and diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::{fit_predict, generative_predict, BaseParams};
use crate::data::{ClassId, ClassSplit, DatasetBundle, LabeledSample, PseudoLabelSet, SemanticTable};
use crate::error::{Error, Result};
use crate::hardness::cosine_similarity;
use crate::hars::scaled_count;
use crate::models::BaseKind;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_accuracy: BTreeMap<ClassId, f64>,
    pub acc_u: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h: Option<f64>,
    /// Row and column order of `confusion`.
    pub classes: Vec<ClassId>,
    pub confusion: Vec<Vec<u64>>,
    /// Keyed by `k`; filled by [`EvalReport::with_diagnostics`].
    #[serde(default)]
    pub apr: BTreeMap<String, f64>,
    #[serde(default)]
    pub amr: BTreeMap<String, f64>,
}

/// `2ab / (a + b)`, zero when either side is zero.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else if a == b {
        a
    } else {
        2.0 * a * b / (a + b)
    }
}

fn check_aligned(preds: &PseudoLabelSet, truths: &[ClassId], split: &ClassSplit) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: preds.len(),
        });
    }
    for (row, (p, t)) in preds.iter().zip(truths).enumerate() {
        if t.is_unlabeled() {
            return Err(Error::Validation(format!("row {row} has no ground-truth label")));
        }
        for c in [p, t] {
            if !split.is_seen(c) && !split.is_unseen(c) {
                return Err(Error::UnknownClass(format!("{c} (row {row})")));
            }
        }
    }
    Ok(())
}

/// Class order of the confusion matrix: unseen classes, then seen classes if
/// any prediction or truth is a seen class.
fn report_classes(preds: &PseudoLabelSet, truths: &[ClassId], split: &ClassSplit) -> Vec<ClassId> {
    let any_seen = preds.iter().chain(truths).any(|c| split.is_seen(c));
    if any_seen {
        split.all_classes()
    } else {
        split.unseen().iter().cloned().collect()
    }
}

fn mean_over(per_class: &BTreeMap<ClassId, f64>, keep: impl Fn(&ClassId) -> bool) -> Option<f64> {
    let vals: Vec<f64> = per_class.iter().filter(|(c, _)| keep(c)).map(|(_, &a)| a).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn evaluate(preds: &PseudoLabelSet, truths: &[ClassId], split: &ClassSplit) -> Result<EvalReport> {
    check_aligned(preds, truths, split)?;
    let classes = report_classes(preds, truths, split);
    let confusion = tally(preds, truths, &classes, (0..truths.len()).collect())?;

    let mut per_class_accuracy = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        let total: u64 = confusion[i].iter().sum();
        if total == 0 {
            if split.is_unseen(c) {
                warn!("class {c} has no evaluated samples and is excluded from the mean");
            }
            continue;
        }
        per_class_accuracy.insert(c.clone(), confusion[i][i] as f64 / total as f64);
    }
    let acc_u = mean_over(&per_class_accuracy, |c| split.is_unseen(c))
        .ok_or_else(|| Error::Undefined("no unseen class has evaluated samples".into()))?;
    let acc_s = mean_over(&per_class_accuracy, |c| split.is_seen(c));
    Ok(EvalReport {
        per_class_accuracy,
        acc_u,
        acc_s,
        h: acc_s.map(|s| harmonic_mean(acc_u, s)),
        classes,
        confusion,
        apr: BTreeMap::new(),
        amr: BTreeMap::new(),
    })
}

impl EvalReport {
    /// Adds APR and AMR over the unseen block for every `k` where they are
    /// defined.
    pub fn with_diagnostics(mut self, semantics: &SemanticTable, split: &ClassSplit, ks: &[usize]) -> Result<Self> {
        let unseen: Vec<ClassId> = split.unseen().iter().cloned().collect();
        let block = ConfusionMatrix {
            classes: self.classes.clone(),
            counts: self.confusion.clone(),
        }
        .restrict(&unseen)?;
        let sim = similarity_matrix(semantics, &unseen)?;
        for &k in ks {
            match apr(&block.counts, &sim, k) {
                Ok(v) => {
                    self.apr.insert(k.to_string(), v);
                }
                Err(e) => warn!("APR at k={k} not reported: {e}"),
            }
            match amr(&block.counts, &sim, k) {
                Ok(v) => {
                    self.amr.insert(k.to_string(), v);
                }
                Err(e) => warn!("AMR at k={k} not reported: {e}"),
            }
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassId>,
    /// Rows are true classes, columns predictions.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// The sub-matrix over `keep`, in the given order.
    pub fn restrict(&self, keep: &[ClassId]) -> Result<ConfusionMatrix> {
        let pos: BTreeMap<&ClassId, usize> = self.classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let idx = keep
            .iter()
            .map(|c| pos.get(c).copied().ok_or_else(|| Error::UnknownClass(c.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConfusionMatrix {
            classes: keep.to_vec(),
            counts: idx.iter().map(|&r| idx.iter().map(|&c| self.counts[r][c]).collect()).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in &self.classes {
            out.push(',');
            out.push_str(c.as_str());
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c.as_str());
            for n in row {
                out.push(',');
                out.push_str(&n.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn tally(preds: &PseudoLabelSet, truths: &[ClassId], classes: &[ClassId], rows: Vec<usize>) -> Result<Vec<Vec<u64>>> {
    let pos: BTreeMap<&ClassId, usize> = classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for r in rows {
        let t = pos.get(&truths[r]).ok_or_else(|| Error::UnknownClass(truths[r].to_string()))?;
        let p = pos.get(preds.get(r)).ok_or_else(|| Error::UnknownClass(preds.get(r).to_string()))?;
        counts[*t][*p] += 1;
    }
    Ok(counts)
}

/// Confusion counts, optionally capped to `cap` rows per true class. A class
/// with at least `cap` rows is subsampled without replacement, a smaller one
/// with replacement.
pub fn confusion_matrix(
    preds: &PseudoLabelSet,
    truths: &[ClassId],
    split: &ClassSplit,
    cap: Option<usize>,
    seed: u64,
) -> Result<ConfusionMatrix> {
    check_aligned(preds, truths, split)?;
    let classes = report_classes(preds, truths, split);
    let rows = match cap {
        None => (0..truths.len()).collect(),
        Some(cap) => {
            let mut by_class: BTreeMap<&ClassId, Vec<usize>> = BTreeMap::new();
            for (i, t) in truths.iter().enumerate() {
                by_class.entry(t).or_default().push(i);
            }
            let mut rows = Vec::new();
            for (ci, c) in classes.iter().enumerate() {
                let Some(pool) = by_class.get(c) else { continue };
                let mut rng = rng::indexed_substream(seed, rng::SUBSAMPLE, ci as u64);
                if pool.len() >= cap {
                    rows.extend(index::sample(&mut rng, pool.len(), cap).into_iter().map(|j| pool[j]));
                } else {
                    rows.extend((0..cap).map(|_| pool[rng.random_range(0..pool.len())]));
                }
            }
            rows
        }
    };
    Ok(ConfusionMatrix {
        counts: tally(preds, truths, &classes, rows)?,
        classes,
    })
}

/// Pairwise cosine similarity of the given classes' semantic vectors.
pub fn similarity_matrix(semantics: &SemanticTable, classes: &[ClassId]) -> Result<Vec<Vec<f64>>> {
    let vecs = classes.iter().map(|c| semantics.vector(c)).collect::<Result<Vec<_>>>()?;
    vecs.iter()
        .map(|a| vecs.iter().map(|b| cosine_similarity(a, b)).collect())
        .collect()
}

fn check_square(confusion: &[Vec<u64>], similarity: &[Vec<f64>], k: usize) -> Result<usize> {
    let c = confusion.len();
    if similarity.len() != c || confusion.iter().any(|r| r.len() != c) || similarity.iter().any(|r| r.len() != c) {
        return Err(Error::invalid("confusion", "confusion and similarity must be square and of equal size"));
    }
    if c < 2 || k == 0 || k > c - 1 {
        return Err(Error::invalid("k", format!("must be in 1..={}", c.saturating_sub(1))));
    }
    Ok(c)
}

/// Indices of the `k` other classes ranked first by `key` (descending), ties
/// to the smaller index.
fn top_k_others<T: PartialOrd + Copy>(row: &[T], own: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..row.len()).filter(|&j| j != own).collect();
    others.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    others.truncate(k);
    others
}

/// Per-class recall of the `k` most frequent confusion targets by the `k`
/// most similar classes. Classes with no misclassifications are `None`.
pub fn apr_per_class(confusion: &[Vec<u64>], similarity: &[Vec<f64>], k: usize) -> Result<Vec<Option<f64>>> {
    let c = check_square(confusion, similarity, k)?;
    Ok((0..c)
        .map(|i| {
            let missed: u64 = (0..c).filter(|&j| j != i).map(|j| confusion[i][j]).sum();
            if missed == 0 {
                return None;
            }
            let truth: BTreeSet<usize> = top_k_others(&confusion[i], i, k).into_iter().collect();
            let hits = top_k_others(&similarity[i], i, k).into_iter().filter(|j| truth.contains(j)).count();
            Some(hits as f64 / k as f64)
        })
        .collect())
}

fn mean_defined(vals: &[Option<f64>], what: &str) -> Result<f64> {
    let defined: Vec<f64> = vals.iter().flatten().copied().collect();
    let skipped = vals.len() - defined.len();
    if defined.is_empty() {
        return Err(Error::Undefined(format!("{what} undefined: every class is perfectly classified")));
    }
    if skipped > 0 {
        warn!("{what}: {skipped} class(es) without misclassifications skipped");
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

pub fn apr(confusion: &[Vec<u64>], similarity: &[Vec<f64>], k: usize) -> Result<f64> {
    mean_defined(&apr_per_class(confusion, similarity, k)?, "APR")
}

/// Per-class share of misclassifications that land in the `k` most similar
/// classes.
pub fn amr_per_class(confusion: &[Vec<u64>], similarity: &[Vec<f64>], k: usize) -> Result<Vec<Option<f64>>> {
    let c = check_square(confusion, similarity, k)?;
    Ok((0..c)
        .map(|i| {
            let missed: u64 = (0..c).filter(|&j| j != i).map(|j| confusion[i][j]).sum();
            if missed == 0 {
                return None;
            }
            let near: u64 = top_k_others(&similarity[i], i, k).into_iter().map(|j| confusion[i][j]).sum();
            Some(near as f64 / missed as f64)
        })
        .collect())
}

pub fn amr(confusion: &[Vec<u64>], similarity: &[Vec<f64>], k: usize) -> Result<f64> {
    mean_defined(&amr_per_class(confusion, similarity, k)?, "AMR")
}

/// Ground-truth hard/easy split: the lower half of unseen classes by accuracy
/// is hard, an odd middle class included.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardEasyOracle {
    pub hard: BTreeSet<ClassId>,
    pub easy: BTreeSet<ClassId>,
}

impl HardEasyOracle {
    pub fn from_report(report: &EvalReport, split: &ClassSplit) -> Result<Self> {
        let mut ranked: Vec<(&ClassId, f64)> = split
            .unseen()
            .iter()
            .map(|c| {
                report
                    .per_class_accuracy
                    .get(c)
                    .map(|&a| (c, a))
                    .ok_or_else(|| Error::Undefined(format!("no accuracy for unseen class {c}")))
            })
            .collect::<Result<_>>()?;
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        let n_hard = ranked.len().div_ceil(2);
        Ok(HardEasyOracle {
            hard: ranked[..n_hard].iter().map(|(c, _)| (*c).clone()).collect(),
            easy: ranked[n_hard..].iter().map(|(c, _)| (*c).clone()).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationQuality {
    pub recall_of_true_hard: f64,
    /// `None` when the predicted group is empty.
    pub apa_hard: Option<f64>,
    pub apa_easy: Option<f64>,
    pub app_hard: Option<f64>,
    pub app_easy: Option<f64>,
    /// Classes with no predicted positives, left out of APP.
    pub app_skipped: Vec<ClassId>,
}

pub fn identification_quality(predicted_hard: &[ClassId], report: &EvalReport, split: &ClassSplit) -> Result<IdentificationQuality> {
    let oracle = HardEasyOracle::from_report(report, split)?;
    let predicted: BTreeSet<&ClassId> = predicted_hard.iter().collect();
    if let Some(c) = predicted.iter().find(|c| !split.is_unseen(c)) {
        return Err(Error::UnknownClass(format!("{c} is not an unseen class")));
    }
    let easy: Vec<&ClassId> = split.unseen().iter().filter(|c| !predicted.contains(c)).collect();
    let hits = oracle.hard.iter().filter(|c| predicted.contains(c)).count();

    let pos: BTreeMap<&ClassId, usize> = report.classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut skipped = Vec::new();
    let mut precision = BTreeMap::new();
    for c in split.unseen() {
        let Some(&j) = pos.get(c) else { continue };
        let column: u64 = report.confusion.iter().map(|r| r[j]).sum();
        if column == 0 {
            skipped.push(c.clone());
        } else {
            precision.insert(c, report.confusion[j][j] as f64 / column as f64);
        }
    }
    let group_mean = |group: &mut dyn Iterator<Item = &ClassId>, values: &dyn Fn(&ClassId) -> Option<f64>| {
        let v: Vec<f64> = group.filter_map(values).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let acc = |c: &ClassId| report.per_class_accuracy.get(c).copied();
    let prec = |c: &ClassId| precision.get(c).copied();
    Ok(IdentificationQuality {
        recall_of_true_hard: hits as f64 / oracle.hard.len() as f64,
        apa_hard: group_mean(&mut predicted.iter().copied(), &acc),
        apa_easy: group_mean(&mut easy.iter().copied(), &acc),
        app_hard: group_mean(&mut predicted.iter().copied(), &prec),
        app_easy: group_mean(&mut easy.iter().copied(), &prec),
        app_skipped: skipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupSpec {
    EasyWeighted,
    HardWeighted,
    Uniform,
}

impl GroupSpec {
    pub const ALL: [GroupSpec; 3] = [GroupSpec::EasyWeighted, GroupSpec::HardWeighted, GroupSpec::Uniform];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Inductive,
    Transductive,
}

/// Per-class sample counts of one analysis group. Inductive groups give
/// `2n`/`n` per easy/hard class (or the reverse) against `1.5n` everywhere;
/// transductive groups give `n` to one side only against `n/2` everywhere.
pub fn group_counts(oracle: &HardEasyOracle, setting: Setting, group: GroupSpec, n: usize) -> Vec<(ClassId, usize)> {
    let (easy, hard, uniform) = match setting {
        Setting::Inductive => (2 * n, n, scaled_count(1.5, n)),
        Setting::Transductive => (n, n, scaled_count(0.5, n)),
    };
    let mut out: Vec<(ClassId, usize)> = oracle
        .hard
        .iter()
        .map(|c| {
            let m = match (setting, group) {
                (_, GroupSpec::Uniform) => uniform,
                (Setting::Inductive, GroupSpec::EasyWeighted) => hard,
                (Setting::Inductive, GroupSpec::HardWeighted) => easy,
                (Setting::Transductive, GroupSpec::EasyWeighted) => 0,
                (Setting::Transductive, GroupSpec::HardWeighted) => hard,
            };
            (c.clone(), m)
        })
        .chain(oracle.easy.iter().map(|c| {
            let m = match (setting, group) {
                (_, GroupSpec::Uniform) => uniform,
                (Setting::Inductive, GroupSpec::EasyWeighted) => easy,
                (Setting::Inductive, GroupSpec::HardWeighted) => hard,
                (Setting::Transductive, GroupSpec::EasyWeighted) => easy,
                (Setting::Transductive, GroupSpec::HardWeighted) => 0,
            };
            (c.clone(), m)
        }))
        .collect();
    out.sort();
    out
}

fn unseen_rows(bundle: &DatasetBundle) -> Vec<Vec<f64>> {
    (0..bundle.test_unseen.len()).map(|i| bundle.test_unseen.row_f64(i)).collect()
}

fn require_labels(bundle: &DatasetBundle) -> Result<()> {
    if bundle.test_unseen.is_empty() || !bundle.test_unseen.is_fully_labeled() {
        return Err(Error::Validation("analysis needs labeled unseen test rows".into()));
    }
    Ok(())
}

/// Runs the base model once and splits the unseen classes by its accuracy.
pub fn oracle_split(bundle: &DatasetBundle, base: BaseKind, params: &BaseParams, seed: u64) -> Result<(HardEasyOracle, EvalReport)> {
    require_labels(bundle)?;
    let unseen: Vec<ClassId> = bundle.split.unseen().iter().cloned().collect();
    let preds = fit_predict(base, &bundle.train_seen.samples(), &bundle.semantics, &unseen, &unseen_rows(bundle), params, seed)?;
    let report = evaluate(&preds, bundle.test_unseen.labels(), &bundle.split)?;
    Ok((HardEasyOracle::from_report(&report, &bundle.split)?, report))
}

/// Trains one analysis group and evaluates it on the unseen test rows.
///
/// Inductive groups change how many generated samples each unseen class gets
/// in the classifier's training set. Transductive groups add real labeled
/// unseen rows, drawn with replacement when a class has fewer than asked,
/// to the seen training data before refitting the base model.
pub fn contrastive_analysis(
    bundle: &DatasetBundle,
    oracle: &HardEasyOracle,
    setting: Setting,
    base: BaseKind,
    group: GroupSpec,
    n: usize,
    params: &BaseParams,
    seed: u64,
) -> Result<EvalReport> {
    require_labels(bundle)?;
    let counts = group_counts(oracle, setting, group, n);
    if counts.iter().all(|(_, m)| *m == 0) {
        return Err(Error::invalid("N", "every group is empty; nothing to train on"));
    }
    let rows = unseen_rows(bundle);
    let train = bundle.train_seen.samples();
    let preds = match setting {
        Setting::Inductive => {
            if base != BaseKind::Generative {
                return Err(Error::invalid("base_model", "inductive analysis needs the generative base"));
            }
            generative_predict(&train, &bundle.semantics, &counts, &rows, params, seed)?
        }
        Setting::Transductive => {
            let by_class = bundle.test_unseen.rows_by_class();
            let mut train = train;
            for (ci, (c, m)) in counts.iter().enumerate() {
                if *m == 0 {
                    continue;
                }
                let pool = by_class.get(c).map(Vec::as_slice).unwrap_or(&[]);
                if pool.is_empty() {
                    warn!("class {c} has no test rows to add");
                    continue;
                }
                let mut rng = rng::indexed_substream(seed, rng::SUBSAMPLE, ci as u64);
                let picked: Vec<usize> = if pool.len() >= *m {
                    index::sample(&mut rng, pool.len(), *m).into_iter().map(|j| pool[j]).collect()
                } else {
                    warn!("class {c} has {} rows, fewer than {m}; sampling with replacement", pool.len());
                    (0..*m).map(|_| pool[rng.random_range(0..pool.len())]).collect()
                };
                train.extend(picked.into_iter().map(|r| LabeledSample {
                    x: rows[r].clone(),
                    label: c.clone(),
                }));
            }
            let unseen: Vec<ClassId> = bundle.split.unseen().iter().cloned().collect();
            fit_predict(base, &train, &bundle.semantics, &unseen, &rows, params, seed)?
        }
    };
    evaluate(&preds, bundle.test_unseen.labels(), &bundle.split)
}
