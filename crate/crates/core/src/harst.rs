//! Transductive hardness-based selecting.
//!
//! Self-training over the unlabeled unseen rows: predict, find the classes the
//! model predicts least often (the hard ones), add an equal number of their
//! pseudo-labeled rows to the training set, refit from scratch, repeat. The
//! number of rows selected per hard class grows linearly with the iteration.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::{fit_predict, BaseParams};
use crate::data::{ClassId, ClassSplit, DatasetBundle, FeatureTable, LabeledSample, PseudoLabelSet};
use crate::error::{Error, Result, StageExt};
use crate::eval::{evaluate, EvalReport};
use crate::hardness::{estimate_class_priors, identify_cf, HardnessReport, Metric};
use crate::models::BaseKind;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionKind {
    /// Rows of the hard classes only, an equal number per class.
    Hardness,
    /// The same number of rows drawn from the whole pseudo-labeled pool.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarstConfig {
    /// Number of self-training iterations.
    pub t: usize,
    pub k: usize,
    pub metric: Metric,
    pub selection: SelectionKind,
    pub base: BaseKind,
    pub seed: u64,
    pub params: BaseParams,
    /// Predict over seen and unseen classes.
    pub gzsl: bool,
}

impl HarstConfig {
    pub fn new(t: usize, k: usize) -> Self {
        HarstConfig {
            t,
            k,
            metric: Metric::Cf,
            selection: SelectionKind::Hardness,
            base: BaseKind::Embedding,
            seed: 0,
            params: BaseParams::default(),
            gzsl: false,
        }
    }

    pub fn validate(&self, split: &ClassSplit) -> Result<()> {
        if self.t == 0 {
            return Err(Error::invalid("T", "must be at least 1"));
        }
        if self.k == 0 || self.k > split.unseen_count() {
            return Err(Error::invalid("K", format!("must be in 1..={}", split.unseen_count())));
        }
        if self.metric == Metric::Ss {
            return Err(Error::invalid("metric", "the transductive pipeline uses cf or pncf"));
        }
        Ok(())
    }
}

/// `floor(t * M / (T * K))`.
pub fn selection_quota(t: usize, m: usize, total: usize, k: usize) -> Result<usize> {
    if t == 0 || t > total {
        return Err(Error::invalid("t", format!("must be in 1..={total}")));
    }
    if m == 0 || k == 0 {
        return Err(Error::invalid("M", "sample and hard-class counts must be positive"));
    }
    Ok((t as u128 * m as u128 / (total as u128 * k as u128)) as usize)
}

/// A selected row of the unlabeled table and the pseudo label it keeps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedRow {
    pub row: usize,
    pub label: ClassId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// `None` for random selection.
    pub hardness: Option<HardnessReport>,
    pub rows: Vec<SelectedRow>,
}

impl Selection {
    pub fn per_class(&self) -> BTreeMap<ClassId, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.label.clone()).or_insert(0) += 1;
        }
        out
    }
}

/// Rows pseudo-labeled as unseen classes, with their positions.
fn unseen_pool(pseudo: &PseudoLabelSet, split: &ClassSplit) -> (PseudoLabelSet, Vec<usize>) {
    let rows: Vec<usize> = (0..pseudo.len()).filter(|&i| split.is_unseen(pseudo.get(i))).collect();
    let labels = rows.iter().map(|&i| pseudo.get(i).clone()).collect();
    (labels, rows)
}

/// Identifies `k` hard classes of `pseudo` and draws `quota` rows with
/// replacement from each one's pseudo-label pool. Rows labeled as seen
/// classes never enter a pool.
pub fn select_cfbs(
    pseudo: &PseudoLabelSet,
    split: &ClassSplit,
    k: usize,
    quota: usize,
    priors: Option<&BTreeMap<ClassId, f64>>,
    seed: u64,
) -> Result<Selection> {
    let (labels, positions) = unseen_pool(pseudo, split);
    let hardness = identify_cf(&labels, split, k, priors)?;
    let mut rows = Vec::with_capacity(k * quota);
    for (h, class) in hardness.hard.iter().enumerate() {
        let pool: Vec<usize> = positions.iter().copied().filter(|&i| pseudo.get(i) == class).collect();
        if pool.is_empty() {
            if quota > 0 {
                warn!("hard class {class} has no pseudo-labeled rows; it contributes nothing");
            }
            continue;
        }
        let mut rng = rng::indexed_substream(seed, rng::SELECTION, h as u64);
        rows.extend((0..quota).map(|_| SelectedRow {
            row: pool[rng.random_range(0..pool.len())],
            label: class.clone(),
        }));
    }
    Ok(Selection {
        hardness: Some(hardness),
        rows,
    })
}

/// `total` rows drawn with replacement from all unseen-labeled rows.
pub fn random_selection_baseline(pseudo: &PseudoLabelSet, split: &ClassSplit, total: usize, seed: u64) -> Result<Selection> {
    let (_, pool) = unseen_pool(pseudo, split);
    if total == 0 {
        return Ok(Selection {
            hardness: None,
            rows: vec![],
        });
    }
    if pool.is_empty() {
        return Err(Error::invalid("total", "cannot draw from an empty pseudo-labeled pool"));
    }
    let mut rng = rng::substream(seed, rng::SELECTION);
    Ok(Selection {
        hardness: None,
        rows: (0..total)
            .map(|_| {
                let r = pool[rng.random_range(0..pool.len())];
                SelectedRow {
                    row: r,
                    label: pseudo.get(r).clone(),
                }
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Per-class quota used for the training set of this iteration.
    pub quota: usize,
    /// Hardness behind the rows this iteration trained on.
    pub hardness: Option<HardnessReport>,
    pub selected_total: usize,
    pub selected_per_class: BTreeMap<ClassId, usize>,
    #[serde(skip)]
    pub predictions: PseudoLabelSet,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval: Option<EvalReport>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Priors used for PnCF, when that metric is active.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub priors: Option<BTreeMap<ClassId, f64>>,
    /// Record 0 is the initial model trained on seen data alone.
    pub records: Vec<IterationRecord>,
}

#[derive(Debug)]
pub struct HarstOutput {
    pub predictions: PseudoLabelSet,
    pub trace: IterationTrace,
}

/// Failure part-way through a run, with the trace collected so far.
#[derive(Debug)]
pub struct HarstFailure {
    pub error: Error,
    pub trace: IterationTrace,
}

impl From<HarstFailure> for Error {
    fn from(f: HarstFailure) -> Error {
        f.error
    }
}

struct Context<'a> {
    bundle: &'a DatasetBundle,
    config: &'a HarstConfig,
    table: FeatureTable,
    rows: Vec<Vec<f64>>,
    truths: Option<Vec<ClassId>>,
    candidates: Vec<ClassId>,
    train: Vec<LabeledSample>,
}

impl<'a> Context<'a> {
    fn new(bundle: &'a DatasetBundle, config: &'a HarstConfig) -> Result<Self> {
        let mut tables = vec![&bundle.test_unseen];
        if config.gzsl {
            if let Some(ts) = &bundle.test_seen {
                tables.push(ts);
            }
        }
        let dim = bundle.test_unseen.dim();
        let table = FeatureTable::from_rows(
            dim,
            tables
                .iter()
                .flat_map(|t| (0..t.len()).map(move |i| (t.row(i).to_vec(), t.label(i).clone()))),
        )?;
        if table.is_empty() {
            return Err(Error::Validation("the transductive pipeline needs unlabeled unseen rows".into()));
        }
        let rows = (0..table.len()).map(|i| table.row_f64(i)).collect();
        let truths = table.is_fully_labeled().then(|| table.labels().to_vec());
        let candidates = if config.gzsl {
            bundle.split.all_classes()
        } else {
            bundle.split.unseen().iter().cloned().collect()
        };
        Ok(Context {
            bundle,
            config,
            table,
            rows,
            truths,
            candidates,
            train: bundle.train_seen.samples(),
        })
    }

    fn predict(&self, selected: &Selection) -> Result<PseudoLabelSet> {
        let mut train = self.train.clone();
        train.extend(selected.rows.iter().map(|r| LabeledSample {
            x: self.rows[r.row].clone(),
            label: r.label.clone(),
        }));
        let c = self.config;
        fit_predict(c.base, &train, &self.bundle.semantics, &self.candidates, &self.rows, &c.params, c.seed)
    }

    fn evaluate(&self, p: &PseudoLabelSet) -> Result<Option<EvalReport>> {
        self.truths.as_ref().map(|t| evaluate(p, t, &self.bundle.split)).transpose()
    }

    fn select(&self, p: &PseudoLabelSet, t: usize, priors: Option<&BTreeMap<ClassId, f64>>) -> Result<(usize, Selection)> {
        let c = self.config;
        let quota = selection_quota(t, self.table.len(), c.t, c.k)?;
        let seed = rng::derive_seed(c.seed, rng::SELECTION, t as u64);
        let sel = match c.selection {
            SelectionKind::Hardness => select_cfbs(p, &self.bundle.split, c.k, quota, priors, seed)?,
            SelectionKind::Random => random_selection_baseline(p, &self.bundle.split, c.k * quota, seed)?,
        };
        Ok((quota, sel))
    }

    fn priors(&self, p0: &PseudoLabelSet) -> Result<Option<BTreeMap<ClassId, f64>>> {
        if self.config.metric != Metric::Pncf {
            return Ok(None);
        }
        if let Some(p) = &self.bundle.class_priors {
            return Ok(Some(p.clone()));
        }
        let (labels, positions) = unseen_pool(p0, &self.bundle.split);
        let subset = FeatureTable::from_rows(
            self.table.dim(),
            positions.iter().map(|&i| (self.table.row(i).to_vec(), ClassId::unlabeled())),
        )?;
        estimate_class_priors(&subset, &labels, &self.bundle.split, self.config.seed).map(Some)
    }
}

/// Runs the full transductive loop. On failure the trace collected so far is
/// returned alongside the error.
pub fn run_harst(bundle: &DatasetBundle, config: &HarstConfig) -> std::result::Result<HarstOutput, HarstFailure> {
    let mut trace = IterationTrace::default();
    match run_inner(bundle, config, &mut trace) {
        Ok(predictions) => Ok(HarstOutput { predictions, trace }),
        Err(error) => Err(HarstFailure { error, trace }),
    }
}

fn run_inner(bundle: &DatasetBundle, config: &HarstConfig, trace: &mut IterationTrace) -> Result<PseudoLabelSet> {
    config.validate(&bundle.split).stage("configure")?;
    let ctx = Context::new(bundle, config).stage("configure")?;
    let empty = Selection {
        hardness: None,
        rows: vec![],
    };
    let p0 = ctx.predict(&empty).stage("initial-fit")?;
    trace.records.push(IterationRecord {
        t: 0,
        quota: 0,
        hardness: None,
        selected_total: 0,
        selected_per_class: BTreeMap::new(),
        eval: ctx.evaluate(&p0).stage("evaluate")?,
        predictions: p0.clone(),
    });
    trace.priors = ctx.priors(&p0).stage("estimate-priors")?;
    let priors = trace.priors.clone();

    let (mut quota, mut selected) = ctx.select(&p0, 1, priors.as_ref()).stage("select")?;
    let mut current = p0;
    for t in 1..=config.t {
        current = ctx.predict(&selected).stage("refit")?;
        let eval = ctx.evaluate(&current).stage("evaluate")?;
        if let Some(e) = &eval {
            info!("iteration {t}: ACC_U = {:.4}", e.acc_u);
        }
        trace.records.push(IterationRecord {
            t,
            quota,
            selected_total: selected.rows.len(),
            selected_per_class: selected.per_class(),
            hardness: selected.hardness.take(),
            eval,
            predictions: current.clone(),
        });
        if t < config.t {
            (quota, selected) = ctx.select(&current, t + 1, priors.as_ref()).stage("select")?;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<ClassId> {
        xs.iter().map(|&s| ClassId::from(s)).collect()
    }

    #[test]
    fn quota_formula() {
        assert_eq!(selection_quota(2, 100, 5, 5).unwrap(), 8);
        assert_eq!(selection_quota(5, 100, 5, 3).unwrap(), 33);
        assert_eq!(selection_quota(1, 3, 5, 2).unwrap(), 0);
        assert!(selection_quota(0, 100, 5, 5).is_err());
        assert!(selection_quota(6, 100, 5, 5).is_err());
        assert!(selection_quota(1, 100, 5, 0).is_err());
    }

    fn split() -> ClassSplit {
        ClassSplit::new(ids(&["s"]), ids(&["a", "b", "c"])).unwrap()
    }

    #[test]
    fn cfbs_draws_only_from_hard_pools() {
        let p = PseudoLabelSet::new(ids(&["a", "a", "a", "b", "b", "c", "s"]));
        let sel = select_cfbs(&p, &split(), 2, 5, None, 1).unwrap();
        assert_eq!(sel.hardness.as_ref().unwrap().hard, ids(&["c", "b"]));
        assert_eq!(sel.rows.len(), 10);
        assert!(sel.rows.iter().filter(|r| r.label.as_str() == "c").all(|r| r.row == 5));
        assert!(sel.rows.iter().all(|r| p.get(r.row) == &r.label));
        assert!(select_cfbs(&p, &split(), 2, 0, None, 1).unwrap().rows.is_empty());
    }

    #[test]
    fn empty_hard_pool_contributes_nothing() {
        let p = PseudoLabelSet::new(ids(&["a", "a", "b"]));
        let sel = select_cfbs(&p, &split(), 2, 4, None, 1).unwrap();
        assert_eq!(sel.rows.len(), 4);
        assert!(sel.rows.iter().all(|r| r.label.as_str() == "b"));
    }

    #[test]
    fn uniform_priors_select_like_cf() {
        let p = PseudoLabelSet::new(ids(&["a", "b", "b", "c", "c", "c", "a"]));
        let uniform: BTreeMap<ClassId, f64> = ids(&["a", "b", "c"]).into_iter().map(|c| (c, 1.0 / 3.0)).collect();
        let cf = select_cfbs(&p, &split(), 2, 3, None, 7).unwrap();
        let pn = select_cfbs(&p, &split(), 2, 3, Some(&uniform), 7).unwrap();
        assert_eq!(cf.rows, pn.rows);
    }

    #[test]
    fn random_selection() {
        let p = PseudoLabelSet::new(ids(&["a", "s", "b"]));
        let sel = random_selection_baseline(&p, &split(), 20, 3).unwrap();
        assert_eq!(sel.rows.len(), 20);
        assert!(sel.rows.iter().all(|r| r.row != 1));
        assert!(random_selection_baseline(&p, &split(), 0, 3).unwrap().rows.is_empty());
        assert!(random_selection_baseline(&PseudoLabelSet::new(ids(&["s"])), &split(), 1, 3).is_err());
    }
}
