//! Domain types for zero-shot datasets: class identifiers, semantic tables,
//! visual feature tables, the seen/unseen split and the bundle tying them
//! together.
//!
//! All tables are immutable once validated and may be shared freely across
//! threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label carried by rows whose class is unknown (unlabeled test data).
pub const UNLABELED: &str = "?";

/// Opaque class identifier. Ordering is lexicographic and drives every
/// deterministic tie-break in the crate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(String);

impl ClassId {
    pub fn new(id: impl Into<String>) -> Self {
        ClassId(id.into())
    }

    pub fn unlabeled() -> Self {
        ClassId(UNLABELED.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_unlabeled(&self) -> bool {
        self.0 == UNLABELED
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassId {
    fn from(s: &str) -> Self {
        ClassId::new(s)
    }
}

impl From<String> for ClassId {
    fn from(s: String) -> Self {
        ClassId(s)
    }
}

fn check_label_token(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() {
        return Err("empty class id".into());
    }
    if id.contains(['\n', '\r', ',']) {
        return Err(format!("class id {id:?} contains a separator character"));
    }
    Ok(())
}

/// Class-level semantic vectors (attributes), one per class.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticTable {
    dim: usize,
    vectors: BTreeMap<ClassId, Vec<f64>>,
}

impl SemanticTable {
    pub fn new(entries: impl IntoIterator<Item = (ClassId, Vec<f64>)>) -> Result<Self> {
        let mut vectors = BTreeMap::new();
        let mut dim = None;
        for (id, v) in entries {
            check_label_token(id.as_str()).map_err(Error::Validation)?;
            if id.is_unlabeled() {
                return Err(Error::Validation("semantic table uses the reserved id \"?\"".into()));
            }
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected {
                return Err(Error::Validation(format!(
                    "class {id}: semantic dimension {} differs from {expected}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("class {id}: non-finite semantic value")));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroNorm(id.to_string()));
            }
            if vectors.insert(id.clone(), v).is_some() {
                return Err(Error::Validation(format!("class {id} listed twice in semantic table")));
            }
        }
        let dim = dim.ok_or_else(|| Error::Validation("semantic table is empty".into()))?;
        if dim == 0 {
            return Err(Error::Validation("semantic dimension must be at least 1".into()));
        }
        Ok(SemanticTable { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &ClassId) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn vector(&self, id: &ClassId) -> Result<&[f64]> {
        self.get(id).ok_or_else(|| Error::UnknownClass(id.to_string()))
    }

    pub fn contains(&self, id: &ClassId) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassId, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

/// Row-major table of visual features with one label per row.
///
/// Features are stored as `f32`, the precision of the on-disk formats, so
/// serialization round-trips are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    features: Vec<f32>,
    labels: Vec<ClassId>,
}

impl FeatureTable {
    pub fn empty(dim: usize) -> Self {
        FeatureTable {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn new(dim: usize, features: Vec<f32>, labels: Vec<ClassId>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("visual dimension must be at least 1".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Validation(format!(
                "{} feature values do not fill {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        for (row, label) in labels.iter().enumerate() {
            check_label_token(label.as_str())
                .map_err(|r| Error::Validation(format!("row {row}: {r}")))?;
            if features[row * dim..(row + 1) * dim].iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("row {row}: non-finite feature value")));
            }
        }
        Ok(FeatureTable {
            dim,
            features,
            labels,
        })
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (Vec<f32>, ClassId)>) -> Result<Self> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, (x, y)) in rows.into_iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Validation(format!(
                    "row {i}: dimension {} differs from {dim}",
                    x.len()
                )));
            }
            features.extend_from_slice(&x);
            labels.push(y);
        }
        FeatureTable::new(dim, features, labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| f64::from(x)).collect()
    }

    pub fn label(&self, i: usize) -> &ClassId {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Row indices grouped by label, in row order.
    pub fn rows_by_class(&self) -> BTreeMap<ClassId, Vec<usize>> {
        let mut out: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, y) in self.labels.iter().enumerate() {
            out.entry(y.clone()).or_default().push(i);
        }
        out
    }

    /// Rows converted to `f64` training samples.
    pub fn samples(&self) -> Vec<LabeledSample> {
        (0..self.len())
            .map(|i| LabeledSample {
                x: self.row_f64(i),
                label: self.labels[i].clone(),
            })
            .collect()
    }

    /// Same features with every label replaced by [`UNLABELED`].
    pub fn without_labels(&self) -> FeatureTable {
        FeatureTable {
            dim: self.dim,
            features: self.features.clone(),
            labels: vec![ClassId::unlabeled(); self.len()],
        }
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(|l| !l.is_unlabeled())
    }
}

/// A visual sample paired with a class label, in working precision.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub label: ClassId,
}

/// Disjoint seen and unseen label sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SplitRepr", into = "SplitRepr")]
pub struct ClassSplit {
    seen: BTreeSet<ClassId>,
    unseen: BTreeSet<ClassId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitRepr {
    seen: Vec<ClassId>,
    unseen: Vec<ClassId>,
}

impl TryFrom<SplitRepr> for ClassSplit {
    type Error = Error;

    fn try_from(r: SplitRepr) -> Result<Self> {
        ClassSplit::new(r.seen, r.unseen)
    }
}

impl From<ClassSplit> for SplitRepr {
    fn from(s: ClassSplit) -> Self {
        SplitRepr {
            seen: s.seen.into_iter().collect(),
            unseen: s.unseen.into_iter().collect(),
        }
    }
}

impl ClassSplit {
    pub fn new(
        seen: impl IntoIterator<Item = ClassId>,
        unseen: impl IntoIterator<Item = ClassId>,
    ) -> Result<Self> {
        let mut seen_set = BTreeSet::new();
        for id in seen {
            check_label_token(id.as_str()).map_err(Error::Validation)?;
            if !seen_set.insert(id.clone()) {
                return Err(Error::Validation(format!("seen class {id} listed twice")));
            }
        }
        let mut unseen_set = BTreeSet::new();
        for id in unseen {
            check_label_token(id.as_str()).map_err(Error::Validation)?;
            if seen_set.contains(&id) {
                return Err(Error::OverlappingClass(id.to_string()));
            }
            if !unseen_set.insert(id.clone()) {
                return Err(Error::Validation(format!("unseen class {id} listed twice")));
            }
        }
        if seen_set.is_empty() || unseen_set.is_empty() {
            return Err(Error::Validation("seen and unseen class sets must be non-empty".into()));
        }
        if seen_set.iter().chain(&unseen_set).any(ClassId::is_unlabeled) {
            return Err(Error::Validation("split uses the reserved id \"?\"".into()));
        }
        Ok(ClassSplit {
            seen: seen_set,
            unseen: unseen_set,
        })
    }

    pub fn seen(&self) -> &BTreeSet<ClassId> {
        &self.seen
    }

    pub fn unseen(&self) -> &BTreeSet<ClassId> {
        &self.unseen
    }

    /// Number of unseen classes (`C`).
    pub fn unseen_count(&self) -> usize {
        self.unseen.len()
    }

    pub fn is_seen(&self, id: &ClassId) -> bool {
        self.seen.contains(id)
    }

    pub fn is_unseen(&self, id: &ClassId) -> bool {
        self.unseen.contains(id)
    }

    /// Unseen classes followed by seen classes, each block sorted.
    pub fn all_classes(&self) -> Vec<ClassId> {
        self.unseen.iter().chain(&self.seen).cloned().collect()
    }
}

/// Predicted labels keyed by row index of the table they were predicted on.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PseudoLabelSet {
    labels: Vec<ClassId>,
}

impl PseudoLabelSet {
    pub fn new(labels: Vec<ClassId>) -> Self {
        PseudoLabelSet { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn get(&self, row: usize) -> &ClassId {
        &self.labels[row]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassId> {
        self.labels.iter()
    }
}

impl FromIterator<ClassId> for PseudoLabelSet {
    fn from_iter<I: IntoIterator<Item = ClassId>>(iter: I) -> Self {
        PseudoLabelSet::new(iter.into_iter().collect())
    }
}

/// Everything a pipeline run needs.
///
/// `test_unseen` may carry ground-truth labels for evaluation; pipelines only
/// ever read its features.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub train_seen: FeatureTable,
    pub test_unseen: FeatureTable,
    pub test_seen: Option<FeatureTable>,
    pub semantics: SemanticTable,
    pub split: ClassSplit,
    pub class_priors: Option<BTreeMap<ClassId, f64>>,
}

impl DatasetBundle {
    /// Checks every cross-table invariant and hands the bundle back unchanged.
    pub fn validate(self) -> Result<Self> {
        let split = &self.split;
        for id in split.seen().iter().chain(split.unseen()) {
            if !self.semantics.contains(id) {
                return Err(Error::Validation(format!("class {id} has no semantic vector")));
            }
        }
        for (id, _) in self.semantics.iter() {
            if !split.is_seen(id) && !split.is_unseen(id) {
                return Err(Error::Validation(format!(
                    "semantic table lists class {id}, which is in neither split"
                )));
            }
        }
        if self.train_seen.is_empty() {
            return Err(Error::Validation("train_seen is empty".into()));
        }
        let dim = self.train_seen.dim();
        for (name, table) in [("test_unseen", Some(&self.test_unseen)), ("test_seen", self.test_seen.as_ref())] {
            if let Some(t) = table {
                if t.dim() != dim {
                    return Err(Error::Validation(format!(
                        "{name} has visual dimension {} but train_seen has {dim}",
                        t.dim()
                    )));
                }
            }
        }
        for (row, y) in self.train_seen.labels().iter().enumerate() {
            if !split.is_seen(y) {
                return Err(Error::Validation(format!(
                    "train_seen row {row}: label {y} is not a seen class"
                )));
            }
        }
        for (row, y) in self.test_unseen.labels().iter().enumerate() {
            if !y.is_unlabeled() && !split.is_unseen(y) {
                return Err(Error::Validation(format!(
                    "test_unseen row {row}: label {y} is not an unseen class"
                )));
            }
        }
        if let Some(t) = &self.test_seen {
            for (row, y) in t.labels().iter().enumerate() {
                if !y.is_unlabeled() && !split.is_seen(y) {
                    return Err(Error::Validation(format!(
                        "test_seen row {row}: label {y} is not a seen class"
                    )));
                }
            }
        }
        if let Some(priors) = &self.class_priors {
            validate_priors(priors, split)?;
        }
        Ok(self)
    }
}

pub(crate) fn validate_priors(priors: &BTreeMap<ClassId, f64>, split: &ClassSplit) -> Result<()> {
    for id in split.unseen() {
        match priors.get(id) {
            None => return Err(Error::Validation(format!("missing prior for unseen class {id}"))),
            Some(&p) if !(p > 0.0 && p.is_finite()) => {
                return Err(Error::Validation(format!("prior for class {id} must be positive, got {p}")))
            }
            _ => {}
        }
    }
    if let Some(extra) = priors.keys().find(|k| !split.is_unseen(k)) {
        return Err(Error::Validation(format!("prior given for non-unseen class {extra}")));
    }
    let total: f64 = priors.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("class priors sum to {total}, expected 1")));
    }
    Ok(())
}
