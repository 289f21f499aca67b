//! Hard-class identification.
//!
//! Three per-class scores are supported, all ranked in ascending order so
//! that the lowest scores mark the hardest unseen classes:
//!
//! * `ss`: semantic similarity, `d_c = d_c^u - d_c^s`, where `d_c^u` is the
//!   cosine distance to the nearest other unseen class and `d_c^s` the mean of
//!   the three smallest cosine distances to seen classes;
//! * `cf`: how often a class occurs in a set of pseudo labels;
//! * `pncf`: the class frequency divided by the class prior.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassId, ClassSplit, FeatureTable, PseudoLabelSet, SemanticTable};
use crate::error::{Error, Result};
use crate::rng;

/// Number of nearest seen classes averaged into `d_c^s`.
pub const SEEN_NEIGHBOURS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ss,
    Cf,
    Pncf,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ss" => Ok(Metric::Ss),
            "cf" => Ok(Metric::Cf),
            "pncf" => Ok(Metric::Pncf),
            other => Err(Error::invalid("metric", format!("expected ss, cf or pncf, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardnessReport {
    pub metric: Metric,
    pub scores: BTreeMap<ClassId, f64>,
    pub hard: Vec<ClassId>,
    #[serde(rename = "K")]
    pub k: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("vector", "cosine is undefined for a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    cosine_similarity(a, b).map(|c| 1.0 - c)
}

/// Semantic-similarity hardness `d_c` for every unseen class.
///
/// With fewer than three seen classes `d_c^s` averages all of them.
pub fn ss_scores(semantics: &SemanticTable, split: &ClassSplit) -> Result<BTreeMap<ClassId, f64>> {
    if split.unseen_count() < 2 {
        return Err(Error::invalid("split", "the SS metric needs at least 2 unseen classes"));
    }
    if split.seen().len() < SEEN_NEIGHBOURS {
        warn!(
            "only {} seen classes; d_c^s averages all of them instead of the nearest {SEEN_NEIGHBOURS}",
            split.seen().len()
        );
    }
    let mut scores = BTreeMap::new();
    for c in split.unseen() {
        let e_c = semantics.vector(c)?;
        let mut d_unseen = f64::INFINITY;
        for other in split.unseen().iter().filter(|&o| o != c) {
            d_unseen = d_unseen.min(cosine_distance(e_c, semantics.vector(other)?)?);
        }
        let mut to_seen = split
            .seen()
            .iter()
            .map(|s| cosine_distance(e_c, semantics.vector(s)?))
            .collect::<Result<Vec<_>>>()?;
        to_seen.sort_by(f64::total_cmp);
        let nearest = &to_seen[..to_seen.len().min(SEEN_NEIGHBOURS)];
        let d_seen = nearest.iter().sum::<f64>() / nearest.len() as f64;
        scores.insert(c.clone(), d_unseen - d_seen);
    }
    Ok(scores)
}

/// The `k` lowest-scoring classes, lowest first; ties go to the
/// lexicographically smaller id.
pub fn rank_hard<'a, I>(scores: I, k: usize) -> Result<Vec<ClassId>>
where
    I: IntoIterator<Item = (&'a ClassId, &'a f64)>,
{
    let mut ranked: Vec<(&ClassId, f64)> = scores.into_iter().map(|(c, &s)| (c, s)).collect();
    if let Some((c, _)) = ranked.iter().find(|(_, s)| s.is_nan()) {
        return Err(Error::invalid("scores", format!("score for {c} is NaN")));
    }
    if k == 0 || k > ranked.len() {
        return Err(Error::invalid("K", format!("must be in 1..={}, got {k}", ranked.len())));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(c, _)| c.clone()).collect())
}

/// Per-unseen-class counts of `pseudo`.
pub fn pseudo_label_histogram(pseudo: &PseudoLabelSet, split: &ClassSplit) -> Result<BTreeMap<ClassId, u64>> {
    let mut hist: BTreeMap<ClassId, u64> = split.unseen().iter().map(|c| (c.clone(), 0)).collect();
    for (row, y) in pseudo.iter().enumerate() {
        match hist.get_mut(y) {
            Some(n) => *n += 1,
            None => {
                return Err(Error::Validation(format!(
                    "pseudo label {y} at row {row} is not an unseen class"
                )))
            }
        }
    }
    Ok(hist)
}

/// `f_c / p_c` for every class.
pub fn normalize_by_prior(
    freqs: &BTreeMap<ClassId, u64>,
    priors: &BTreeMap<ClassId, f64>,
) -> Result<BTreeMap<ClassId, f64>> {
    if freqs.len() != priors.len() || freqs.keys().any(|k| !priors.contains_key(k)) {
        return Err(Error::invalid("priors", "prior and frequency class sets differ"));
    }
    freqs
        .iter()
        .map(|(c, &f)| {
            let p = priors[c];
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::invalid("priors", format!("prior for {c} must be positive, got {p}")));
            }
            Ok((c.clone(), f as f64 / p))
        })
        .collect()
}

pub fn identify_ss(semantics: &SemanticTable, split: &ClassSplit, k: usize) -> Result<HardnessReport> {
    let scores = ss_scores(semantics, split)?;
    let hard = rank_hard(&scores, k)?;
    Ok(HardnessReport {
        metric: Metric::Ss,
        scores,
        hard,
        k,
    })
}

/// CF hardness, or PnCF when `priors` is given.
pub fn identify_cf(
    pseudo: &PseudoLabelSet,
    split: &ClassSplit,
    k: usize,
    priors: Option<&BTreeMap<ClassId, f64>>,
) -> Result<HardnessReport> {
    let hist = pseudo_label_histogram(pseudo, split)?;
    let (metric, scores) = match priors {
        Some(p) => (Metric::Pncf, normalize_by_prior(&hist, p)?),
        None => (Metric::Cf, hist.iter().map(|(c, &f)| (c.clone(), f as f64)).collect()),
    };
    let hard = rank_hard(&scores, k)?;
    Ok(HardnessReport {
        metric,
        scores,
        hard,
        k,
    })
}

const PRIOR_RESTARTS: usize = 10;
const LLOYD_ITERATIONS: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Estimates unseen-class priors from unlabeled features.
///
/// Centers start at the per-class means of the current pseudo labels, so
/// cluster `c` stays tied to class `c`; classes with no pseudo labels start at
/// a random row. Lloyd iterations then refine the clustering and the prior of
/// each class is its cluster size plus one, normalized. An empty cluster
/// triggers a restart that re-seeds its center from a random row.
pub fn estimate_class_priors(
    unlabeled: &FeatureTable,
    pseudo: &PseudoLabelSet,
    split: &ClassSplit,
    seed: u64,
) -> Result<BTreeMap<ClassId, f64>> {
    if unlabeled.is_empty() {
        return Err(Error::invalid("unlabeled", "cannot estimate priors from an empty table"));
    }
    if pseudo.len() != unlabeled.len() {
        return Err(Error::DimensionMismatch {
            expected: unlabeled.len(),
            got: pseudo.len(),
        });
    }
    let classes: Vec<&ClassId> = split.unseen().iter().collect();
    let index: BTreeMap<&ClassId, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let rows: Vec<Vec<f64>> = (0..unlabeled.len()).map(|i| unlabeled.row_f64(i)).collect();
    let dim = unlabeled.dim();
    let n_classes = classes.len();

    let mut centers = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (x, y) in rows.iter().zip(pseudo.iter()) {
        let &c = index
            .get(y)
            .ok_or_else(|| Error::Validation(format!("pseudo label {y} is not an unseen class")))?;
        counts[c] += 1;
        centers[c].iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    let mut reseed: BTreeSet<usize> = BTreeSet::new();
    for (c, center) in centers.iter_mut().enumerate() {
        if counts[c] == 0 {
            reseed.insert(c);
        } else {
            center.iter_mut().for_each(|m| *m /= counts[c] as f64);
        }
    }

    for attempt in 0..=PRIOR_RESTARTS {
        let mut rng = rng::indexed_substream(seed, rng::PRIORS, attempt as u64);
        for &c in &reseed {
            centers[c] = rows[rng.random_range(0..rows.len())].clone();
        }
        let mut assign = vec![usize::MAX; rows.len()];
        let mut empty = None;
        for _ in 0..LLOYD_ITERATIONS {
            let mut changed = false;
            for (i, x) in rows.iter().enumerate() {
                let best = (0..n_classes)
                    .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                    .unwrap();
                if assign[i] != best {
                    assign[i] = best;
                    changed = true;
                }
            }
            let mut sums = vec![vec![0.0; dim]; n_classes];
            let mut sizes = vec![0usize; n_classes];
            for (x, &a) in rows.iter().zip(&assign) {
                sizes[a] += 1;
                sums[a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
            }
            empty = sizes.iter().position(|&n| n == 0);
            if empty.is_some() {
                break;
            }
            for (center, (sum, n)) in centers.iter_mut().zip(sums.into_iter().zip(&sizes)) {
                *center = sum.into_iter().map(|s| s / *n as f64).collect();
            }
            if !changed {
                break;
            }
        }
        match empty {
            Some(c) => {
                reseed.insert(c);
            }
            None => {
                let mut sizes = vec![0usize; n_classes];
                assign.iter().for_each(|&a| sizes[a] += 1);
                let total = (rows.len() + n_classes) as f64;
                return Ok(classes
                    .iter()
                    .zip(sizes)
                    .map(|(&c, n)| (c.clone(), (n + 1) as f64 / total))
                    .collect());
            }
        }
    }
    Err(Error::DegenerateClustering {
        attempts: PRIOR_RESTARTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    fn ids(xs: &[&str]) -> Vec<ClassId> {
        xs.iter().map(|&s| ClassId::from(s)).collect()
    }

    fn table(entries: &[(&str, Vec<f64>)]) -> SemanticTable {
        SemanticTable::new(entries.iter().map(|(c, v)| (ClassId::from(*c), v.clone()))).unwrap()
    }

    #[test]
    fn cosine_distance_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-2.0, 0.0]).unwrap(), 2.0);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn ss_identical_unseen_orthogonal_seen() {
        let sem = table(&[
            ("u1", vec![1.0, 0.0]),
            ("u2", vec![1.0, 0.0]),
            ("s1", vec![0.0, 1.0]),
            ("s2", vec![0.0, 1.0]),
            ("s3", vec![0.0, 1.0]),
        ]);
        let split = ClassSplit::new(ids(&["s1", "s2", "s3"]), ids(&["u1", "u2"])).unwrap();
        let d = ss_scores(&sem, &split).unwrap();
        assert_eq!(d[&ClassId::from("u1")], -1.0);
    }

    #[test]
    fn ss_orthogonal_unseen_aligned_seen() {
        let sem = table(&[
            ("u1", vec![1.0, 0.0]),
            ("u2", vec![0.0, 1.0]),
            ("s1", vec![1.0, 0.0]),
            ("s2", vec![1.0, 0.0]),
            ("s3", vec![1.0, 0.0]),
        ]);
        let split = ClassSplit::new(ids(&["s1", "s2", "s3"]), ids(&["u1", "u2"])).unwrap();
        assert_eq!(ss_scores(&sem, &split).unwrap()[&ClassId::from("u1")], 1.0);
    }

    #[test]
    fn ss_needs_two_unseen() {
        let sem = table(&[("u1", vec![1.0]), ("s1", vec![1.0])]);
        let split = ClassSplit::new(ids(&["s1"]), ids(&["u1"])).unwrap();
        assert!(ss_scores(&sem, &split).is_err());
    }

    #[test]
    fn ss_with_two_seen_averages_both() {
        let sem = table(&[
            ("u1", vec![1.0, 0.0]),
            ("u2", vec![1.0, 0.0]),
            ("s1", vec![1.0, 0.0]),
            ("s2", vec![0.0, 1.0]),
        ]);
        let split = ClassSplit::new(ids(&["s1", "s2"]), ids(&["u1", "u2"])).unwrap();
        assert_eq!(ss_scores(&sem, &split).unwrap()[&ClassId::from("u1")], -0.5);
    }

    #[test]
    fn rank_hard_examples() {
        let scores: BTreeMap<ClassId, f64> =
            [("a".into(), 0.5), ("b".into(), -0.2), ("c".into(), 0.1)].into();
        assert_eq!(rank_hard(&scores, 2).unwrap(), ids(&["b", "c"]));
        assert_eq!(rank_hard(&scores, 3).unwrap(), ids(&["b", "c", "a"]));
        assert!(rank_hard(&scores, 0).is_err());
        assert!(rank_hard(&scores, 4).is_err());
        let tied: BTreeMap<ClassId, f64> = [("b".into(), 0.3), ("a".into(), 0.3)].into();
        assert_eq!(rank_hard(&tied, 1).unwrap(), ids(&["a"]));
    }

    #[test]
    fn histogram_examples() {
        let split = ClassSplit::new(ids(&["s"]), ids(&["c1", "c2", "c3"])).unwrap();
        let p = PseudoLabelSet::new(ids(&["c1", "c1", "c2", "c3", "c3", "c3"]));
        let h = pseudo_label_histogram(&p, &split).unwrap();
        assert_eq!(h.values().copied().collect::<Vec<_>>(), vec![2, 1, 3]);
        let empty = pseudo_label_histogram(&PseudoLabelSet::default(), &split).unwrap();
        assert!(empty.values().all(|&n| n == 0));
        let bad = PseudoLabelSet::new(ids(&["s"]));
        assert!(pseudo_label_histogram(&bad, &split).is_err());
    }

    #[test]
    fn prior_normalization_examples() {
        let f: BTreeMap<ClassId, u64> = [("c1".into(), 10), ("c2".into(), 10)].into();
        let p: BTreeMap<ClassId, f64> = [("c1".into(), 0.8), ("c2".into(), 0.2)].into();
        let n = normalize_by_prior(&f, &p).unwrap();
        assert_eq!(n[&ClassId::from("c1")], 12.5);
        assert_eq!(n[&ClassId::from("c2")], 50.0);
        assert_eq!(rank_hard(&n, 1).unwrap(), ids(&["c1"]));

        let zero: BTreeMap<ClassId, u64> = [("c".into(), 0)].into();
        let pz: BTreeMap<ClassId, f64> = [("c".into(), 0.37)].into();
        assert_eq!(normalize_by_prior(&zero, &pz).unwrap()[&ClassId::from("c")], 0.0);

        let bad: BTreeMap<ClassId, f64> = [("c1".into(), 0.0), ("c2".into(), 1.0)].into();
        assert!(normalize_by_prior(&f, &bad).is_err());
        let missing: BTreeMap<ClassId, f64> = [("c1".into(), 1.0)].into();
        assert!(normalize_by_prior(&f, &missing).is_err());
    }

    fn planted_clusters(n_a: usize, n_b: usize, seed: u64) -> (FeatureTable, PseudoLabelSet, ClassSplit) {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut pseudo = Vec::new();
        for (n, center, truth, wrong) in [(n_a, -5.0, "a", "b"), (n_b, 5.0, "b", "a")] {
            for i in 0..n {
                let x: Vec<f32> = (0..2)
                    .map(|_| (center + 0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)) as f32)
                    .collect();
                rows.push((x, ClassId::from("?")));
                // a noisy classifier: every fifth pseudo label is wrong
                pseudo.push(ClassId::from(if i % 5 == 0 { wrong } else { truth }));
            }
        }
        (
            FeatureTable::from_rows(2, rows).unwrap(),
            PseudoLabelSet::new(pseudo),
            ClassSplit::new(ids(&["s"]), ids(&["a", "b"])).unwrap(),
        )
    }

    #[test]
    fn priors_recover_planted_mixture() {
        let (t, p, split) = planted_clusters(30, 70, 3);
        let priors = estimate_class_priors(&t, &p, &split, 11).unwrap();
        assert!((priors[&ClassId::from("a")] - 0.3).abs() <= 0.05, "{priors:?}");
        assert!((priors[&ClassId::from("b")] - 0.7).abs() <= 0.05, "{priors:?}");
        assert!((priors.values().sum::<f64>() - 1.0).abs() < 1e-9);
        let again = estimate_class_priors(&t, &p, &split, 11).unwrap();
        assert_eq!(priors, again);
    }

    #[test]
    fn priors_single_class() {
        let t = FeatureTable::new(1, vec![1.0, 2.0, 3.0], ids(&["?", "?", "?"])).unwrap();
        let split = ClassSplit::new(ids(&["s"]), ids(&["c"])).unwrap();
        let p = PseudoLabelSet::new(ids(&["c", "c", "c"]));
        let priors = estimate_class_priors(&t, &p, &split, 0).unwrap();
        assert_eq!(priors[&ClassId::from("c")], 1.0);
    }

    #[test]
    fn priors_recover_from_missing_pseudo_class() {
        let (t, _, split) = planted_clusters(40, 60, 5);
        let all_b = PseudoLabelSet::new(vec![ClassId::from("b"); t.len()]);
        let priors = estimate_class_priors(&t, &all_b, &split, 2).unwrap();
        assert!(priors.values().all(|&p| p > 0.0));
        assert!((priors.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_points_cannot_fill_two_clusters() {
        let t = FeatureTable::new(1, vec![1.0; 4], ids(&["?"; 4])).unwrap();
        let split = ClassSplit::new(ids(&["s"]), ids(&["a", "b"])).unwrap();
        let p = PseudoLabelSet::new(ids(&["a", "a", "a", "a"]));
        assert!(matches!(
            estimate_class_priors(&t, &p, &split, 0),
            Err(Error::DegenerateClustering { .. })
        ));
    }

    /// Independent O(C^2) recomputation written against the raw formula.
    fn brute_force_ss(vectors: &[(String, Vec<f64>)], n_unseen: usize) -> Vec<f64> {
        let cos = |a: &[f64], b: &[f64]| {
            let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let bb: f64 = b.iter().map(|x| x * x).sum();
            1.0 - ab / (aa.sqrt() * bb.sqrt())
        };
        (0..n_unseen)
            .map(|i| {
                let du = (0..n_unseen)
                    .filter(|&j| j != i)
                    .map(|j| cos(&vectors[i].1, &vectors[j].1))
                    .fold(f64::INFINITY, f64::min);
                let mut ds: Vec<f64> = (n_unseen..vectors.len()).map(|j| cos(&vectors[i].1, &vectors[j].1)).collect();
                ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let m = ds.len().min(3);
                du - ds[..m].iter().sum::<f64>() / m as f64
            })
            .collect()
    }

    fn random_semantics(n_unseen: usize, n_seen: usize, dim: usize, seed: u64) -> (SemanticTable, ClassSplit, Vec<(String, Vec<f64>)>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<(String, Vec<f64>)> = (0..n_unseen + n_seen)
            .map(|i| {
                let name = if i < n_unseen { format!("u{i:03}") } else { format!("s{i:03}") };
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (name, v)
            })
            .collect();
        let sem = SemanticTable::new(vectors.iter().map(|(c, v)| (ClassId::from(c.as_str()), v.clone()))).unwrap();
        let split = ClassSplit::new(
            vectors[n_unseen..].iter().map(|(c, _)| ClassId::from(c.as_str())),
            vectors[..n_unseen].iter().map(|(c, _)| ClassId::from(c.as_str())),
        )
        .unwrap();
        (sem, split, vectors)
    }

    #[test]
    fn ss_matches_brute_force_on_random_tables() {
        for (seed, (nu, ns)) in [(5usize, 6usize), (50, 40), (17, 3), (2, 9)].into_iter().enumerate() {
            let (sem, split, vectors) = random_semantics(nu, ns, 7, seed as u64);
            let fast = ss_scores(&sem, &split).unwrap();
            let slow = brute_force_ss(&vectors, nu);
            for (i, (name, _)) in vectors[..nu].iter().enumerate() {
                let got = fast[&ClassId::from(name.as_str())];
                assert!((got - slow[i]).abs() <= 1e-12, "{name}: {got} vs {}", slow[i]);
            }
        }
    }

    #[test]
    fn histogram_matches_recount_on_large_random_set() {
        let split = ClassSplit::new(ids(&["s"]), (0..13).map(|i| ClassId::new(format!("c{i}")))).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let labels: Vec<ClassId> = (0..10_000).map(|_| ClassId::new(format!("c{}", rng.random_range(0..13)))).collect();
        let mut oracle: HashMap<&str, u64> = HashMap::new();
        for l in &labels {
            *oracle.entry(l.as_str()).or_default() += 1;
        }
        let h = pseudo_label_histogram(&PseudoLabelSet::new(labels.clone()), &split).unwrap();
        for (c, n) in &h {
            assert_eq!(*n, oracle.get(c.as_str()).copied().unwrap_or(0));
        }
        assert_eq!(h.values().sum::<u64>(), labels.len() as u64);
    }

    proptest! {
        #[test]
        fn ss_ranking_is_scale_invariant(seed in 0u64..1000, which in 0usize..11, lambda in 0.01f64..100.0) {
            let (sem, split, vectors) = random_semantics(5, 6, 4, seed);
            let scaled = SemanticTable::new(vectors.iter().enumerate().map(|(i, (c, v))| {
                let f = if i == which { lambda } else { 1.0 };
                (ClassId::from(c.as_str()), v.iter().map(|x| x * f).collect())
            })).unwrap();
            let a = ss_scores(&sem, &split).unwrap();
            let b = ss_scores(&scaled, &split).unwrap();
            for (c, v) in &a {
                prop_assert!((v - b[c]).abs() < 1e-12);
            }
            prop_assert_eq!(rank_hard(&a, 5).unwrap(), rank_hard(&b, 5).unwrap());
        }

        #[test]
        fn rank_hard_ignores_insertion_order(values in proptest::collection::vec(-3i32..3, 1..12), k_frac in 0.0f64..1.0) {
            let pairs: Vec<(ClassId, f64)> = values.iter().enumerate()
                .map(|(i, &v)| (ClassId::new(format!("k{i:02}")), f64::from(v))).collect();
            let k = 1 + ((pairs.len() - 1) as f64 * k_frac) as usize;
            let forward: HashMap<ClassId, f64> = pairs.iter().cloned().collect();
            let backward: Vec<(ClassId, f64)> = pairs.iter().rev().cloned().collect();
            let a = rank_hard(&forward, k).unwrap();
            let b = rank_hard(backward.iter().map(|(c, s)| (c, s)), k).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn pncf_with_uniform_priors_matches_cf(labels in proptest::collection::vec(0usize..6, 0..200), k in 1usize..=6) {
            let split = ClassSplit::new(ids(&["s"]), (0..6).map(|i| ClassId::new(format!("c{i}")))).unwrap();
            let p: PseudoLabelSet = labels.iter().map(|i| ClassId::new(format!("c{i}"))).collect();
            let uniform: BTreeMap<ClassId, f64> = split.unseen().iter().map(|c| (c.clone(), 1.0 / 6.0)).collect();
            let cf = identify_cf(&p, &split, k, None).unwrap();
            let pncf = identify_cf(&p, &split, k, Some(&uniform)).unwrap();
            prop_assert_eq!(cf.hard, pncf.hard);
        }
    }
}
