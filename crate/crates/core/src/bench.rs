//! Synthetic zero-shot benchmarks with planted hard classes.
//!
//! Semantic vectors have `semantic_dim` attributes split into common ones,
//! which every class uses, and rare ones, which seen classes barely touch.
//! Each planted pair is a random rare-heavy vector and a small perturbation
//! of it: the two are mutually close and far from every seen class. Every
//! other unseen class is a convex mix of a few seen classes. Visual features
//! are `W0 e + noise`.
//!
//! Each attempt draws a candidate geometry from its own substream and is
//! accepted only if the planted set is strictly separated under the SS score
//! and every planted pair clears the affinity gap.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ClassId, ClassSplit, DatasetBundle, FeatureTable, SemanticTable};
use crate::error::{Error, Result};
use crate::hardness::{cosine_distance, ss_scores};
use crate::models::Matrix;
use crate::rng::{self, StreamRng};

const MAX_ATTEMPTS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub seen_count: usize,
    pub unseen_count: usize,
    pub semantic_dim: usize,
    pub visual_dim: usize,
    /// Training rows per seen class and test rows per unseen class.
    pub n_per_class: usize,
    pub hard_pairs: usize,
    /// Minimum margin between a planted pair's mutual cosine distance and
    /// the distance from either member to any seen class.
    pub affinity_gap: f64,
    pub noise_scale: f64,
    pub seed: u64,
    /// Attributes seen classes barely use; defaults to a quarter of
    /// `semantic_dim`, at least two.
    #[serde(default)]
    pub rare_dims: Option<usize>,
    /// Upper bound of seen-class values on rare attributes.
    #[serde(default = "default_rare_seen")]
    pub rare_seen: f64,
    /// Perturbation between pair members, relative to the base vector norm.
    #[serde(default = "default_pair_spread")]
    pub pair_spread: f64,
    /// Scales the test-row count of one easy unseen class.
    #[serde(default)]
    pub shrink_easy: Option<f64>,
    /// Test rows per seen class, for generalized evaluation.
    #[serde(default)]
    pub test_seen_per_class: usize,
}

fn default_rare_seen() -> f64 {
    0.15
}

fn default_pair_spread() -> f64 {
    0.25
}

impl BenchmarkSpec {
    /// 12 seen classes, 8 unseen, two planted pairs.
    pub fn standard(seed: u64) -> Self {
        BenchmarkSpec {
            seen_count: 12,
            unseen_count: 8,
            semantic_dim: 10,
            visual_dim: 16,
            n_per_class: 50,
            hard_pairs: 2,
            affinity_gap: 0.05,
            noise_scale: 0.3,
            seed,
            rare_dims: None,
            rare_seen: default_rare_seen(),
            pair_spread: default_pair_spread(),
            shrink_easy: None,
            test_seen_per_class: 0,
        }
    }

    /// The same benchmark with one easy class holding a tenth of its rows.
    pub fn unbalanced(mut self) -> Self {
        self.shrink_easy = Some(0.1);
        self
    }

    pub fn rare(&self) -> usize {
        self.rare_dims.unwrap_or((self.semantic_dim / 4).max(2))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |arg, reason: &str| Err(Error::invalid(arg, reason.to_string()));
        if self.seen_count == 0 || self.unseen_count < 2 {
            return bad("seen_count", "need at least one seen and two unseen classes");
        }
        if self.hard_pairs == 0 || 2 * self.hard_pairs > self.unseen_count {
            return bad("hard_pairs", "need 1 <= 2 * hard_pairs <= unseen_count");
        }
        if !(self.affinity_gap > 0.0 && self.affinity_gap < 1.0) {
            return bad("affinity_gap", "must be in (0, 1)");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale", "must be finite and non-negative");
        }
        if self.visual_dim == 0 || self.n_per_class == 0 {
            return bad("visual_dim", "dimensions and row counts must be positive");
        }
        let rare = self.rare();
        if rare < 1 || rare >= self.semantic_dim {
            return bad("rare_dims", "must leave at least one common attribute");
        }
        if !(self.rare_seen >= 0.0 && self.rare_seen < 1.0) {
            return bad("rare_seen", "must be in [0, 1)");
        }
        if !(self.pair_spread > 0.0 && self.pair_spread < 1.0) {
            return bad("pair_spread", "must be in (0, 1)");
        }
        if let Some(f) = self.shrink_easy {
            if !(f > 0.0 && f <= 1.0) {
                return bad("shrink_easy", "must be in (0, 1]");
            }
            if 2 * self.hard_pairs == self.unseen_count {
                return bad("shrink_easy", "needs at least one easy unseen class");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted: BTreeSet<ClassId>,
    pub pairs: Vec<(ClassId, ClassId)>,
    /// The easy class whose row count was scaled down, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shrunken: Option<ClassId>,
    pub unseen_counts: BTreeMap<ClassId, usize>,
    /// Construction attempt that satisfied every constraint.
    pub attempt: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub bundle: DatasetBundle,
    pub truth: GroundTruth,
    pub w0: Matrix,
}

fn class_name(prefix: char, i: usize, n: usize) -> ClassId {
    let width = n.saturating_sub(1).to_string().len().max(2);
    ClassId::new(format!("{prefix}{i:0width$}"))
}

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

struct Geometry {
    seen: Vec<Vec<f64>>,
    /// Indexed by unseen class position; planted positions are in `pairs`.
    unseen: Vec<Vec<f64>>,
    pairs: Vec<(usize, usize)>,
}

fn draw_geometry(spec: &BenchmarkSpec, rng: &mut StreamRng) -> Geometry {
    let s = spec.semantic_dim;
    let common = s - spec.rare();
    let seen: Vec<Vec<f64>> = (0..spec.seen_count)
        .map(|_| {
            (0..s)
                .map(|d| if d < common { uniform(rng, 0.1, 1.0) } else { uniform(rng, 0.0, spec.rare_seen) })
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..spec.unseen_count).collect();
    order.shuffle(rng);
    let pairs: Vec<(usize, usize)> = (0..spec.hard_pairs).map(|p| (order[2 * p], order[2 * p + 1])).collect();
    let mut unseen = vec![Vec::new(); spec.unseen_count];
    for &(a, b) in &pairs {
        let base: Vec<f64> = (0..s)
            .map(|d| if d < common { uniform(rng, 0.0, 0.3) } else { uniform(rng, 0.5, 1.0) })
            .collect();
        let norm = base.iter().map(|x| x * x).sum::<f64>().sqrt();
        let delta: Vec<f64> = (0..s).map(|_| StandardNormal.sample(rng)).collect();
        let dnorm = delta.iter().map(|x: &f64| x * x).sum::<f64>().sqrt().max(1e-12);
        let partner = base
            .iter()
            .zip(&delta)
            .map(|(x, d)| (x + spec.pair_spread * norm * d / dnorm).max(0.0))
            .collect();
        unseen[a] = base;
        unseen[b] = partner;
    }
    let mix = spec.seen_count.min(3);
    for &u in &order[2 * spec.hard_pairs..] {
        let mut parents: Vec<usize> = (0..spec.seen_count).collect();
        parents.shuffle(rng);
        let weights: Vec<f64> = (0..mix).map(|_| uniform(rng, 0.2, 1.0)).collect();
        let total: f64 = weights.iter().sum();
        unseen[u] = (0..s)
            .map(|d| parents[..mix].iter().zip(&weights).map(|(&p, w)| w * seen[p][d]).sum::<f64>() / total)
            .collect();
    }
    Geometry { seen, unseen, pairs }
}

fn acceptable(spec: &BenchmarkSpec, g: &Geometry, table: &SemanticTable, split: &ClassSplit, unseen: &[ClassId]) -> Result<bool> {
    for &(a, b) in &g.pairs {
        let mutual = cosine_distance(&g.unseen[a], &g.unseen[b])?;
        for m in [a, b] {
            for s in &g.seen {
                if cosine_distance(&g.unseen[m], s)? < mutual + spec.affinity_gap {
                    return Ok(false);
                }
            }
        }
    }
    let scores = ss_scores(table, split)?;
    let planted: BTreeSet<usize> = g.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let worst_planted = planted.iter().map(|&i| scores[&unseen[i]]).fold(f64::NEG_INFINITY, f64::max);
    let best_other = (0..unseen.len())
        .filter(|i| !planted.contains(i))
        .map(|i| scores[&unseen[i]])
        .fold(f64::INFINITY, f64::min);
    Ok(worst_planted < best_other)
}

fn sample_rows(
    w0: &Matrix,
    classes: &[(ClassId, &[f64], usize)],
    noise: f64,
    rng: &mut StreamRng,
) -> Result<FeatureTable> {
    let mut rows = Vec::new();
    for (c, e, n) in classes {
        let mean = w0.mul_vec(e);
        for _ in 0..*n {
            let x: Vec<f32> = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    (m + noise * z) as f32
                })
                .collect();
            rows.push((x, c.clone()));
        }
    }
    FeatureTable::from_rows(w0.rows, rows)
}

pub fn make_benchmark(spec: &BenchmarkSpec) -> Result<Benchmark> {
    spec.validate()?;
    let seen_ids: Vec<ClassId> = (0..spec.seen_count).map(|i| class_name('s', i, spec.seen_count)).collect();
    let unseen_ids: Vec<ClassId> = (0..spec.unseen_count).map(|i| class_name('u', i, spec.unseen_count)).collect();
    let split = ClassSplit::new(seen_ids.clone(), unseen_ids.clone())?;

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng::indexed_substream(spec.seed, rng::BENCHMARK, attempt as u64);
        let g = draw_geometry(spec, &mut rng);
        let entries = seen_ids
            .iter()
            .cloned()
            .zip(g.seen.iter().cloned())
            .chain(unseen_ids.iter().cloned().zip(g.unseen.iter().cloned()));
        let table = match SemanticTable::new(entries) {
            Ok(t) => t,
            Err(Error::ZeroNorm(_)) => continue,
            Err(e) => return Err(e),
        };
        if !acceptable(spec, &g, &table, &split, &unseen_ids)? {
            continue;
        }

        let w0 = Matrix {
            rows: spec.visual_dim,
            cols: spec.semantic_dim,
            data: (0..spec.visual_dim * spec.semantic_dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
        };
        let planted: BTreeSet<usize> = g.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        let shrunken = spec
            .shrink_easy
            .and_then(|_| (0..spec.unseen_count).find(|i| !planted.contains(i)));
        let counts: Vec<usize> = (0..spec.unseen_count)
            .map(|i| match (Some(i) == shrunken, spec.shrink_easy) {
                (true, Some(f)) => ((spec.n_per_class as f64 * f).round() as usize).max(1),
                _ => spec.n_per_class,
            })
            .collect();

        let seen_rows: Vec<(ClassId, &[f64], usize)> = seen_ids
            .iter()
            .zip(&g.seen)
            .map(|(c, e)| (c.clone(), e.as_slice(), spec.n_per_class))
            .collect();
        let unseen_rows: Vec<(ClassId, &[f64], usize)> = unseen_ids
            .iter()
            .zip(&g.unseen)
            .zip(&counts)
            .map(|((c, e), &n)| (c.clone(), e.as_slice(), n))
            .collect();
        let train_seen = sample_rows(&w0, &seen_rows, spec.noise_scale, &mut rng)?;
        let test_unseen = sample_rows(&w0, &unseen_rows, spec.noise_scale, &mut rng)?;
        let test_seen = if spec.test_seen_per_class > 0 {
            let rows: Vec<_> = seen_rows.iter().map(|(c, e, _)| (c.clone(), *e, spec.test_seen_per_class)).collect();
            Some(sample_rows(&w0, &rows, spec.noise_scale, &mut rng)?)
        } else {
            None
        };

        let total: usize = counts.iter().sum();
        let unseen_counts: BTreeMap<ClassId, usize> = unseen_ids.iter().cloned().zip(counts.iter().copied()).collect();
        let priors = unseen_counts.iter().map(|(c, &n)| (c.clone(), n as f64 / total as f64)).collect();
        let bundle = DatasetBundle {
            train_seen,
            test_unseen,
            test_seen,
            semantics: table,
            split,
            class_priors: Some(priors),
        }
        .validate()?;
        let truth = GroundTruth {
            planted: planted.iter().map(|&i| unseen_ids[i].clone()).collect(),
            pairs: g.pairs.iter().map(|&(a, b)| (unseen_ids[a].clone(), unseen_ids[b].clone())).collect(),
            shrunken: shrunken.map(|i| unseen_ids[i].clone()),
            unseen_counts,
            attempt,
        };
        return Ok(Benchmark { bundle, truth, w0 });
    }
    Err(Error::InfeasibleBenchmark { attempts: MAX_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardness::identify_ss;

    #[test]
    fn standard_benchmark_shape() {
        let b = make_benchmark(&BenchmarkSpec::standard(3)).unwrap();
        assert_eq!(b.bundle.train_seen.len(), 600);
        assert_eq!(b.bundle.test_unseen.len(), 400);
        assert_eq!(b.truth.planted.len(), 4);
        let r = identify_ss(&b.bundle.semantics, &b.bundle.split, 4).unwrap();
        assert_eq!(r.hard.iter().cloned().collect::<BTreeSet<_>>(), b.truth.planted);
    }

    #[test]
    fn deterministic() {
        let spec = BenchmarkSpec::standard(11);
        assert_eq!(make_benchmark(&spec).unwrap(), make_benchmark(&spec).unwrap());
    }

    #[test]
    fn noiseless_rows_are_class_means() {
        let mut spec = BenchmarkSpec::standard(5);
        spec.noise_scale = 0.0;
        let b = make_benchmark(&spec).unwrap();
        let t = &b.bundle.test_unseen;
        for i in 0..t.len() {
            let mean = b.w0.mul_vec(b.bundle.semantics.get(t.label(i)).unwrap());
            let expect: Vec<f32> = mean.iter().map(|&m| m as f32).collect();
            assert_eq!(t.row(i), expect.as_slice());
        }
    }

    #[test]
    fn unbalanced_variant() {
        let b = make_benchmark(&BenchmarkSpec::standard(2).unbalanced()).unwrap();
        let c = b.truth.shrunken.clone().unwrap();
        assert!(!b.truth.planted.contains(&c));
        assert_eq!(b.truth.unseen_counts[&c], 5);
        let p = b.bundle.class_priors.as_ref().unwrap();
        assert!((p[&c] - 5.0 / 355.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs() {
        let mut s = BenchmarkSpec::standard(0);
        s.hard_pairs = 5;
        assert!(make_benchmark(&s).is_err());
        let mut s = BenchmarkSpec::standard(0);
        s.affinity_gap = 0.0;
        assert!(make_benchmark(&s).is_err());
    }
}
