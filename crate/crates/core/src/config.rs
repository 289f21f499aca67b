//! Run configuration files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::base::BaseParams;
use crate::error::{Error, Result};
use crate::hardness::Metric;
use crate::hars::HarsConfig;
use crate::harst::{HarstConfig, SelectionKind};
use crate::models::{BaseKind, TrainConfig};

/// Every knob of every pipeline. Only `K` is required.
///
/// ```
/// let c: hardboost::config::RunConfig = serde_json::from_str(r#"{"K": 3, "beta": 1.5}"#).unwrap();
/// assert_eq!(c.t, 5);
/// assert!(serde_json::from_str::<hardboost::config::RunConfig>(r#"{"K": 3, "gamma": 1}"#).is_err());
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T", default = "default_t")]
    pub t: usize,
    #[serde(default = "default_scale")]
    pub alpha: f64,
    #[serde(default = "default_scale")]
    pub beta: f64,
    #[serde(rename = "S", default = "default_support")]
    pub s: usize,
    #[serde(rename = "N_u", default = "default_n_u")]
    pub n_u: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    #[serde(default = "default_base")]
    pub base_model: BaseKind,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default = "default_selection")]
    pub selection: SelectionKind,
    #[serde(default)]
    pub gzsl: bool,
    /// Rows per true class in the reported confusion matrix.
    #[serde(default)]
    pub confusion_cap: Option<usize>,
    /// `k` values for APR and AMR.
    #[serde(default = "default_diagnostics")]
    pub diagnostics_k: Vec<usize>,
    /// Per-class group size of the contrastive analysis.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
}

fn default_t() -> usize {
    5
}
fn default_scale() -> f64 {
    2.0
}
fn default_support() -> usize {
    2
}
fn default_n_u() -> usize {
    BaseParams::default().n_unseen
}
fn default_metric() -> Metric {
    Metric::Cf
}
fn default_base() -> BaseKind {
    BaseKind::Embedding
}
fn default_ridge() -> f64 {
    BaseParams::default().ridge
}
fn default_selection() -> SelectionKind {
    SelectionKind::Hardness
}
fn default_diagnostics() -> Vec<usize> {
    vec![1, 2]
}
fn default_group_size() -> usize {
    50
}

impl RunConfig {
    pub fn new(k: usize) -> Self {
        serde_json::from_value(serde_json::json!({ "K": k })).expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn base_params(&self) -> BaseParams {
        BaseParams {
            ridge: self.ridge,
            n_unseen: self.n_u,
            classifier: self.classifier.clone(),
        }
    }

    pub fn hars(&self) -> HarsConfig {
        HarsConfig {
            k: self.k,
            support: self.s,
            alpha: self.alpha,
            beta: self.beta,
            n_unseen: self.n_u,
            seed: self.seed,
            ridge: self.ridge,
            classifier: self.classifier.clone(),
        }
    }

    pub fn harst(&self) -> Result<HarstConfig> {
        if self.metric == Metric::Ss {
            return Err(Error::invalid("metric", "the transductive pipeline uses cf or pncf"));
        }
        Ok(HarstConfig {
            t: self.t,
            k: self.k,
            metric: self.metric,
            selection: self.selection,
            base: self.base_model,
            seed: self.seed,
            params: self.base_params(),
            gzsl: self.gzsl,
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_renames() {
        let c = RunConfig::from_json(r#"{"K": 4, "T": 9, "S": 3, "N_u": 100, "metric": "pncf", "base_model": "generative"}"#).unwrap();
        assert_eq!((c.k, c.t, c.s, c.n_u), (4, 9, 3, 100));
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.metric, Metric::Pncf);
        assert_eq!(c.harst().unwrap().base, BaseKind::Generative);
        assert_eq!(c.hars().support, 3);
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        assert!(RunConfig::from_json(r#"{"K": 4, "typo": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"T": 4}"#).is_err());
        assert!(RunConfig::from_json(r#"{"K": 4, "classifier": {"lr": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"K": 4, "metric": "xx"}"#).is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::new(3);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.beta = 1.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
