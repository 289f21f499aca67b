//! Hard-class identification and hardness-aware boosting for zero-shot
//! learning.

pub mod base;
pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod hardness;
pub mod hars;
pub mod harst;
pub mod io;
pub mod models;
pub mod rng;

pub use data::{ClassId, ClassSplit, DatasetBundle, FeatureTable, LabeledSample, PseudoLabelSet, SemanticTable};
pub use error::{Error, Result};
