//! Reference base models.
//!
//! The hardness pipelines only need three capabilities: an embedding that maps
//! semantics to visual prototypes, a conditional generator, and a classifier
//! trained on generated features. The implementations here are the simplest
//! members of each family (ridge regression, diagonal Gaussian, softmax
//! regression), all deterministic under a fixed seed.

pub mod blob;
pub mod classifier;
pub mod embedding;
pub mod generator;
pub mod linalg;

pub use blob::ModelBlob;
pub use classifier::{
    cross_entropy_with_grad, fit_classifier, predict_classifier, Classifier, SoftmaxParams, TrainConfig,
};
pub use embedding::{classify_embedding, classify_embedding_batch, fit_embedding, EmbeddingModel};
pub use generator::{fit_generator, fit_generator_rows, sample_generator, ConditionalRow, GenerativeModel};
pub use linalg::Matrix;

use serde::{Deserialize, Serialize};

/// Which base model a transductive or analysis run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Embedding,
    Generative,
}

impl std::str::FromStr for BaseKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "embedding" => Ok(BaseKind::Embedding),
            "generative" => Ok(BaseKind::Generative),
            other => Err(crate::error::Error::invalid(
                "base_model",
                format!("expected embedding or generative, got {other:?}"),
            )),
        }
    }
}
