//! Graph embeddings from random walks, knowledge-graph embedding models, and
//! a learned transformation between the two.

pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kg;
pub mod linalg;
pub mod scalar;
pub mod seed;
pub mod transform;
pub mod walk;

pub use embedding::{EmbeddingMatrix, Provenance};
pub use error::{Error, Result};
pub use graph::{Graph, Triple};
pub use kg::{KgModel, KgModelKind};
pub use linalg::Matrix;
pub use scalar::Scalar;
pub use transform::{AttentionParams, TrainPair, TransformTrainConfig};

pub type EmbeddingMatrix64 = EmbeddingMatrix<f64>;
pub type EmbeddingMatrix32 = EmbeddingMatrix<f32>;
pub type KgModel64 = KgModel<f64>;
pub type KgModel32 = KgModel<f32>;
pub type AttentionParams64 = AttentionParams<f64>;
pub type AttentionParams32 = AttentionParams<f32>;
pub type TrainPair64 = TrainPair<f64>;
pub type Matrix64 = Matrix<f64>;
