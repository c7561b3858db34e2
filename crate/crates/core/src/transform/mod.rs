//! Adjacency-reinforced self-attention mapping source embeddings to
//! KG-finetuned ones.
//!
//! The forward pass is the plain product `(QKᵀ + A)·V` with no softmax or
//! scaling, where `K`, `Q`, `V` are independent affine maps of the input.

mod forward;
mod params;
mod train;

pub use forward::{apply, self_attention_forward, ForwardCache};
pub use params::{init_params, AttentionParams, PARAMS_MAGIC};
pub use train::{
    batch_loss, dataset_loss, embedding_error, loss_gradient, train_transformer, EpochLoss, TrainPair,
    TransformTrainConfig, TransformTrainOutcome,
};
