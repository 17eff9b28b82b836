//! Hashed n-gram dual encoder with average pooling, the in-batch
//! contrastive loss, the triplet hinge loss and an adaptive trainer.

mod loss;
mod model;
mod train;

pub use loss::{
    cl_loss, contrastive_from_embeddings, hinge_from_embeddings, hinge_loss, loss_for, LossConfig,
    LossKind, Similarity,
};
pub use model::{embed_corpus, EncodedText, EncoderConfig, EncoderModel, Gradients, ParamBlock};
pub use train::{train, LossTrace, TrainConfig, TrainOutcome, TrainState};
