//! The recommendation network, shared embeddings and attribute masking.

mod embedding;
mod masking;
mod rn;
mod train;

pub use embedding::{belief_embedding, refresh_attribute_embeddings, AttributeEmbeddings, EmbeddingStore};
pub use masking::{mask_attributes, MaskedAttributeVector};
pub use rn::{rank_candidates, rec_loss, rec_loss_grad, Rn, RnArch, SessionScorer};
pub use train::{evaluate_rn, train_rn, RnEvent, RnTrainConfig};
