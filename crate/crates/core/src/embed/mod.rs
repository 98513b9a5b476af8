//! Siamese CNN embedding trained with a contrastive loss.

pub mod layers;
mod loss;
mod model;
mod preprocess;
mod train;

pub use layers::Tensor;
pub use loss::{batch_loss, contrastive_loss, loss_gradients, pair_distance, Pair, PairBatch};
pub use model::{Architecture, ConvStage, EmbeddingModel, ForwardCache, InputNorm};
pub use preprocess::{crop_and_resize, finish, preprocess, resize_area, Augment};
pub use train::{
    embed_all, embedding_container, eval_input, load_embedding, load_split, save_embedding,
    train_on_images, train_siamese, Adam, LabeledImage, TrainConfig, TrainLog,
};
