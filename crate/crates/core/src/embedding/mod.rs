//! Cluster-based tile embeddings: the autoencoder, its training and
//! whole-level encoding.

pub mod dataset;
pub mod level;
pub mod model;
pub mod train;

pub use dataset::{CteDataset, GmmTargets, LevelSource};
pub use level::{embed_level, load_embeddings, save_embeddings, EmbeddedLevel};
pub use model::{CteBatch, CteConfig, CteForward, CteModel, LossParts, LossWeights, CONTEXT_LEN, LATENT};
pub use train::{dataset_loss, evaluate_cte, macro_f1, separation_ratio, train_cte, EpochRecord, EvalReport, TrainConfig, TrainReport};

use crate::corpus::TileSample;
use crate::error::Result;
use crate::scalar::Scalar;

/// Single-sample batch; `target` may be empty when the cluster loss is off.
pub fn sample_batch<T: Scalar>(sample: &TileSample<T>, target: &[T]) -> CteBatch<T> {
    CteBatch { n: 1, context: sample.context.data().to_vec(), affordance: sample.affordance_scalars(), edges: sample.edges.as_scalars(), target: target.to_vec() }
}

/// Forward pass on one sample.
pub fn cte_forward<T: Scalar>(model: &CteModel<T>, sample: &TileSample<T>) -> Result<CteForward<T>> {
    model.forward(&sample_batch(sample, &[]))
}

/// Weighted loss of one sample against a one-hot (or soft) GMM target.
pub fn cte_loss<T: Scalar>(model: &CteModel<T>, outputs: &CteForward<T>, sample: &TileSample<T>, gmm_target: &[T]) -> Result<LossParts> {
    model.loss(outputs, &sample_batch(sample, gmm_target))
}
