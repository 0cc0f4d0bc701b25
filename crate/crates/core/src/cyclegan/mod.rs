//! Cycle-consistent GAN that paints the pupil with a color marker.

mod bundle;
mod config;
mod losses;
mod model;
mod pool;
mod report;
mod trainer;

pub use bundle::{
    denormalize, image_to_tensor, tensor_to_image, Direction, Manifest, ModelBundle, TensorEntry, TensorKind,
    CHECKPOINT_FORMAT_VERSION, MANIFEST_FILE,
};
pub use config::{AdversarialForm, ArchConfig, TrainingConfig};
pub use losses::{
    adversarial_objective, composite_generator_loss, cycle_consistency_loss, identity_loss,
    least_squares_discriminator_loss, patch_probabilities, GeneratorLosses,
};
pub use model::{
    build_discriminator, build_generator, discriminator_layers, generator_layers, Discriminator, Generator,
    NetworkRole,
};
pub use pool::ImagePool;
pub use report::{smoothed, LossReport, LOSS_CSV_HEADER};
pub use trainer::{
    detection_success_rate, fine_tune, generator_losses, generator_pass, resolve_freeze, train, BestMarker,
    FrozenMasks, GeneratorPass, TrainOutcome, Trainer, BEST_MARKER_FILE, CHECKPOINT_DIR, LOSS_CSV_FILE,
    TRAIN_LOG_FILE,
};

use crate::dataset::DatasetError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("value outside the open interval (0, 1): {0}")]
    DomainError(String),
    #[error("non-finite loss in {what}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonFiniteLoss { step: Option<u64>, what: String },
    #[error("domain {0} has no images")]
    EmptyDomain(String),
    #[error("freeze entry {0:?} matches no layer")]
    UnknownLayerName(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
