use serde::{Deserialize, Serialize};

use super::EngineError;

/// Which adversarial loss drives training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// Cross-entropy on sigmoid patch scores, the log-likelihood objective.
    LogLikelihood,
    /// Squared error on raw patch scores.
    LeastSquares,
}

/// Layer widths and depths of the four networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    /// Channels after the generator stem; doubled by each downsampling.
    pub gen_channels: usize,
    /// Stride-2 encoder convolutions (mirrored by transposed decoder convolutions).
    pub gen_downsamplings: usize,
    pub res_blocks: usize,
    /// Kernel of the generator's first and last convolution (odd).
    pub stem_kernel: usize,
    /// Channels of the first discriminator convolution.
    pub disc_channels: usize,
    /// Stride-2 discriminator convolutions.
    pub disc_downsamplings: usize,
    pub leaky_slope: f32,
    /// Standard deviation of the Gaussian weight initialisation.
    pub init_std: f32,
    /// Add each generator's input to its pre-tanh output, so an untrained
    /// generator starts near the identity instead of near grey.
    pub input_skip: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            gen_channels: 16,
            gen_downsamplings: 2,
            res_blocks: 6,
            stem_kernel: 7,
            disc_channels: 16,
            disc_downsamplings: 3,
            leaky_slope: 0.2,
            init_std: 0.02,
            input_skip: false,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if self.gen_channels == 0 || self.disc_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.stem_kernel % 2 == 0 {
            return bad("stem_kernel must be odd");
        }
        if self.disc_downsamplings == 0 {
            return bad("discriminator needs at least one strided convolution");
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("init_std must be positive");
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return bad("leaky_slope must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda_cycle: f64,
    pub lambda_identity: f64,
    pub adversarial_form: AdversarialForm,
    pub learning_rate: f32,
    pub adam_beta1: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    pub pool_size: usize,
    /// Discriminator target for real images before noise.
    pub real_label: f32,
    pub label_noise_amplitude: f32,
    pub seed: u64,
    /// Save a checkpoint every this many steps; 0 saves only at epoch ends.
    pub checkpoint_every: u64,
    /// Labelled domain-A images scored after each epoch to pick the best checkpoint.
    pub validation_images: usize,
    pub validation_tolerance_px: f64,
    pub arch: ArchConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_cycle: 10.0,
            lambda_identity: 5.0,
            adversarial_form: AdversarialForm::LeastSquares,
            learning_rate: 2e-4,
            adam_beta1: 0.5,
            batch_size: 1,
            epochs: 20,
            max_steps: None,
            pool_size: 50,
            real_label: 0.9,
            label_noise_amplitude: 0.05,
            seed: 0,
            checkpoint_every: 0,
            validation_images: 16,
            validation_tolerance_px: 3.0,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        for (name, w) in [("lambda_cycle", self.lambda_cycle), ("lambda_identity", self.lambda_identity)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(&format!("{name} must be a finite non-negative weight"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad("adam_beta1 must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.real_label > 0.0 && self.real_label <= 1.0) {
            return bad("real_label must lie in (0, 1]");
        }
        if !(self.label_noise_amplitude >= 0.0) || self.real_label + self.label_noise_amplitude > 1.0 && self.adversarial_form == AdversarialForm::LogLikelihood {
            return bad("label noise must be non-negative and keep targets inside [0, 1]");
        }
        if !(self.validation_tolerance_px >= 0.0) {
            return bad("validation_tolerance_px must be non-negative");
        }
        self.arch.validate()
    }
}
