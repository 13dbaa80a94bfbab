//! Unified multilingual speech/text translation toolkit.
//!
//! One transformer model serves speech recognition (ASR), text translation
//! (NMT) and speech translation (ST): modality-specific frontends feed a
//! shared semantic encoder/decoder, trained with a three-phase task
//! curriculum, CTC auxiliary supervision, feature-space augmentation and
//! word-level knowledge distillation, and decoded with (ensemble) beam
//! search.
//!
//! The numeric core is generic over the scalar type via [`Scalar`]
//! (`f32`/`f64`); concrete aliases for the common instantiations live at the
//! crate root.

pub mod audio;
pub mod augment;
pub mod config;
pub mod data;
pub mod decode;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod params;
pub mod prepare;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;

pub use scalar::Scalar;

/// Tensor over the training precision used by the CLI.
pub type Tensor32 = tensor::Tensor<f32>;
/// Tensor over the precision used by the numeric test oracles.
pub type Tensor64 = tensor::Tensor<f64>;
/// Parameter store in training precision.
pub type ParameterStore32 = params::ParameterStore<f32>;
/// Parameter store in oracle precision.
pub type ParameterStore64 = params::ParameterStore<f64>;
/// Acoustic feature grid in training precision.
pub type FeatureMatrix32 = audio::FeatureMatrix<f32>;
/// Acoustic feature grid in oracle precision.
pub type FeatureMatrix64 = audio::FeatureMatrix<f64>;

/// Errors for every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(String),
    #[error("features: {0}")]
    Features(String),
    #[error("vocab: {0}")]
    Vocab(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("model: {0}")]
    Model(String),
    #[error("loss: {0}")]
    Loss(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("train: {0}")]
    Train(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("decode: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by invalid user input (configs, manifests,
    /// vocabulary files) rather than runtime failures. The CLI maps these to
    /// exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Data(_) | Error::Vocab(_)
        )
    }
}
