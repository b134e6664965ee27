//! Core of the trainingless band-filtering toolkit.
//!
//! * [`signal`]: synthesis, Butterworth low-pass design and the low-pass + noise channel.
//! * [`features`]: STFT / mel filterbank / log-mel front end.
//! * [`tensor`]: activation tensors with `fold` / `unfold` between token and grid layouts.
//! * [`encoder`]: a small spectrogram transformer with taps and interventions.
//! * [`adaptation`]: silent-reference capture and band substitution.
//! * [`probes`]: time/frequency differentiation and kurtosis metrics.

pub mod adaptation;
pub mod container;
pub mod encoder;
pub mod error;
pub mod features;
pub mod probes;
pub mod ridge;
pub mod signal;
pub mod tensor;
pub mod wav;

pub use adaptation::{
    adapted_forward, apply_tf_filter, capture_silent_reference, map_cutoff_bin, AdaptationSpec,
    FilterMode, SilentReference,
};
pub use encoder::{classify, init_model, EncoderModel, ForwardOutput, Intervention, ModelConfig, Site};
pub use error::{Error, Result};
pub use features::{log_mel, FeatureConfig, LogMelExtractor, LogMelSpectrogram};
pub use signal::{corrupt, CorruptionSpec, Waveform};
pub use tensor::{fold, unfold, ActivationTensor};
