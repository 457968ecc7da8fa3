//! Differentiable spectral-subtraction denoiser and psychoacoustic masking.

pub mod denoise;
pub mod masking;

pub use denoise::{NoiseProfile, SpectralSubtractor, SubtractionCache, SubtractionConfig};
pub use masking::{
    absolute_threshold, bark, masking_penalty, DbMatrix, MaskingConfig, MaskingModel, MaskingThreshold, PsdEstimate,
    FULL_SCALE_DB, PSD_FLOOR_DB,
};
