//! Adversarial audio against a toy CTC recognizer, and a dropout-uncertainty
//! detector for it.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, with `*32` variants for `f32`.

pub mod asr;
pub mod attack;
pub mod audio;
pub mod corpus;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod scalar;
pub mod uncertainty;

pub use error::{Error, Result};

pub type Waveform = audio::Waveform<f64>;
pub type Waveform32 = audio::Waveform<f32>;
pub type AcousticModel = asr::AcousticModel<f64>;
pub type AcousticModel32 = asr::AcousticModel<f32>;
pub type Recognizer = asr::Recognizer<f64>;
pub type Recognizer32 = asr::Recognizer<f32>;
pub type CtcPosteriors = asr::CtcPosteriors<f64>;
