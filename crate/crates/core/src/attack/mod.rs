//! Targeted adversarial perturbations: plain, dropout-robust,
//! denoising-robust and masked by a psychoacoustic threshold.

pub mod config;
pub mod forge;

pub use config::{AttackConfig, AttackKind, MaskMode};
pub use forge::{Adam, Assessment, AttackResult, Forge, MaskingTerm, Objective};
