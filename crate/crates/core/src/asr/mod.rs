//! Toy CTC character recognizer: log-mel frontend, dense/recurrent acoustic
//! model with seeded dropout, CTC loss, greedy decoding and training.

pub mod alphabet;
pub mod ctc;
pub mod decode;
pub mod features;
pub mod model;
pub mod realize;
pub mod recognizer;
pub mod train;

pub use alphabet::{Alphabet, Transcript, BLANK};
pub use ctc::{ctc_loss, ctc_loss_from_posteriors, min_frames, CtcLoss};
pub use decode::{greedy_decode, greedy_labels};
pub use features::{FrontendConfig, MelFrontend};
pub use model::{AcousticModel, CtcPosteriors, DropoutScope, DropoutSpec, ModelGeometry};
pub use realize::{realize, Realizations};
pub use recognizer::{Recognizer, WaveLoss};
pub use train::{mean_loss, train, Example, TrainConfig, TrainReport};
