//! Waveform-level view of a frontend plus acoustic model: transcription and
//! the CTC loss gradient with respect to the input samples.

use ndarray::Array2;

use super::alphabet::Transcript;
use super::ctc::ctc_loss;
use super::decode::greedy_decode;
use super::features::{FrontendConfig, MelFrontend};
use super::model::{AcousticModel, CtcPosteriors, DropoutSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Recognizer<T: Real> {
    pub frontend: MelFrontend<T>,
    pub model: AcousticModel<T>,
}

/// Loss, waveform gradient and the posteriors of the same forward pass.
#[derive(Clone, Debug)]
pub struct WaveLoss<T: Real> {
    pub loss: T,
    pub grad: Vec<T>,
    pub posteriors: CtcPosteriors<T>,
}

impl<T: Real> Recognizer<T> {
    pub fn new(frontend_config: FrontendConfig, model: AcousticModel<T>) -> Result<Self> {
        if frontend_config.n_mels != model.geometry.n_features {
            return Err(Error::Shape(format!(
                "frontend yields {} features, model expects {}",
                frontend_config.n_mels, model.geometry.n_features
            )));
        }
        Ok(Self { frontend: MelFrontend::new(frontend_config)?, model })
    }

    pub fn featurize(&self, x: &[T]) -> Result<Array2<T>> {
        self.frontend.forward(x)
    }

    pub fn posteriors(&self, x: &[T], dropout: Option<&DropoutSpec>) -> Result<CtcPosteriors<T>> {
        self.model.forward(&self.frontend.forward(x)?, dropout)
    }

    pub fn transcribe(&self, x: &[T], dropout: Option<&DropoutSpec>) -> Result<Transcript> {
        Ok(greedy_decode(&self.posteriors(x, dropout)?.rows, &self.model.alphabet))
    }

    pub fn encode(&self, target: &Transcript) -> Result<Vec<usize>> {
        self.model.alphabet.encode(target.as_str())
    }

    /// CTC loss of `target` on `x` and its gradient with respect to `x`.
    pub fn loss_and_grad(&self, x: &[T], target: &[usize], dropout: Option<&DropoutSpec>) -> Result<WaveLoss<T>> {
        let (feats, cache) = self.frontend.forward_cached(x)?;
        let tape = self.model.forward_tape(&feats, dropout)?;
        let ctc = ctc_loss(&tape.logits, target)?;
        let (_, d_feats) = self.model.backward(&tape, &ctc.grad, false)?;
        let grad = self.frontend.backward(&cache, &d_feats)?;
        Ok(WaveLoss { loss: ctc.loss, grad, posteriors: tape.posteriors() })
    }

    pub fn loss(&self, x: &[T], target: &[usize], dropout: Option<&DropoutSpec>) -> Result<T> {
        let logits = self.model.logits(&self.frontend.forward(x)?, dropout)?;
        Ok(ctc_loss(&logits, target)?.loss)
    }
}
