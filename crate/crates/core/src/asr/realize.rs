//! Repeated seeded dropout inference on one input.

use super::alphabet::Transcript;
use super::decode::greedy_decode;
use super::model::{CtcPosteriors, DropoutScope, DropoutSpec};
use super::recognizer::Recognizer;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Realizations<T: Real> {
    pub transcripts: Vec<Transcript>,
    pub posteriors: Vec<CtcPosteriors<T>>,
    pub rate: f64,
    pub seed: u64,
}

/// Realization `i` uses `DropoutSpec { rate, seed ^ i, scope }`.
pub fn realize<T: Real>(
    recognizer: &Recognizer<T>,
    x: &[T],
    rate: f64,
    count: usize,
    seed: u64,
    scope: DropoutScope,
) -> Result<Realizations<T>> {
    if count < 2 {
        return Err(Error::TooFew { needed: 2, got: count });
    }
    let feats = recognizer.featurize(x)?;
    let mut transcripts = Vec::with_capacity(count);
    let mut posteriors = Vec::with_capacity(count);
    for i in 0..count {
        let spec = DropoutSpec::new(rate, seed ^ i as u64).with_scope(scope);
        let post = recognizer.model.forward(&feats, Some(&spec))?;
        transcripts.push(greedy_decode(&post.rows, &recognizer.model.alphabet));
        posteriors.push(post);
    }
    Ok(Realizations { transcripts, posteriors, rate, seed })
}
