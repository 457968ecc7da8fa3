//! Waveforms, decibel measurement, STFT/ISTFT and WAV files.

mod stft;
mod wav;

pub use stft::{Spectrogram, Stft, StftConfig, WindowKind};
pub use wav::{read_wav, write_wav, WavWriteReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio at a fixed sample rate.
///
/// Samples are nominally in `[-1, 1]`. Attack code may exceed that range
/// transiently; [`write_wav`] clips and reports how many samples it touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Waveform<T: Real> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Largest absolute sample value, zero for an empty waveform.
    pub fn peak(&self) -> T {
        peak(&self.samples)
    }

    pub fn peak_db(&self) -> Result<T> {
        peak_db(&self.samples)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self::new(self.samples.iter().map(|&s| s * factor).collect(), self.sample_rate)
    }

    /// Sample-wise sum; panics if the lengths differ.
    pub fn plus(&self, other: &[T]) -> Self {
        assert_eq!(self.samples.len(), other.len(), "waveform length mismatch");
        Self::new(
            self.samples.iter().zip(other).map(|(&a, &b)| a + b).collect(),
            self.sample_rate,
        )
    }

    pub fn cast<U: Real>(&self) -> Waveform<U> {
        Waveform::new(
            self.samples.iter().map(|s| U::lit(s.to_f64_lossy())).collect(),
            self.sample_rate,
        )
    }
}

pub fn peak<T: Real>(samples: &[T]) -> T {
    samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
}

/// Peak level in dB: `20 * log10(max_i |x_i|)`.
pub fn peak_db<T: Real>(samples: &[T]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let p = peak(samples);
    if p == T::zero() {
        return Err(Error::AllZero);
    }
    Ok(T::lit(20.0) * p.log10())
}

/// Largest amplitude `a` with `20 * log10(a) <= limit_db`, verified after rounding.
pub fn amplitude_at_most_db<T: Real>(limit_db: T) -> T {
    let mut a = T::lit(10.0).powf(limit_db / T::lit(20.0));
    while a > T::zero() && T::lit(20.0) * a.log10() > limit_db {
        a = a * (T::one() - T::epsilon());
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wf(v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    #[test]
    fn peak_db_known_values() {
        assert_eq!(peak_db(&wf(&[0.2, -1.0, 0.3])).unwrap(), 0.0);
        assert!((peak_db(&wf(&[0.05, 0.1])).unwrap() + 20.0).abs() < 1e-12);
        // 20*log10(0.5) = -6.020599913279624 (mpmath, 30 digits)
        assert!((peak_db(&wf(&[-0.5, 0.25])).unwrap() + 6.020599913279624).abs() < 1e-3);
    }

    #[test]
    fn peak_db_errors() {
        assert!(matches!(peak_db(&wf(&[0.0, 0.0])), Err(Error::AllZero)));
        assert!(matches!(peak_db::<f64>(&[]), Err(Error::Empty)));
    }

    #[test]
    fn amplitude_bound_respects_limit() {
        for limit in [-3.0f64, -10.0, -17.3, -40.123456] {
            let a = amplitude_at_most_db(limit);
            assert!(20.0 * a.log10() <= limit);
            assert!((20.0 * a.log10() - limit).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn peak_db_scaling(xs in prop::collection::vec(-1.0f64..1.0, 1..64), c in 1e-3f64..1e3) {
            prop_assume!(peak(&xs) > 1e-6);
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let lhs = peak_db(&scaled).unwrap();
            let rhs = peak_db(&xs).unwrap() + 20.0 * c.log10();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
