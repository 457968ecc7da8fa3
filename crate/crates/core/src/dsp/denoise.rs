//! Magnitude spectral subtraction with phase kept, differentiable with
//! respect to the input waveform.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::audio::{Spectrogram, Stft, StftConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubtractionConfig {
    pub stft: StftConfig,
    /// Frames at the start of the signal assumed to contain only noise.
    pub leading_frames: usize,
    pub oversubtraction: f64,
    /// Spectral floor as a fraction of the input magnitude.
    pub floor: f64,
}

impl Default for SubtractionConfig {
    fn default() -> Self {
        Self { stft: StftConfig::default(), leading_frames: 6, oversubtraction: 1.0, floor: 0.02 }
    }
}

/// Per-bin noise magnitude, length `N/2 + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NoiseProfile<T: Real> {
    pub magnitude: Array1<T>,
}

impl<T: Real> NoiseProfile<T> {
    pub fn zeros(bins: usize) -> Self {
        Self { magnitude: Array1::zeros(bins) }
    }
}

fn mean_leading_magnitude<T: Real>(frames: &Array2<Complex<T>>, leading: usize) -> Result<Array1<T>> {
    if leading == 0 || frames.nrows() < leading {
        return Err(Error::TooFew { needed: leading.max(1), got: frames.nrows() });
    }
    let lead = frames.slice(ndarray::s![..leading, ..]);
    Ok(lead.map(|c| c.norm()).sum_axis(Axis(0)) / T::from_usize_lossy(leading))
}

/// Saved forward state for the backward pass.
#[derive(Clone, Debug)]
pub struct SubtractionCache<T: Real> {
    spectrum: Array2<Complex<T>>,
    profile: Array1<T>,
    /// Profile was estimated from this same input.
    self_profiled: bool,
    signal_len: usize,
}

#[derive(Clone, Debug)]
pub struct SpectralSubtractor<T: Real> {
    config: SubtractionConfig,
    stft: Stft<T>,
}

impl<T: Real> SpectralSubtractor<T> {
    pub fn new(config: SubtractionConfig) -> Result<Self> {
        if config.oversubtraction < 0.0 || !(0.0..1.0).contains(&config.floor) {
            return Err(Error::InvalidParameter(format!(
                "spectral subtraction oversubtraction={} floor={}",
                config.oversubtraction, config.floor
            )));
        }
        Ok(Self { config, stft: Stft::new(config.stft)? })
    }

    pub fn config(&self) -> &SubtractionConfig {
        &self.config
    }

    pub fn estimate_noise(&self, x: &[T]) -> Result<NoiseProfile<T>> {
        let spec = self.stft.forward(x)?;
        Ok(NoiseProfile { magnitude: mean_leading_magnitude(&spec.frames, self.config.leading_frames)? })
    }

    /// Denoises with a fixed profile.
    pub fn apply(&self, x: &[T], profile: &NoiseProfile<T>) -> Result<Vec<T>> {
        Ok(self.apply_cached(x, profile)?.0)
    }

    pub fn apply_cached(&self, x: &[T], profile: &NoiseProfile<T>) -> Result<(Vec<T>, SubtractionCache<T>)> {
        let spec = self.stft.forward(x)?;
        if profile.magnitude.len() != spec.bins() {
            return Err(Error::Shape(format!("noise profile has {} bins, spectrum {}", profile.magnitude.len(), spec.bins())));
        }
        self.finish(spec, profile.magnitude.clone(), false)
    }

    /// Denoises with a profile estimated from the leading frames of `x` itself.
    pub fn denoise(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.denoise_cached(x)?.0)
    }

    pub fn denoise_cached(&self, x: &[T]) -> Result<(Vec<T>, SubtractionCache<T>)> {
        let spec = self.stft.forward(x)?;
        let profile = mean_leading_magnitude(&spec.frames, self.config.leading_frames)?;
        self.finish(spec, profile, true)
    }

    fn finish(&self, spec: Spectrogram<T>, profile: Array1<T>, self_profiled: bool) -> Result<(Vec<T>, SubtractionCache<T>)> {
        let a = T::lit(self.config.oversubtraction);
        let floor = T::lit(self.config.floor);
        let mut out = spec.frames.clone();
        for mut row in out.rows_mut() {
            for (k, s) in row.iter_mut().enumerate() {
                let mag = s.norm();
                *s = if mag > T::zero() { *s * gain(mag, a * profile[k], floor) } else { Complex::new(T::zero(), T::zero()) };
            }
        }
        let cleaned = Spectrogram { frames: out, config: spec.config, signal_len: spec.signal_len };
        let y = self.stft.inverse(&cleaned)?;
        Ok((y, SubtractionCache { spectrum: spec.frames, profile, self_profiled, signal_len: spec.signal_len }))
    }

    /// Gradient with respect to the input, given the gradient on the output.
    /// Exact on each branch; the floor/subtraction kink takes the floor branch.
    pub fn backward(&self, cache: &SubtractionCache<T>, grad: &[T]) -> Result<Vec<T>> {
        let a = T::lit(self.config.oversubtraction);
        let floor = T::lit(self.config.floor);
        let frames = cache.spectrum.nrows();
        let g_out = self.stft.inverse_adjoint(grad, frames)?;
        let mut g_in = Array2::from_elem(cache.spectrum.dim(), Complex::new(T::zero(), T::zero()));
        let mut g_profile = Array1::<T>::zeros(cache.profile.len());
        for ((m, k), s) in cache.spectrum.indexed_iter() {
            let mag = s.norm();
            if mag <= T::zero() {
                continue;
            }
            let g = g_out[(m, k)];
            let sub = a * cache.profile[k];
            if subtraction_active(mag, sub, floor) {
                // Y = S (1 - sub/|S|); Jacobian (1 - sub/|S|) I + sub S S^T / |S|^3
                let dot = s.re * g.re + s.im * g.im;
                g_in[(m, k)] = g * (T::one() - sub / mag) + *s * (sub * dot / (mag * mag * mag));
                g_profile[k] -= a * dot / mag;
            } else {
                g_in[(m, k)] = g * floor;
            }
        }
        if cache.self_profiled {
            let lead = T::from_usize_lossy(self.config.leading_frames);
            for m in 0..self.config.leading_frames {
                for k in 0..cache.profile.len() {
                    let s = cache.spectrum[(m, k)];
                    let mag = s.norm();
                    if mag > T::zero() {
                        g_in[(m, k)] = g_in[(m, k)] + s * (g_profile[k] / (lead * mag));
                    }
                }
            }
        }
        self.stft.forward_adjoint(&g_in, cache.signal_len)
    }
}

fn subtraction_active<T: Real>(mag: T, sub: T, floor: T) -> bool {
    mag - sub > floor * mag
}

fn gain<T: Real>(mag: T, sub: T, floor: T) -> T {
    if subtraction_active(mag, sub, floor) {
        T::one() - sub / mag
    } else {
        floor
    }
}
