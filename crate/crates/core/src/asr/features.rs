//! Log-mel features with an exact vector-Jacobian product back to the waveform.

use ndarray::Array2;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::audio::{Stft, StftConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Energies below this are floored before the log; the floor passes no gradient.
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: crate::audio::DEFAULT_SAMPLE_RATE,
            stft: StftConfig::default(),
            n_mels: 20,
            f_min: 50.0,
            f_max: 8000.0,
            log_floor: 1e-10,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-style mel filterbank, `bins x n_mels`.
pub fn mel_filterbank<T: Real>(cfg: &FrontendConfig) -> Array2<T> {
    let bins = cfg.stft.bins();
    let n = cfg.stft.window_size as f64;
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max.min(f64::from(cfg.sample_rate) / 2.0)));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    Array2::from_shape_fn((bins, cfg.n_mels), |(k, m)| {
        let f = k as f64 * f64::from(cfg.sample_rate) / n;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        let w = if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        };
        T::lit(w)
    })
}

/// Saved forward state for [`MelFrontend::backward`].
#[derive(Clone, Debug)]
pub struct FrontendCache<T: Real> {
    spectrum: Array2<Complex<T>>,
    energies: Array2<T>,
    signal_len: usize,
}

#[derive(Clone, Debug)]
pub struct MelFrontend<T: Real> {
    config: FrontendConfig,
    stft: Stft<T>,
    filters: Array2<T>,
    floor: T,
}

impl<T: Real> MelFrontend<T> {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        if config.n_mels == 0 || config.f_min >= config.f_max {
            return Err(Error::InvalidParameter(format!(
                "mel frontend n_mels={} range {}..{}",
                config.n_mels, config.f_min, config.f_max
            )));
        }
        Ok(Self {
            config,
            stft: Stft::new(config.stft)?,
            filters: mel_filterbank(&config),
            floor: T::lit(config.log_floor),
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn stft(&self) -> &Stft<T> {
        &self.stft
    }

    pub fn n_features(&self) -> usize {
        self.config.n_mels
    }

    pub fn frame_count(&self, len: usize) -> Result<usize> {
        self.stft.frame_count(len)
    }

    /// `ln(max(mel energy, floor))` per frame, shape `frames x n_mels`.
    pub fn forward(&self, x: &[T]) -> Result<Array2<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &[T]) -> Result<(Array2<T>, FrontendCache<T>)> {
        let spec = self.stft.forward(x)?;
        let energies = spec.power().dot(&self.filters);
        let floor = self.floor;
        let feats = energies.mapv(|e| e.max(floor).ln());
        Ok((feats, FrontendCache { spectrum: spec.frames, energies, signal_len: x.len() }))
    }

    /// Gradient of a scalar with respect to the waveform, given its gradient on the features.
    pub fn backward(&self, cache: &FrontendCache<T>, grad: &Array2<T>) -> Result<Vec<T>> {
        if grad.dim() != cache.energies.dim() {
            return Err(Error::Shape(format!(
                "feature gradient {:?} vs features {:?}",
                grad.dim(),
                cache.energies.dim()
            )));
        }
        let floor = self.floor;
        let mut d_energy = grad.clone();
        d_energy.zip_mut_with(&cache.energies, |g, &e| *g = if e > floor { *g / e } else { T::zero() });
        let d_power = d_energy.dot(&self.filters.t());
        let two = T::lit(2.0);
        let mut d_spec = cache.spectrum.clone();
        d_spec.zip_mut_with(&d_power, |s, &g| *s = *s * (two * g));
        self.stft.forward_adjoint(&d_spec, cache.signal_len)
    }
}
