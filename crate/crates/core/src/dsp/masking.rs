//! Frequency-domain psychoacoustic masking: a simplified MPEG-1 model 1
//! with tonal maskers only, and the perturbation PSD measured against it.

use std::io::Write;

use ndarray::Array2;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::audio::{Stft, StftConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Full-scale level: a full-scale sine under the analysis window reads this many dB.
pub const FULL_SCALE_DB: f64 = 96.0;
pub const PSD_FLOOR_DB: f64 = -200.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingConfig {
    pub sample_rate: u32,
    pub stft: StftConfig,
    /// Exponent of the power-law combination of individual thresholds.
    pub combination_exponent: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self { sample_rate: crate::audio::DEFAULT_SAMPLE_RATE, stft: StftConfig::default(), combination_exponent: 0.3 }
    }
}

pub fn bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan()
}

/// Absolute threshold of hearing in dB SPL; frequencies below 20 Hz use the 20 Hz value.
pub fn absolute_threshold(f: f64) -> f64 {
    let k = f.max(20.0) / 1000.0;
    3.64 * k.powf(-0.8) - 6.5 * (-0.6 * (k - 3.3).powi(2)).exp() + 1e-3 * k.powi(4)
}

/// Framewise `dB` matrix, `frames x (N/2 + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DbMatrix<T: Real> {
    pub values: Array2<T>,
}

impl<T: Real> DbMatrix<T> {
    /// Long format: `frame,bin,value_db`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "frame,bin,value_db")?;
        for ((m, k), v) in self.values.indexed_iter() {
            writeln!(out, "{m},{k},{v:e}")?;
        }
        Ok(())
    }
}

pub type PsdEstimate<T> = DbMatrix<T>;
pub type MaskingThreshold<T> = DbMatrix<T>;

#[derive(Clone, Debug)]
pub struct MaskingModel<T: Real> {
    config: MaskingConfig,
    stft: Stft<T>,
    /// Squared window-transform peak of a full-scale sine.
    reference_power: f64,
    bark: Vec<f64>,
    ath: Vec<f64>,
}

impl<T: Real> MaskingModel<T> {
    pub fn new(config: MaskingConfig) -> Result<Self> {
        if !(config.combination_exponent > 0.0) {
            return Err(Error::InvalidParameter(format!("combination exponent {}", config.combination_exponent)));
        }
        let stft: Stft<T> = Stft::new(config.stft)?;
        let window_sum: f64 = stft.window().iter().map(|w: &T| w.to_f64_lossy()).sum();
        let bins = config.stft.bins();
        let hz = |k: usize| k as f64 * f64::from(config.sample_rate) / config.stft.window_size as f64;
        Ok(Self {
            config,
            stft,
            reference_power: (window_sum / 2.0).powi(2),
            bark: (0..bins).map(|k| bark(hz(k))).collect(),
            ath: (0..bins).map(|k| absolute_threshold(hz(k))).collect(),
        })
    }

    pub fn config(&self) -> &MaskingConfig {
        &self.config
    }

    pub fn stft(&self) -> &Stft<T> {
        &self.stft
    }

    /// Absolute threshold of hearing per bin.
    pub fn hearing_threshold(&self) -> &[f64] {
        &self.ath
    }

    fn power_to_db(&self, power: f64) -> f64 {
        if power <= 0.0 {
            return PSD_FLOOR_DB;
        }
        (FULL_SCALE_DB + 10.0 * (power / self.reference_power).log10()).max(PSD_FLOOR_DB)
    }

    /// Framewise `96 + 10 log10(|X|^2 / P_ref)` floored at -200 dB.
    pub fn psd(&self, x: &[T]) -> Result<PsdEstimate<T>> {
        let spec = self.stft.forward(x)?;
        Ok(DbMatrix { values: spec.frames.mapv(|c| T::lit(self.power_to_db(c.norm_sqr().to_f64_lossy()))) })
    }

    pub fn threshold(&self, x: &[T]) -> Result<MaskingThreshold<T>> {
        let spec = self.stft.forward(x)?;
        let bins = spec.bins();
        let mut theta = Array2::zeros((spec.frame_count(), bins));
        for (m, row) in spec.frames.rows().into_iter().enumerate() {
            let psd: Vec<f64> = row.iter().map(|c| self.power_to_db(c.norm_sqr().to_f64_lossy())).collect();
            let frame = self.frame_threshold(&psd);
            for (k, v) in frame.into_iter().enumerate() {
                theta[(m, k)] = T::lit(v);
            }
        }
        Ok(DbMatrix { values: theta })
    }

    /// Bin offsets a tonal masker must exceed by 7 dB, by frequency region.
    fn neighbourhood(&self, k: usize) -> std::ops::RangeInclusive<usize> {
        let f = k as f64 * f64::from(self.config.sample_rate) / self.config.stft.window_size as f64;
        if f < 5500.0 {
            2..=2
        } else if f < 11000.0 {
            2..=3
        } else {
            2..=6
        }
    }

    /// Tonal maskers of one frame as `(bin, level_db)`, after decimation.
    pub fn tonal_maskers(&self, psd: &[f64]) -> Vec<(usize, f64)> {
        let bins = psd.len();
        let mut maskers = Vec::new();
        for k in 1..bins.saturating_sub(1) {
            if psd[k] <= psd[k - 1] || psd[k] < psd[k + 1] {
                continue;
            }
            let tonal = self.neighbourhood(k).all(|d| {
                let lo = k.checked_sub(d).map_or(true, |j| psd[k] >= psd[j] + 7.0);
                let hi = (k + d >= bins) || psd[k] >= psd[k + d] + 7.0;
                lo && hi
            });
            if !tonal {
                continue;
            }
            let level = 10.0 * (k - 1..=k + 1).map(|j| 10f64.powf(psd[j] / 10.0)).sum::<f64>().log10();
            if level >= self.ath[k] {
                maskers.push((k, level));
            }
        }
        // within 0.5 Bark only the stronger masker survives; ties keep the lower bin
        let mut kept: Vec<(usize, f64)> = Vec::with_capacity(maskers.len());
        for (k, level) in maskers {
            match kept.last_mut() {
                Some(last) if self.bark[k] - self.bark[last.0] < 0.5 => {
                    if level > last.1 {
                        *last = (k, level);
                    }
                }
                _ => kept.push((k, level)),
            }
        }
        kept
    }

    /// Global threshold for one frame given its PSD in dB.
    pub fn frame_threshold(&self, psd: &[f64]) -> Vec<f64> {
        let maskers = self.tonal_maskers(psd);
        let alpha = self.config.combination_exponent;
        (0..psd.len())
            .map(|i| {
                if maskers.is_empty() {
                    return self.ath[i];
                }
                // intensities raised to alpha, in the dB domain: 10^(alpha * L / 10)
                let mut acc = 10f64.powf(alpha * self.ath[i] / 10.0);
                for &(j, level) in &maskers {
                    let dz = self.bark[i] - self.bark[j];
                    let spread = if dz >= 0.0 { (-27.0 + 0.37 * (level - 40.0).max(0.0)) * dz } else { 27.0 * dz };
                    let individual = level - 6.025 - 0.275 * self.bark[j] + spread;
                    acc += 10f64.powf(alpha * individual / 10.0);
                }
                10.0 * acc.log10() / alpha
            })
            .collect()
    }

    /// `sum_k max(p_delta - theta, 0)` averaged over frames.
    pub fn penalty(&self, psd: &PsdEstimate<T>, theta: &MaskingThreshold<T>) -> Result<T> {
        masking_penalty(&psd.values, &theta.values)
    }

    /// Penalty of perturbation `delta` against `theta` and its gradient with respect to `delta`.
    pub fn penalty_and_grad(&self, delta: &[T], theta: &MaskingThreshold<T>) -> Result<(T, Vec<T>)> {
        let spec = self.stft.forward(delta)?;
        if spec.frames.dim() != theta.values.dim() {
            return Err(Error::Shape(format!("psd {:?} vs threshold {:?}", spec.frames.dim(), theta.values.dim())));
        }
        let frames = T::from_usize_lossy(spec.frame_count());
        let scale = T::lit(10.0 / std::f64::consts::LN_10) / frames;
        let mut total = T::zero();
        let mut grad = Array2::from_elem(spec.frames.dim(), Complex::new(T::zero(), T::zero()));
        for ((m, k), c) in spec.frames.indexed_iter() {
            let power = c.norm_sqr().to_f64_lossy();
            let p = self.power_to_db(power);
            let excess = p - theta.values[(m, k)].to_f64_lossy();
            if excess > 0.0 {
                total += T::lit(excess);
                if p > PSD_FLOOR_DB {
                    // d/dS of 10 log10 |S|^2 is 20 S / (ln 10 |S|^2)
                    grad[(m, k)] = *c * (scale * T::lit(2.0 / power));
                }
            }
        }
        let g = self.stft.forward_adjoint(&grad, delta.len())?;
        Ok((total / frames, g))
    }
}

/// `sum over frames and bins of max(p - theta, 0)`, divided by the frame count.
pub fn masking_penalty<T: Real>(psd: &Array2<T>, theta: &Array2<T>) -> Result<T> {
    if psd.dim() != theta.dim() {
        return Err(Error::Shape(format!("psd {:?} vs threshold {:?}", psd.dim(), theta.dim())));
    }
    if psd.nrows() == 0 {
        return Err(Error::Empty);
    }
    let mut total = T::zero();
    ndarray::Zip::from(psd).and(theta).for_each(|&p, &t| total += (p - t).max(T::zero()));
    Ok(total / T::from_usize_lossy(psd.nrows()))
}
