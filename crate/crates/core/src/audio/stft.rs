use std::fmt;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann.
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients<T: Real>(self, n: usize) -> Vec<T> {
        match self {
            WindowKind::Rectangular => vec![T::one(); n],
            WindowKind::Hann => (0..n)
                .map(|i| {
                    let phase = T::TAU() * T::from_usize_lossy(i) / T::from_usize_lossy(n);
                    T::lit(0.5) - T::lit(0.5) * phase.cos()
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_size: 512, hop: 128, window: WindowKind::Hann }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    /// Number of full frames; no padding, the trailing partial frame is dropped.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.window_size).then(|| (len - self.window_size) / self.hop + 1)
    }
}

/// Complex STFT frames, `frame_count x (N/2 + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram<T: Real> {
    pub frames: Array2<Complex<T>>,
    pub config: StftConfig,
    /// Length of the analysed signal; the inverse reproduces this length.
    pub signal_len: usize,
}

impl<T: Real> Spectrogram<T> {
    pub fn frame_count(&self) -> usize {
        self.frames.nrows()
    }

    pub fn bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn power(&self) -> Array2<T> {
        self.frames.mapv(|c| c.norm_sqr())
    }

    /// One row per frame: `frame_index,bin_0_re,bin_0_im,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "frame_index")?;
        for k in 0..self.bins() {
            write!(out, ",bin_{k}_re,bin_{k}_im")?;
        }
        writeln!(out)?;
        for (m, row) in self.frames.outer_iter().enumerate() {
            write!(out, "{m}")?;
            for c in row {
                write!(out, ",{:e},{:e}", c.re, c.im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// STFT engine with cached FFT plans and window.
///
/// Besides the forward and inverse transforms it provides the two adjoints
/// needed to backpropagate through either direction.
#[derive(Clone)]
pub struct Stft<T: Real> {
    config: StftConfig,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Stft<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft").field("config", &self.config).finish()
    }
}

impl<T: Real> Stft<T> {
    pub fn new(config: StftConfig) -> Result<Self> {
        if config.window_size < 2 || config.hop == 0 || config.hop > config.window_size {
            return Err(Error::InvalidParameter(format!(
                "stft geometry window={} hop={}",
                config.window_size, config.hop
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            window: config.window.coefficients(config.window_size),
            forward: planner.plan_fft_forward(config.window_size),
            inverse: planner.plan_fft_inverse(config.window_size),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    pub fn frame_count(&self, len: usize) -> Result<usize> {
        self.config
            .frame_count(len)
            .ok_or(Error::InputTooShort { needed: self.config.window_size, got: len })
    }

    pub fn forward(&self, x: &[T]) -> Result<Spectrogram<T>> {
        let n = self.config.window_size;
        let frames = self.frame_count(x.len())?;
        let bins = self.config.bins();
        let mut out = Array2::zeros((frames, bins));
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.forward.get_inplace_scratch_len()];
        for m in 0..frames {
            let start = m * self.config.hop;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(self.window[j] * x[start + j], T::zero());
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                out[(m, k)] = buf[k];
            }
        }
        Ok(Spectrogram { frames: out, config: self.config, signal_len: x.len() })
    }

    /// Pulls a gradient on the complex bins back to the signal.
    ///
    /// `grad[m, k]` holds `dL/dRe + i dL/dIm` of bin `k` in frame `m`.
    pub fn forward_adjoint(&self, grad: &Array2<Complex<T>>, signal_len: usize) -> Result<Vec<T>> {
        let n = self.config.window_size;
        let frames = self.frame_count(signal_len)?;
        if grad.dim() != (frames, self.config.bins()) {
            return Err(Error::Shape(format!(
                "stft gradient {:?} vs geometry ({frames}, {})",
                grad.dim(),
                self.config.bins()
            )));
        }
        let mut out = vec![T::zero(); signal_len];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.inverse.get_inplace_scratch_len()];
        for m in 0..frames {
            buf.iter_mut().for_each(|b| *b = Complex::new(T::zero(), T::zero()));
            for k in 0..self.config.bins() {
                buf[k] = grad[(m, k)];
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = m * self.config.hop;
            for j in 0..n {
                out[start + j] += self.window[j] * buf[j].re;
            }
        }
        Ok(out)
    }

    fn overlap_norm(&self, frames: usize, len: usize) -> Vec<T> {
        let mut norm = vec![T::zero(); len];
        for m in 0..frames {
            let start = m * self.config.hop;
            for (j, w) in self.window.iter().enumerate() {
                norm[start + j] += *w * *w;
            }
        }
        // Clamp the denominator near the edges so modified spectra are not blown up
        // where only a window tail covers the signal.
        let floor = norm.iter().copied().fold(T::zero(), T::max) * T::lit(0.1);
        norm.iter()
            .map(|&d| if floor > T::zero() { d.max(floor).recip() } else { T::zero() })
            .collect()
    }

    fn check_geometry(&self, spec_config: &StftConfig, frames: usize, bins: usize, len: usize) -> Result<()> {
        if *spec_config != self.config
            || bins != self.config.bins()
            || self.config.frame_count(len) != Some(frames)
        {
            return Err(Error::Shape(format!(
                "spectrogram {frames}x{bins} for signal length {len} does not match {:?}",
                self.config
            )));
        }
        Ok(())
    }

    /// Weighted overlap-add inverse (least-squares). Interior samples are
    /// reconstructed exactly; edge samples with little window coverage are
    /// attenuated and uncovered trailing samples are 0.
    pub fn inverse(&self, spec: &Spectrogram<T>) -> Result<Vec<T>> {
        let (frames, bins) = spec.frames.dim();
        self.check_geometry(&spec.config, frames, bins, spec.signal_len)?;
        let n = self.config.window_size;
        let inv_norm = self.overlap_norm(frames, spec.signal_len);
        let mut out = vec![T::zero(); spec.signal_len];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.inverse.get_inplace_scratch_len()];
        let scale = T::from_usize_lossy(n).recip();
        for m in 0..frames {
            fill_hermitian(&mut buf, spec.frames.row(m).iter().copied(), n);
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = m * self.config.hop;
            for j in 0..n {
                out[start + j] += self.window[j] * buf[j].re * scale;
            }
        }
        out.iter_mut().zip(&inv_norm).for_each(|(o, s)| *o *= *s);
        Ok(out)
    }

    /// Adjoint of [`Stft::inverse`]: maps `dL/dy` to `dL/dRe + i dL/dIm` per bin.
    pub fn inverse_adjoint(&self, grad: &[T], frames: usize) -> Result<Array2<Complex<T>>> {
        let n = self.config.window_size;
        if self.config.frame_count(grad.len()) != Some(frames) {
            return Err(Error::Shape(format!("{frames} frames for signal length {}", grad.len())));
        }
        let inv_norm = self.overlap_norm(frames, grad.len());
        let bins = self.config.bins();
        let mut out = Array2::zeros((frames, bins));
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.forward.get_inplace_scratch_len()];
        let inv_n = T::from_usize_lossy(n).recip();
        for m in 0..frames {
            let start = m * self.config.hop;
            for j in 0..n {
                let g = self.window[j] * grad[start + j] * inv_norm[start + j];
                buf[j] = Complex::new(g, T::zero());
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                let c = if k == 0 || 2 * k == n { inv_n } else { inv_n + inv_n };
                out[(m, k)] = buf[k] * c;
            }
        }
        Ok(out)
    }
}

/// Expands a half spectrum into a full Hermitian-symmetric buffer.
fn fill_hermitian<T: Real>(buf: &mut [Complex<T>], half: impl Iterator<Item = Complex<T>>, n: usize) {
    buf.iter_mut().for_each(|b| *b = Complex::new(T::zero(), T::zero()));
    for (k, c) in half.enumerate() {
        buf[k] = c;
        if k > 0 && k < n - k {
            buf[n - k] = c.conj();
        }
    }
}
