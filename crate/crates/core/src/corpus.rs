//! Synthetic speech-like corpus: each symbol is a two-formant tone burst.
//!
//! Utterances are a noise-only lead-in (used by the spectral-subtraction noise
//! estimate), one tone burst per character separated by short gaps, and a
//! tail, all with additive Gaussian noise at a configurable SNR.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::asr::{Alphabet, Transcript};
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub utterances: usize,
    pub min_chars: usize,
    pub max_chars: usize,
    pub char_ms: f64,
    pub gap_ms: f64,
    pub lead_ms: f64,
    pub tail_ms: f64,
    pub snr_db: f64,
    /// Peak amplitude of a tone burst.
    pub amplitude: f64,
    /// Relative random jitter applied to formant frequencies and durations.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: crate::audio::DEFAULT_SAMPLE_RATE,
            utterances: 100,
            min_chars: 3,
            max_chars: 6,
            char_ms: 100.0,
            gap_ms: 25.0,
            lead_ms: 150.0,
            tail_ms: 100.0,
            snr_db: 25.0,
            amplitude: 0.3,
            jitter: 0.02,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_chars == 0 || self.min_chars > self.max_chars {
            return Err(Error::InvalidParameter(format!("chars range {}..={}", self.min_chars, self.max_chars)));
        }
        if self.sample_rate == 0 || self.char_ms <= 0.0 || self.amplitude <= 0.0 || self.amplitude > 1.0 {
            return Err(Error::InvalidParameter("synthesis timing or amplitude".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::InvalidParameter(format!("jitter {}", self.jitter)));
        }
        Ok(())
    }

    /// Expected duration in seconds for an utterance of `chars` characters (no jitter).
    pub fn nominal_duration(&self, chars: usize) -> f64 {
        (self.lead_ms + self.tail_ms + chars as f64 * (self.char_ms + self.gap_ms)) / 1000.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance<T: Real> {
    pub id: String,
    pub transcript: Transcript,
    pub wave: Waveform<T>,
}

/// Formant pair `(f1, f2)` in Hz for each alphabet symbol, all distinct.
pub fn formant_table(alphabet: &Alphabet) -> Vec<(f64, f64)> {
    const F1: [f64; 6] = [320.0, 470.0, 630.0, 800.0, 980.0, 1170.0];
    const F2: [f64; 4] = [1550.0, 2150.0, 2800.0, 3500.0];
    (0..alphabet.len())
        .map(|i| {
            let f1 = F1[i % F1.len()];
            let f2 = F2[(i / F1.len()) % F2.len()] + 40.0 * (i % 3) as f64;
            (f1, f2)
        })
        .collect()
}

pub struct Synthesizer<'a> {
    config: &'a SynthConfig,
    alphabet: &'a Alphabet,
    formants: Vec<(f64, f64)>,
}

impl<'a> Synthesizer<'a> {
    pub fn new(config: &'a SynthConfig, alphabet: &'a Alphabet) -> Result<Self> {
        config.validate()?;
        if alphabet.len() > 24 {
            return Err(Error::InvalidParameter("synthesizer supports at most 24 symbols".into()));
        }
        Ok(Self { config, alphabet, formants: formant_table(alphabet) })
    }

    fn ms(&self, ms: f64) -> usize {
        (ms * f64::from(self.config.sample_rate) / 1000.0).round() as usize
    }

    /// Random text: interior spaces allowed, no leading or trailing space.
    pub fn random_text(&self, rng: &mut ChaCha8Rng) -> String {
        let len = rng.gen_range(self.config.min_chars..=self.config.max_chars);
        let symbols = self.alphabet.symbols();
        let letters: Vec<char> = symbols.iter().copied().filter(|&c| c != ' ').collect();
        (0..len)
            .map(|i| {
                let pool = if i == 0 || i + 1 == len { &letters } else { symbols };
                *pool.choose(rng).expect("non-empty alphabet")
            })
            .collect()
    }

    /// Renders `text`; deterministic for a given rng state.
    pub fn render<T: Real>(&self, text: &str, rng: &mut ChaCha8Rng) -> Result<Waveform<T>> {
        let labels = self.alphabet.encode(text)?;
        let cfg = self.config;
        let sr = f64::from(cfg.sample_rate);
        let mut clean = vec![0.0f64; self.ms(cfg.lead_ms)];
        let ramp = self.ms(10.0).max(1);
        for &label in &labels {
            let (f1, f2) = self.formants[label - 1];
            let j = |rng: &mut ChaCha8Rng| 1.0 + rng.gen_range(-cfg.jitter..=cfg.jitter);
            let (f1, f2) = (f1 * j(rng), f2 * j(rng));
            let len = self.ms(cfg.char_ms * j(rng)).max(2 * ramp + 1);
            let phase1 = rng.gen_range(0.0..std::f64::consts::TAU);
            let phase2 = rng.gen_range(0.0..std::f64::consts::TAU);
            for n in 0..len {
                let env = if n < ramp {
                    0.5 - 0.5 * (std::f64::consts::PI * n as f64 / ramp as f64).cos()
                } else if n >= len - ramp {
                    0.5 - 0.5 * (std::f64::consts::PI * (len - 1 - n) as f64 / ramp as f64).cos()
                } else {
                    1.0
                };
                let t = n as f64 / sr;
                let v = 0.6 * (std::f64::consts::TAU * f1 * t + phase1).sin()
                    + 0.4 * (std::f64::consts::TAU * f2 * t + phase2).sin();
                clean.push(cfg.amplitude * env * v);
            }
            clean.extend(std::iter::repeat(0.0).take(self.ms(cfg.gap_ms)));
        }
        clean.extend(std::iter::repeat(0.0).take(self.ms(cfg.tail_ms)));

        let active: Vec<f64> = clean.iter().copied().filter(|v| *v != 0.0).collect();
        let rms = if active.is_empty() {
            cfg.amplitude / 2f64.sqrt()
        } else {
            (active.iter().map(|v| v * v).sum::<f64>() / active.len() as f64).sqrt()
        };
        let sigma = rms / 10f64.powf(cfg.snr_db / 20.0);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let samples = clean
            .into_iter()
            .map(|v| T::lit((v + normal.sample(rng)).clamp(-1.0, 1.0)))
            .collect();
        Ok(Waveform::new(samples, cfg.sample_rate))
    }

    pub fn corpus<T: Real>(&self) -> Result<Vec<Utterance<T>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        (0..self.config.utterances)
            .map(|i| {
                let text = self.random_text(&mut rng);
                let wave = self.render(&text, &mut rng)?;
                Ok(Utterance { id: format!("utt{i:04}"), transcript: Transcript(text), wave })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formants_are_distinct() {
        let table = formant_table(&Alphabet::default());
        for i in 0..table.len() {
            for j in 0..i {
                assert_ne!(table[i], table[j]);
            }
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        let cfg = SynthConfig { utterances: 5, ..SynthConfig::default() };
        let alphabet = Alphabet::default();
        let synth = Synthesizer::new(&cfg, &alphabet).unwrap();
        let a = synth.corpus::<f64>().unwrap();
        let b = synth.corpus::<f64>().unwrap();
        assert_eq!(a, b);
        for u in &a {
            let n = u.transcript.char_len();
            assert!((3..=6).contains(&n));
            assert!(!u.transcript.as_str().starts_with(' ') && !u.transcript.as_str().ends_with(' '));
            assert!(u.wave.samples.iter().all(|s| s.abs() <= 1.0));
            let nominal = cfg.nominal_duration(n);
            assert!((u.wave.duration_secs() - nominal).abs() < 0.05 * nominal);
        }
    }

    #[test]
    fn lead_in_is_noise_only() {
        let cfg = SynthConfig { utterances: 1, snr_db: 30.0, ..SynthConfig::default() };
        let alphabet = Alphabet::default();
        let u = &Synthesizer::new(&cfg, &alphabet).unwrap().corpus::<f64>().unwrap()[0];
        let lead = &u.wave.samples[..2000];
        let peak_lead = lead.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak_lead < 0.05, "lead-in peak {peak_lead}");
        assert!(u.wave.peak() > 0.2);
    }

    #[test]
    fn zero_utterances() {
        let cfg = SynthConfig { utterances: 0, ..SynthConfig::default() };
        let alphabet = Alphabet::default();
        assert!(Synthesizer::new(&cfg, &alphabet).unwrap().corpus::<f64>().unwrap().is_empty());
    }
}
