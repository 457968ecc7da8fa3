//! Targeted waveform attacks: projected Adam on an additive perturbation
//! under a peak-level constraint relative to the original.

use serde::{Deserialize, Serialize};

use super::config::{AttackConfig, AttackKind, MaskMode};
use crate::asr::{DropoutSpec, Recognizer, Transcript};
use crate::audio::{amplitude_at_most_db, peak, peak_db, Waveform};
use crate::dsp::{MaskingModel, MaskingThreshold, SpectralSubtractor};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Adam on a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    lr: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(len: usize, lr: T) -> Self {
        Self { lr, m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0 }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
        self.step += 1;
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + T::lit(Self::EPS));
        }
    }
}

/// Objective value at one iterate with its gradient on the perturbation.
#[derive(Clone, Debug)]
pub struct Objective<T: Real> {
    pub value: T,
    pub grad: Vec<T>,
    /// Dropout-off CTC loss of the target.
    pub plain_loss: T,
    /// Dropout-off transcription of `x + delta`, from the same forward pass.
    pub plain: Transcript,
    /// Transcription under the dropout term's mask (dropout-robust objective only).
    pub dropout: Option<Transcript>,
    /// Transcription after denoising (denoising-robust objective only).
    pub denoised: Option<Transcript>,
    pub penalty: Option<T>,
}

impl<T: Real> Objective<T> {
    /// Every transcription computed for this iterate equals `target`.
    pub fn decodes_to(&self, target: &str) -> bool {
        let hit = |t: &Option<Transcript>| t.as_ref().map_or(true, |t| t.as_str() == target);
        self.plain.as_str() == target && hit(&self.dropout) && hit(&self.denoised)
    }
}

/// Masking term of the imperceptible attack: weight and threshold of `x`.
#[derive(Clone, Copy, Debug)]
pub struct MaskingTerm<'a, T: Real> {
    pub alpha: T,
    pub theta: &'a MaskingThreshold<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AttackResult<T: Real> {
    pub kind: AttackKind,
    pub target: Transcript,
    pub delta: Waveform<T>,
    pub iterations_used: usize,
    /// Margin `tau` in force when the returned perturbation was produced.
    pub tau_db: f64,
    pub success_plain: bool,
    /// Majority of robustness realizations at `p_DR` decode to the target.
    pub success_dropout: bool,
    pub success_denoised: bool,
    /// Fraction of robustness realizations decoding to the target.
    pub dropout_target_rate: f64,
    /// `dB(x) - dB(delta)`; infinite for a zero perturbation.
    pub final_db_gap: f64,
    pub masking_penalty_stage1: Option<f64>,
    pub masking_penalty_final: Option<f64>,
    pub transcript: Transcript,
}

impl<T: Real> AttackResult<T> {
    /// The returned perturbation satisfies `dB(delta) <= dB(x) - tau`.
    pub fn satisfies_constraint(&self, x: &[T]) -> Result<bool> {
        if peak(&self.delta.samples) == T::zero() {
            return Ok(true);
        }
        Ok(peak_db(&self.delta.samples)? <= peak_db(x)? - T::lit(self.tau_db))
    }
}

/// Outcome flags for an adversarial example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub transcript: Transcript,
    /// Plain decode equals the target.
    pub decodes: bool,
    pub success_dropout: bool,
    pub dropout_target_rate: f64,
    pub success_denoised: bool,
    /// `dB(x) - dB(delta)`; infinite for a zero perturbation.
    pub db_gap: f64,
}

struct Descent<T: Real> {
    delta: Vec<T>,
    tau: f64,
    succeeded: bool,
    iterations: usize,
}

pub struct Forge<'a, T: Real> {
    recognizer: &'a Recognizer<T>,
    subtractor: SpectralSubtractor<T>,
    masking: MaskingModel<T>,
    config: AttackConfig,
}

impl<'a, T: Real> Forge<'a, T> {
    pub fn new(recognizer: &'a Recognizer<T>, config: AttackConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            recognizer,
            subtractor: SpectralSubtractor::new(config.subtraction)?,
            masking: MaskingModel::new(config.masking)?,
            config,
        })
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    pub fn subtractor(&self) -> &SpectralSubtractor<T> {
        &self.subtractor
    }

    pub fn masking(&self) -> &MaskingModel<T> {
        &self.masking
    }

    pub fn target_labels(&self) -> Result<Vec<usize>> {
        self.recognizer.encode(&Transcript::from(self.config.target.as_str()))
    }

    fn dropout_seed(&self, iteration: usize) -> u64 {
        match self.config.mask_mode {
            MaskMode::Fresh => self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ iteration as u64,
            MaskMode::Fixed => self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        }
    }

    /// Attack objective at `x + delta`. The dropout term of the
    /// dropout-robust objective uses `dropout_seed`.
    pub fn objective(
        &self,
        kind: AttackKind,
        x: &[T],
        delta: &[T],
        target: &[usize],
        dropout_seed: u64,
        masking: Option<MaskingTerm<'_, T>>,
    ) -> Result<Objective<T>> {
        if x.len() != delta.len() {
            return Err(Error::Shape(format!("signal {} vs perturbation {}", x.len(), delta.len())));
        }
        let adv: Vec<T> = x.iter().zip(delta).map(|(a, b)| *a + *b).collect();
        let rec = self.recognizer;
        let plain = rec.loss_and_grad(&adv, target, None)?;
        let transcript = crate::asr::greedy_decode(&plain.posteriors.rows, &rec.model.alphabet);
        let beta = T::lit(self.config.beta);
        let mut value = plain.loss;
        let mut grad = plain.grad;
        let mut penalty = None;
        let mut dropout = None;
        let mut denoised = None;
        match kind {
            AttackKind::Cw => {}
            AttackKind::Dr => {
                if self.config.beta > 0.0 {
                    let spec = DropoutSpec::new(self.config.p_dr, dropout_seed).with_scope(self.config.dropout_scope);
                    let term = rec.loss_and_grad(&adv, target, Some(&spec))?;
                    dropout = Some(crate::asr::greedy_decode(&term.posteriors.rows, &rec.model.alphabet));
                    value += beta * term.loss;
                    axpy(&mut grad, beta, &term.grad);
                }
            }
            AttackKind::Nrr => {
                if self.config.beta > 0.0 {
                    let (clean, cache) = self.subtractor.denoise_cached(&adv)?;
                    let term = rec.loss_and_grad(&clean, target, None)?;
                    denoised = Some(crate::asr::greedy_decode(&term.posteriors.rows, &rec.model.alphabet));
                    value += beta * term.loss;
                    let back = self.subtractor.backward(&cache, &term.grad)?;
                    axpy(&mut grad, beta, &back);
                }
            }
            AttackKind::Ia => {
                if let Some(term) = masking {
                    let (p, g) = self.masking.penalty_and_grad(delta, term.theta)?;
                    if term.alpha > T::zero() {
                        value += term.alpha * p;
                        axpy(&mut grad, term.alpha, &g);
                    }
                    penalty = Some(p);
                }
            }
        }
        Ok(Objective { value, grad, plain_loss: plain.loss, plain: transcript, dropout, denoised, penalty })
    }

    fn bound(&self, x_db: T, tau: f64) -> T {
        amplitude_at_most_db(x_db - T::lit(tau))
    }

    fn project(x: &[T], delta: &mut [T], bound: T) {
        for (d, &xi) in delta.iter_mut().zip(x) {
            *d = d.max(-bound).min(bound);
            *d = d.max(-T::one() - xi).min(T::one() - xi);
        }
    }

    /// Projected descent; with `anneal` the margin widens after every
    /// success, otherwise it stops at the first success.
    fn descend(&self, kind: AttackKind, x: &[T], target: &[usize], lr: f64, anneal: bool) -> Result<Descent<T>> {
        let cfg = &self.config;
        let x_db = peak_db(x)?;
        let mut tau = cfg.tau_initial_db;
        let mut bound = self.bound(x_db, tau);
        let mut delta = vec![T::zero(); x.len()];
        let mut adam = Adam::new(x.len(), T::lit(lr));
        let mut best: Option<(Vec<T>, f64)> = None;
        let mut iterations = 0;
        for it in 0..cfg.max_iterations {
            iterations = it + 1;
            let obj = self.objective(kind, x, &delta, target, self.dropout_seed(it), None)?;
            if !obj.value.is_finite() {
                return Err(Error::Divergence { step: it, detail: format!("{kind} objective {}", obj.value) });
            }
            // the dropout-robust attack succeeds only when robust at p_DR
            if obj.decodes_to(&cfg.target) && (kind != AttackKind::Dr || self.robustness(x, &delta)?.0) {
                best = Some((delta.clone(), tau));
                if !anneal || tau + cfg.tau_step_db > cfg.tau_max_db {
                    break;
                }
                tau += cfg.tau_step_db;
                bound = self.bound(x_db, tau);
                Self::project(x, &mut delta, bound);
            }
            adam.step(&mut delta, &obj.grad);
            Self::project(x, &mut delta, bound);
            debug_assert!(peak(&delta) <= bound);
        }
        Ok(match best {
            Some((delta, tau)) => Descent { delta, tau, succeeded: true, iterations },
            None => Descent { delta, tau, succeeded: false, iterations },
        })
    }

    pub fn cw_attack(&self, x: &Waveform<T>) -> Result<AttackResult<T>> {
        self.run(AttackKind::Cw, x)
    }

    pub fn dr_attack(&self, x: &Waveform<T>) -> Result<AttackResult<T>> {
        self.run(AttackKind::Dr, x)
    }

    pub fn nrr_attack(&self, x: &Waveform<T>) -> Result<AttackResult<T>> {
        self.run(AttackKind::Nrr, x)
    }

    pub fn ia_attack(&self, x: &Waveform<T>) -> Result<AttackResult<T>> {
        self.run(AttackKind::Ia, x)
    }

    pub fn run(&self, kind: AttackKind, x: &Waveform<T>) -> Result<AttackResult<T>> {
        let target = self.target_labels()?;
        let frames = self.recognizer.frontend.frame_count(x.len())?;
        let required = crate::asr::min_frames(&target);
        if required > frames {
            return Err(Error::InfeasibleTarget { required, available: frames });
        }
        if kind != AttackKind::Ia {
            let d = self.descend(kind, &x.samples, &target, self.config.learning_rate, true)?;
            return self.finish(kind, x, d, None, None);
        }
        let stage1 = self.descend(kind, &x.samples, &target, self.config.ia_stage1_learning_rate, false)?;
        if !stage1.succeeded {
            return self.finish(kind, x, stage1, None, None);
        }
        let theta = self.masking.threshold(&x.samples)?;
        let (p1, _) = self.masking.penalty_and_grad(&stage1.delta, &theta)?;
        let (stage2, p_best) = self.refine(x, &target, &theta, stage1.delta, stage1.tau, p1)?;
        let used = stage1.iterations + stage2.iterations;
        self.finish(kind, x, Descent { iterations: used, ..stage2 }, Some(p1.to_f64_lossy()), Some(p_best.to_f64_lossy()))
    }

    /// Second imperceptible-attack stage: grows the masking weight while the
    /// target still decodes and keeps the lowest-penalty decoding iterate.
    fn refine(
        &self,
        x: &Waveform<T>,
        target: &[usize],
        theta: &MaskingThreshold<T>,
        start: Vec<T>,
        tau: f64,
        start_penalty: T,
    ) -> Result<(Descent<T>, T)> {
        let cfg = &self.config;
        let bound = self.bound(peak_db(&x.samples)?, tau);
        let mut alpha = T::lit(cfg.alpha_initial);
        let growth = T::lit(cfg.alpha_growth);
        let mut delta = start.clone();
        let mut best = (start, start_penalty);
        let mut adam = Adam::new(x.len(), T::lit(cfg.ia_stage2_learning_rate));
        let mut iterations = 0;
        for it in 0..cfg.ia_stage2_iterations {
            iterations = it + 1;
            let obj = self.objective(AttackKind::Ia, &x.samples, &delta, target, 0, Some(MaskingTerm { alpha, theta }))?;
            if !obj.value.is_finite() {
                return Err(Error::Divergence { step: it, detail: format!("ia objective {}", obj.value) });
            }
            let decodes = obj.plain.as_str() == cfg.target;
            let penalty = obj.penalty.expect("masking term supplied");
            if decodes && penalty < best.1 {
                best = (delta.clone(), penalty);
            }
            if (it + 1) % cfg.alpha_interval == 0 {
                alpha = if decodes { alpha * growth } else { alpha / growth };
            }
            adam.step(&mut delta, &obj.grad);
            Self::project(&x.samples, &mut delta, bound);
        }
        Ok((Descent { delta: best.0, tau, succeeded: true, iterations }, best.1))
    }

    /// Majority vote of the robustness realizations at `p_DR`, and the hit rate.
    pub fn robustness(&self, x: &[T], delta: &[T]) -> Result<(bool, f64)> {
        let cfg = &self.config;
        let adv: Vec<T> = x.iter().zip(delta).map(|(a, b)| *a + *b).collect();
        let feats = self.recognizer.featurize(&adv)?;
        let mut hits = 0;
        for i in 0..cfg.robustness_realizations {
            let spec = DropoutSpec::new(cfg.p_dr, (cfg.seed ^ 0x0D20_5EED) ^ i as u64).with_scope(cfg.dropout_scope);
            let post = self.recognizer.model.forward(&feats, Some(&spec))?;
            if crate::asr::greedy_decode(&post.rows, &self.recognizer.model.alphabet).as_str() == cfg.target {
                hits += 1;
            }
        }
        let n = cfg.robustness_realizations;
        Ok((2 * hits > n, hits as f64 / n as f64))
    }

    /// Evaluates `x + delta` as a finished adversarial example.
    pub fn assess(&self, x: &Waveform<T>, delta: &[T]) -> Result<Assessment> {
        let cfg = &self.config;
        let rec = self.recognizer;
        let adv = x.plus(delta);
        let transcript = rec.transcribe(&adv.samples, None)?;
        let (success_dropout, dropout_target_rate) = self.robustness(&x.samples, delta)?;
        let denoised = self.subtractor.denoise(&adv.samples)?;
        let success_denoised = rec.transcribe(&denoised, None)?.as_str() == cfg.target;
        let db_gap = if peak(delta) == T::zero() {
            f64::INFINITY
        } else {
            (x.peak_db()? - peak_db(delta)?).to_f64_lossy()
        };
        Ok(Assessment {
            decodes: transcript.as_str() == cfg.target,
            transcript,
            success_dropout,
            dropout_target_rate,
            success_denoised,
            db_gap,
        })
    }

    fn finish(
        &self,
        kind: AttackKind,
        x: &Waveform<T>,
        d: Descent<T>,
        penalty_stage1: Option<f64>,
        penalty_final: Option<f64>,
    ) -> Result<AttackResult<T>> {
        let a = self.assess(x, &d.delta)?;
        Ok(AttackResult {
            kind,
            target: Transcript::from(self.config.target.as_str()),
            delta: Waveform::new(d.delta, x.sample_rate),
            iterations_used: d.iterations,
            tau_db: d.tau,
            success_plain: d.succeeded && a.decodes,
            success_dropout: a.success_dropout,
            success_denoised: a.success_denoised,
            dropout_target_rate: a.dropout_target_rate,
            final_db_gap: a.db_gap,
            masking_penalty_stage1: penalty_stage1,
            masking_penalty_final: penalty_final,
            transcript: a.transcript,
        })
    }
}

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}
