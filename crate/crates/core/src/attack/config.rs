use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asr::DropoutScope;
use crate::dsp::{MaskingConfig, SubtractionConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Cw,
    Dr,
    Nrr,
    Ia,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::Cw, AttackKind::Dr, AttackKind::Nrr, AttackKind::Ia];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Cw => "cw",
            AttackKind::Dr => "dr",
            AttackKind::Nrr => "nrr",
            AttackKind::Ia => "ia",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown attack type {s:?}")))
    }
}

/// Dropout term of the dropout-robust objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// A new mask every iteration.
    #[default]
    Fresh,
    /// One mask for the whole optimisation.
    Fixed,
}

/// Learning rates are in waveform units (full scale is 1.0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub target: String,
    /// Initial margin: `dB(delta) <= dB(x) - tau`.
    pub tau_initial_db: f64,
    /// Margin added after each success.
    pub tau_step_db: f64,
    /// Stop widening the margin beyond this.
    pub tau_max_db: f64,
    pub beta: f64,
    pub p_dr: f64,
    pub mask_mode: MaskMode,
    pub dropout_scope: DropoutScope,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub ia_stage1_learning_rate: f64,
    pub ia_stage2_learning_rate: f64,
    pub ia_stage2_iterations: usize,
    pub alpha_initial: f64,
    pub alpha_growth: f64,
    /// Iterations between alpha adjustments.
    pub alpha_interval: usize,
    /// Realizations used to judge dropout robustness of a result.
    pub robustness_realizations: usize,
    pub seed: u64,
    pub subtraction: SubtractionConfig,
    pub masking: MaskingConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            target: "ok".into(),
            tau_initial_db: 10.0,
            tau_step_db: 2.0,
            tau_max_db: 40.0,
            beta: 1.0,
            p_dr: 0.05,
            mask_mode: MaskMode::Fresh,
            dropout_scope: DropoutScope::DenseOnly,
            learning_rate: 2e-3,
            max_iterations: 1000,
            ia_stage1_learning_rate: 2e-3,
            ia_stage2_learning_rate: 2e-4,
            ia_stage2_iterations: 3000,
            alpha_initial: 0.05,
            alpha_growth: 1.2,
            alpha_interval: 10,
            robustness_realizations: 10,
            seed: 11,
            subtraction: SubtractionConfig::default(),
            masking: MaskingConfig::default(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("attack {what}")));
        if !(self.tau_initial_db >= 0.0) || !(self.tau_step_db >= 0.0) {
            return bad("tau must be non-negative");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if !(0.0..1.0).contains(&self.p_dr) {
            return bad("p_DR must lie in [0, 1)");
        }
        if !(self.alpha_initial >= 0.0) || !(self.alpha_growth >= 1.0) || self.alpha_interval == 0 {
            return bad("alpha schedule");
        }
        if !(self.learning_rate > 0.0) || !(self.ia_stage1_learning_rate > 0.0) || !(self.ia_stage2_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.robustness_realizations == 0 {
            return bad("robustness_realizations must be positive");
        }
        Ok(())
    }
}
