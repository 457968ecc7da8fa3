//! The single JSON experiment document, with one section per stage.

use std::path::{Path, PathBuf};

use audrop_core::asr::{FrontendConfig, ModelGeometry, TrainConfig};
use audrop_core::attack::{AttackConfig, AttackKind};
use audrop_core::corpus::SynthConfig;
use audrop_core::detector::{ClassifierKind, DetectorConfig};
use audrop_core::uncertainty::{FeatureMode, UncertaintyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root of all stage outputs.
    pub out: PathBuf,
    /// Existing corpus directory to use instead of `<out>/corpus`. A
    /// `manifest.csv` is optional; without one every `*.wav` is used with an
    /// empty transcript.
    pub corpus: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self { out: PathBuf::from("run"), corpus: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrSection {
    pub frontend: FrontendConfig,
    pub geometry: ModelGeometry,
    /// Dropout rate used while training the recognizer.
    pub train_dropout_rate: f64,
    pub train: TrainConfig,
}

impl Default for AsrSection {
    fn default() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            geometry: ModelGeometry::default(),
            train_dropout_rate: 0.05,
            train: TrainConfig { epochs: 30, ..TrainConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub classifiers: Vec<ClassifierKind>,
    pub modes: Vec<FeatureMode>,
    /// Attack whose samples train every detector; all attacks are tested.
    pub train_attack: AttackKind,
    /// Drop adversarial samples that do not decode to the target.
    pub successful_only: bool,
    pub split_seed: u64,
    pub model: DetectorConfig,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            classifiers: ClassifierKind::ALL.to_vec(),
            modes: vec![FeatureMode::Char, FeatureMode::Prob],
            train_attack: AttackKind::Dr,
            successful_only: true,
            split_seed: 0,
            model: DetectorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Every stage seed is derived from this one.
    pub seed: u64,
    pub paths: Paths,
    pub alphabet: String,
    pub corpus: SynthConfig,
    pub asr: AsrSection,
    pub attack: AttackConfig,
    /// Attacks run by `report`-oriented helpers and expected by `defend`.
    pub attacks: Vec<AttackKind>,
    pub defense: UncertaintyConfig,
    pub detector: DetectorSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            paths: Paths::default(),
            alphabet: audrop_core::asr::Alphabet::default().symbols().iter().collect(),
            corpus: SynthConfig::default(),
            asr: AsrSection::default(),
            attack: AttackConfig::default(),
            attacks: AttackKind::ALL.to_vec(),
            defense: UncertaintyConfig::default(),
            detector: DetectorSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Applies the top-level seed to every stage.
    pub fn resolve(mut self) -> Self {
        let s = self.seed;
        self.corpus.seed = s;
        self.asr.train.seed = s.wrapping_add(1);
        self.attack.seed = s.wrapping_add(3);
        self.defense.seed = s.wrapping_add(4);
        self.detector.split_seed = s.wrapping_add(5);
        self
    }

    /// Seed for the recognizer's initial weights.
    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn validate(&self) -> CliResult<()> {
        let usage = |e: audrop_core::Error| CliError::Usage(e.to_string());
        self.corpus.validate().map_err(usage)?;
        self.attack.validate().map_err(usage)?;
        self.defense.validate().map_err(usage)?;
        audrop_core::asr::Alphabet::new(&self.alphabet).map_err(usage)?;
        if !(0.0..1.0).contains(&self.asr.train_dropout_rate) {
            return Err(CliError::Usage("asr.train_dropout_rate must lie in [0, 1)".into()));
        }
        if let Some(dir) = &self.paths.corpus {
            if dir.exists() && !dir.is_dir() {
                return Err(CliError::Usage(format!("paths.corpus {} is not a directory", dir.display())));
            }
        }
        Ok(())
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.paths.corpus.clone().unwrap_or_else(|| self.paths.out.join("corpus"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seed": 9, "corpus": {"utterances": 3}}"#).unwrap();
        assert_eq!(cfg.corpus.utterances, 3);
        assert_eq!(cfg.defense.realizations, 50);
        assert_eq!(cfg.resolve().corpus.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn bad_defense_rate_fails_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.defense.rate = 1.0;
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }
}
