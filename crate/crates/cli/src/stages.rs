//! Pipeline stages. Each writes its artifact plus a provenance sidecar and
//! skips work when a current artifact already exists.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use audrop_core::asr::{realize, AcousticModel, Alphabet, DropoutSpec, Example, Transcript};
use audrop_core::attack::{AttackKind, Forge};
use audrop_core::audio::{read_wav, write_wav};
use audrop_core::corpus::Synthesizer;
use audrop_core::detector::{evaluate, split_70_30, ClassifierKind, Detector, EvalReport, Label, LabeledFeature};
use audrop_core::dsp::SpectralSubtractor;
use audrop_core::uncertainty::{char_distribution, moments, prob_distribution, FeatureMode};
use audrop_core::{Recognizer, Waveform};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::provenance::{self, config_hash};
use crate::tables::{self, AttackRow, CorpusRow, FeatureRecord, ReportRow, ORIGINAL};

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    /// File stem, unique within the corpus.
    pub id: String,
    pub path: PathBuf,
    pub transcript: String,
}

/// Saved detector with its held-out evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectOutput {
    pub classifier: ClassifierKind,
    pub mode: FeatureMode,
    pub train_attack: AttackKind,
    pub train_samples: usize,
    pub test_samples: usize,
    pub detector: Detector,
    pub evaluation: EvalReport,
}

/// Attack outcome on the unquantized perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub id: String,
    pub success: bool,
    pub tau_db: f64,
    /// `dB(delta) <= dB(x) - tau_db` holds.
    pub constraint_satisfied: bool,
    /// `None` for a zero perturbation.
    pub db_gap: Option<f64>,
    pub dropout_target_rate: f64,
    pub masking_penalty_stage1: Option<f64>,
    pub masking_penalty_final: Option<f64>,
    pub transcript: String,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub force: bool,
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("cannot create {}: {e}", dir.display())))
}

fn load_wav(path: &Path, stage: &str) -> CliResult<Waveform> {
    if !path.exists() {
        return Err(CliError::missing(path, stage));
    }
    Ok(read_wav::<f64>(path)?)
}

impl Pipeline {
    /// Resolves stage seeds and validates the configuration.
    pub fn new(cfg: ExperimentConfig, force: bool) -> CliResult<Self> {
        let cfg = cfg.resolve();
        cfg.validate()?;
        Ok(Self { cfg, force })
    }

    pub fn out(&self) -> &Path {
        &self.cfg.paths.out
    }

    pub fn corpus_manifest(&self) -> PathBuf {
        self.cfg.corpus_dir().join("manifest.csv")
    }

    pub fn model_path(&self) -> PathBuf {
        self.out().join("asr").join("model.json")
    }

    pub fn attack_dir(&self, kind: AttackKind) -> PathBuf {
        self.out().join("attacks").join(kind.name())
    }

    pub fn attack_manifest(&self, kind: AttackKind) -> PathBuf {
        self.attack_dir(kind).join("manifest.csv")
    }

    pub fn attack_outcomes_path(&self, kind: AttackKind) -> PathBuf {
        self.attack_dir(kind).join("results.json")
    }

    pub fn attack_outcomes(&self, kind: AttackKind) -> CliResult<Vec<AttackOutcome>> {
        let path = self.attack_outcomes_path(kind);
        if !path.exists() {
            return Err(CliError::missing(&path, &format!("attack --type {kind}")));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn features_path(&self, mode: FeatureMode) -> PathBuf {
        self.out().join("features").join(format!("{}.csv", mode.name()))
    }

    pub fn detect_path(&self, mode: FeatureMode, classifier: ClassifierKind) -> PathBuf {
        self.out().join("detect").join(format!("{}-{}.json", mode.name(), classifier.name()))
    }

    pub fn report_path(&self) -> PathBuf {
        self.out().join("report").join("report.csv")
    }

    pub fn mean_histogram_path(&self) -> PathBuf {
        self.out().join("report").join("mean_histogram.csv")
    }

    fn alphabet(&self) -> CliResult<Alphabet> {
        Ok(Alphabet::new(&self.cfg.alphabet)?)
    }

    pub fn synth_corpus(&self) -> CliResult<PathBuf> {
        let manifest = self.corpus_manifest();
        let hash = config_hash("synth-corpus", &(&self.cfg.alphabet, &self.cfg.corpus))?;
        if provenance::skip(&manifest, &hash, self.force) {
            return Ok(manifest);
        }
        let dir = self.cfg.corpus_dir();
        create_dir(&dir)?;
        let alphabet = self.alphabet()?;
        let corpus = Synthesizer::new(&self.cfg.corpus, &alphabet)?.corpus::<f64>()?;
        let mut rows = Vec::with_capacity(corpus.len());
        for u in &corpus {
            let name = format!("{}.wav", u.id);
            write_wav(dir.join(&name), &u.wave)?;
            rows.push(CorpusRow { wav_path: name, transcript: u.transcript.as_str().to_string() });
        }
        tables::write_rows(&manifest, &tables::CORPUS_HEADER, &rows)?;
        provenance::write(&manifest, "synth-corpus", &hash, self.cfg.corpus.seed)?;
        log::info!("wrote {} utterances to {}", rows.len(), dir.display());
        Ok(manifest)
    }

    /// Entries sorted by id. Without a manifest every WAV in the directory is
    /// used with an empty transcript.
    pub fn corpus(&self) -> CliResult<Vec<CorpusEntry>> {
        let dir = self.cfg.corpus_dir();
        let manifest = self.corpus_manifest();
        let mut entries = if manifest.exists() {
            tables::read_rows::<CorpusRow>(&manifest)?
                .into_iter()
                .map(|r| {
                    let path = dir.join(&r.wav_path);
                    CorpusEntry { id: stem(&path), path, transcript: r.transcript }
                })
                .collect::<Vec<_>>()
        } else if dir.is_dir() && self.cfg.paths.corpus.is_some() {
            let mut v = Vec::new();
            for e in std::fs::read_dir(&dir)? {
                let path = e?.path();
                if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                    v.push(CorpusEntry { id: stem(&path), path, transcript: String::new() });
                }
            }
            v
        } else {
            return Err(CliError::missing(&manifest, "synth-corpus"));
        };
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(entries)
    }

    /// Recorded hash of the corpus, or a content hash for external corpora.
    pub fn corpus_hash(&self) -> CliResult<String> {
        let manifest = self.corpus_manifest();
        if let Some(p) = provenance::read(&manifest) {
            return Ok(p.config_hash);
        }
        let mut parts = Vec::new();
        for e in self.corpus()? {
            let bytes = std::fs::read(&e.path).map_err(|_| CliError::missing(&e.path, "synth-corpus"))?;
            parts.push((e.id, e.transcript, provenance::hash_bytes(&bytes)));
        }
        config_hash("external-corpus", &parts)
    }

    pub fn train_asr(&self) -> CliResult<PathBuf> {
        let path = self.model_path();
        let corpus = self.corpus()?;
        let hash = config_hash("train-asr", &(&self.cfg.asr, &self.cfg.alphabet, self.cfg.init_seed(), self.corpus_hash()?))?;
        if provenance::skip(&path, &hash, self.force) {
            return Ok(path);
        }
        if corpus.is_empty() || corpus.iter().any(|e| e.transcript.is_empty()) {
            return Err(CliError::Usage("training needs a non-empty corpus with transcripts".into()));
        }
        let alphabet = self.alphabet()?;
        let asr = &self.cfg.asr;
        let mut model = AcousticModel::<f64>::new(alphabet.clone(), asr.geometry, asr.train_dropout_rate, self.cfg.init_seed())?;
        let frontend = audrop_core::asr::MelFrontend::<f64>::new(asr.frontend)?;
        let mut feats = Vec::with_capacity(corpus.len());
        for e in &corpus {
            feats.push(frontend.forward(&load_wav(&e.path, "synth-corpus")?.samples)?);
        }
        model.fit_normalization(feats.iter());
        let examples = corpus
            .iter()
            .zip(feats)
            .map(|(e, features)| Ok(Example { features, target: alphabet.encode(&e.transcript)? }))
            .collect::<CliResult<Vec<_>>>()?;
        let report = audrop_core::asr::train(&mut model, &examples, &asr.train)?;
        log::info!(
            "holdout loss {:.4} -> {:.4} over {} epochs",
            report.initial_holdout_loss,
            report.final_holdout_loss,
            asr.train.epochs
        );
        create_dir(path.parent().expect("model path has a parent"))?;
        std::fs::write(&path, model.to_json()?)?;
        std::fs::write(path.with_file_name("train_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        provenance::write(&path, "train-asr", &hash, asr.train.seed)?;
        Ok(path)
    }

    pub fn recognizer(&self) -> CliResult<(Recognizer, String)> {
        let path = self.model_path();
        let hash = provenance::upstream(&path, "train-asr")?;
        let model = AcousticModel::<f64>::from_json(&std::fs::read_to_string(&path)?)?;
        Ok((Recognizer::new(self.cfg.asr.frontend, model)?, hash))
    }

    /// Greedy transcripts, optionally under one dropout realization.
    pub fn transcribe(&self, wavs: &[PathBuf], dropout: Option<f64>) -> CliResult<Vec<(PathBuf, Transcript)>> {
        let (rec, _) = self.recognizer()?;
        let spec = dropout.map(|p| DropoutSpec::new(p, self.cfg.defense.seed).with_scope(self.cfg.defense.scope));
        wavs.iter()
            .map(|p| {
                let x = read_wav::<f64>(p).map_err(|e| match e {
                    audrop_core::Error::Io(_) => CliError::Usage(format!("cannot read {}", p.display())),
                    other => other.into(),
                })?;
                Ok((p.clone(), rec.transcribe(&x.samples, spec.as_ref())?))
            })
            .collect()
    }

    pub fn attack(&self, kind: AttackKind) -> CliResult<PathBuf> {
        let manifest = self.attack_manifest(kind);
        let corpus = self.corpus()?;
        let (rec, asr_hash) = self.recognizer()?;
        let hash = config_hash("attack", &(kind, &self.cfg.attack, asr_hash, self.corpus_hash()?))?;
        if provenance::skip(&manifest, &hash, self.force) {
            return Ok(manifest);
        }
        let dir = self.attack_dir(kind);
        create_dir(&dir)?;
        let forge = Forge::new(&rec, self.cfg.attack.clone())?;
        let mut rows = Vec::with_capacity(corpus.len());
        let mut outcomes = Vec::with_capacity(corpus.len());
        for e in &corpus {
            let x = load_wav(&e.path, "synth-corpus")?;
            let result = forge.run(kind, &x)?;
            outcomes.push(AttackOutcome {
                id: e.id.clone(),
                success: result.success_plain,
                tau_db: result.tau_db,
                constraint_satisfied: result.satisfies_constraint(&x.samples)?,
                db_gap: result.final_db_gap.is_finite().then_some(result.final_db_gap),
                dropout_target_rate: result.dropout_target_rate,
                masking_penalty_stage1: result.masking_penalty_stage1,
                masking_penalty_final: result.masking_penalty_final,
                transcript: result.transcript.as_str().to_string(),
            });
            let out = dir.join(format!("{}.wav", e.id));
            write_wav(&out, &x.plus(&result.delta.samples))?;
            // manifest flags are judged on the stored 16-bit signal
            let stored = read_wav::<f64>(&out)?;
            let delta: Vec<f64> = stored.samples.iter().zip(&x.samples).map(|(a, b)| a - b).collect();
            let a = forge.assess(&x, &delta)?;
            log::info!("{kind} {}: {:?} after {} iterations, gap {:.1} dB", e.id, a.transcript.as_str(), result.iterations_used, a.db_gap);
            rows.push(AttackRow {
                wav_in: e.path.display().to_string(),
                wav_out: out.display().to_string(),
                attack_type: kind.name().to_string(),
                success_plain: result.success_plain && a.decodes,
                success_dropout: a.success_dropout,
                success_denoised: a.success_denoised,
                db_gap: a.db_gap,
                iterations: result.iterations_used,
            });
        }
        std::fs::write(self.attack_outcomes_path(kind), serde_json::to_string_pretty(&outcomes)? + "\n")?;
        tables::write_rows(&manifest, &tables::ATTACK_HEADER, &rows)?;
        provenance::write(&manifest, "attack", &hash, self.cfg.attack.seed)?;
        Ok(manifest)
    }

    /// Self-profiled spectral subtraction of each WAV into `<out>/denoised`.
    pub fn denoise(&self, wavs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
        let dir = self.out().join("denoised");
        create_dir(&dir)?;
        let sub = SpectralSubtractor::<f64>::new(self.cfg.attack.subtraction)?;
        let mut outs = Vec::with_capacity(wavs.len());
        for p in wavs {
            let bytes = std::fs::read(p).map_err(|_| CliError::Usage(format!("cannot read {}", p.display())))?;
            let out = dir.join(format!("{}.wav", stem(p)));
            let hash = config_hash("denoise", &(&self.cfg.attack.subtraction, provenance::hash_bytes(&bytes)))?;
            if !provenance::skip(&out, &hash, self.force) {
                let x = read_wav::<f64>(p)?;
                write_wav(&out, &Waveform::new(sub.denoise(&x.samples)?, x.sample_rate))?;
                provenance::write(&out, "denoise", &hash, 0)?;
            }
            outs.push(out);
        }
        Ok(outs)
    }

    fn attack_rows(&self, kind: AttackKind) -> CliResult<(Vec<AttackRow>, String)> {
        let manifest = self.attack_manifest(kind);
        let stage = format!("attack --type {kind}");
        let hash = provenance::upstream(&manifest, &stage)?;
        Ok((tables::read_rows(&manifest)?, hash))
    }

    fn defend_hash(&self) -> CliResult<String> {
        let (_, asr_hash) = self.recognizer()?;
        let attack_hashes =
            self.cfg.attacks.iter().map(|&k| Ok((k, self.attack_rows(k)?.1))).collect::<CliResult<Vec<_>>>()?;
        config_hash("defend", &(&self.cfg.defense, asr_hash, self.corpus_hash()?, attack_hashes))
    }

    /// Char- and prob-mode features of every original and adversarial WAV,
    /// both drawn from the same dropout realizations.
    pub fn defend(&self) -> CliResult<[PathBuf; 2]> {
        let paths = [self.features_path(FeatureMode::Char), self.features_path(FeatureMode::Prob)];
        let hash = self.defend_hash()?;
        if paths.iter().all(|p| provenance::skip(p, &hash, self.force)) {
            return Ok(paths);
        }
        let (rec, _) = self.recognizer()?;
        let mut inputs: Vec<(String, String, PathBuf)> =
            self.corpus()?.into_iter().map(|e| (e.id, ORIGINAL.to_string(), e.path)).collect();
        for &kind in &self.cfg.attacks {
            for row in self.attack_rows(kind)?.0 {
                let path = PathBuf::from(&row.wav_out);
                inputs.push((format!("{}_{}", stem(&path), kind.name()), kind.name().to_string(), path));
            }
        }
        inputs.sort_by(|a, b| a.0.cmp(&b.0));
        let d = &self.cfg.defense;
        let (mut char_rows, mut prob_rows) = (Vec::new(), Vec::new());
        for (id, label, path) in inputs {
            let x = load_wav(&path, "attack")?;
            let r = realize(&rec, &x.samples, d.rate, d.realizations, d.seed, d.scope)?;
            let cd = char_distribution(&r.transcripts)?;
            let pd = prob_distribution(&r.posteriors.into_iter().map(|p| p.rows).collect::<Vec<_>>())?;
            let (cf, pf) = (moments(&cd, d.moments)?, moments(&pd, d.moments)?);
            if !cf.is_finite() || !pf.is_finite() {
                return Err(CliError::Numerical(format!("non-finite uncertainty features for {id}")));
            }
            char_rows.push(FeatureRecord { sample_id: id.clone(), label: label.clone(), features: cf, counts: cd.histogram });
            prob_rows.push(FeatureRecord { sample_id: id, label, features: pf, counts: None });
        }
        create_dir(paths[0].parent().expect("features path has a parent"))?;
        for (path, rows) in paths.iter().zip([char_rows, prob_rows]) {
            tables::write_features(path, &rows)?;
            provenance::write(path, "defend", &hash, d.seed)?;
        }
        Ok(paths)
    }

    fn features(&self, mode: FeatureMode) -> CliResult<(Vec<FeatureRecord>, String)> {
        let path = self.features_path(mode);
        let hash = provenance::upstream(&path, "defend")?;
        Ok((tables::read_features(&path)?, hash))
    }

    /// Labelled samples; adversarial ones optionally restricted to those
    /// decoding to the target.
    pub fn labeled_samples(&self, mode: FeatureMode) -> CliResult<(Vec<LabeledFeature>, String)> {
        let (records, hash) = self.features(mode)?;
        let mut succeeded: BTreeMap<String, bool> = BTreeMap::new();
        for &kind in &self.cfg.attacks {
            for row in self.attack_rows(kind)?.0 {
                succeeded.insert(format!("{}_{}", stem(Path::new(&row.wav_out)), kind.name()), row.success_plain);
            }
        }
        let mut out = Vec::with_capacity(records.len());
        for r in records {
            if r.label == ORIGINAL {
                out.push(LabeledFeature {
                    original_id: r.sample_id.clone(),
                    sample_id: r.sample_id,
                    attack: None,
                    label: Label::Original,
                    features: r.features,
                });
                continue;
            }
            if self.cfg.detector.successful_only && !succeeded.get(&r.sample_id).copied().unwrap_or(false) {
                continue;
            }
            let original_id = r
                .sample_id
                .strip_suffix(&format!("_{}", r.label))
                .ok_or_else(|| CliError::Failed(format!("sample id {} does not end in _{}", r.sample_id, r.label)))?
                .to_string();
            out.push(LabeledFeature {
                sample_id: r.sample_id,
                original_id,
                attack: Some(r.label),
                label: Label::Adversarial,
                features: r.features,
            });
        }
        Ok((out, hash))
    }

    pub fn detect(&self, classifier: ClassifierKind, mode: FeatureMode) -> CliResult<PathBuf> {
        if classifier == ClassifierKind::Svmf && mode == FeatureMode::Prob {
            return Err(CliError::Usage("svmf needs the char-mode histogram; use --mode char".into()));
        }
        let path = self.detect_path(mode, classifier);
        let (samples, features_hash) = self.labeled_samples(mode)?;
        let det = &self.cfg.detector;
        let hash = config_hash(
            "detect",
            &(classifier, mode, det.train_attack, det.successful_only, det.split_seed, &det.model, features_hash),
        )?;
        if provenance::skip(&path, &hash, self.force) {
            return Ok(path);
        }
        let (train, test) = split_70_30(&samples, det.split_seed)?;
        let train: Vec<LabeledFeature> =
            train.into_iter().filter(|s| s.attack.as_deref().map_or(true, |a| a == det.train_attack.name())).collect();
        let detector = Detector::train(classifier, &train, &det.model)?;
        let evaluation = evaluate(&detector, &test)?;
        log::info!("{}-{classifier}: accuracy {:.1}%, AUC {:.3}", mode.name(), evaluation.accuracy, evaluation.auc);
        let output = DetectOutput {
            classifier,
            mode,
            train_attack: det.train_attack,
            train_samples: train.len(),
            test_samples: test.len(),
            detector,
            evaluation,
        };
        create_dir(path.parent().expect("detect path has a parent"))?;
        std::fs::write(&path, serde_json::to_string_pretty(&output)? + "\n")?;
        provenance::write(&path, "detect", &hash, det.split_seed)?;
        Ok(path)
    }

    /// Configured `(mode, classifier)` pairs; the full-histogram SVM only
    /// exists for char features.
    pub fn detector_grid(&self) -> Vec<(FeatureMode, ClassifierKind)> {
        let mut grid = Vec::new();
        for &mode in &self.cfg.detector.modes {
            for &c in &self.cfg.detector.classifiers {
                if !(c == ClassifierKind::Svmf && mode == FeatureMode::Prob) {
                    grid.push((mode, c));
                }
            }
        }
        grid
    }

    pub fn report(&self) -> CliResult<PathBuf> {
        let path = self.report_path();
        let mut outputs = Vec::new();
        let mut hashes = Vec::new();
        for (mode, c) in self.detector_grid() {
            let p = self.detect_path(mode, c);
            let stage = format!("detect --classifier {} --mode {}", c.name(), mode.name());
            hashes.push(provenance::upstream(&p, &stage)?);
            outputs.push(serde_json::from_str::<DetectOutput>(&std::fs::read_to_string(&p)?)?);
        }
        if outputs.is_empty() {
            return Err(CliError::Usage("detector.modes and detector.classifiers select no detector".into()));
        }
        let hash = config_hash("report", &hashes)?;
        if provenance::skip(&path, &hash, self.force) {
            return Ok(path);
        }
        let mut rows = Vec::new();
        for o in &outputs {
            for (attack, s) in &o.evaluation.per_attack {
                rows.push(ReportRow {
                    feature_mode: o.mode.name().to_string(),
                    classifier: o.classifier.name().to_string(),
                    attack: attack.clone(),
                    accuracy: s.accuracy,
                    auc: s.auc,
                });
            }
        }
        rows.sort_by(|a, b| (&a.feature_mode, &a.classifier, &a.attack).cmp(&(&b.feature_mode, &b.classifier, &b.attack)));
        create_dir(path.parent().expect("report path has a parent"))?;
        tables::write_rows(&path, &tables::REPORT_HEADER, &rows)?;
        provenance::write(&path, "report", &hash, self.cfg.seed)?;
        self.write_mean_histogram(&self.mean_histogram_path())?;
        Ok(path)
    }

    /// Mean char-mode histogram per sample label.
    pub fn hist(&self) -> CliResult<PathBuf> {
        let path = self.out().join("hist").join("mean_histogram.csv");
        self.write_mean_histogram(&path)?;
        Ok(path)
    }

    fn write_mean_histogram(&self, path: &Path) -> CliResult<()> {
        let (records, hash) = self.features(FeatureMode::Char)?;
        let hash = config_hash("hist", &hash)?;
        if provenance::skip(path, &hash, self.force) {
            return Ok(());
        }
        create_dir(path.parent().expect("histogram path has a parent"))?;
        tables::write_mean_histogram(path, &records)?;
        provenance::write(path, "hist", &hash, self.cfg.defense.seed)
    }

    /// Every stage in order, ending with the report.
    pub fn run_all(&self) -> CliResult<PathBuf> {
        self.synth_corpus()?;
        self.train_asr()?;
        for &kind in &self.cfg.attacks {
            self.attack(kind)?;
        }
        self.defend()?;
        for (mode, c) in self.detector_grid() {
            self.detect(c, mode)?;
        }
        self.report()
    }
}
