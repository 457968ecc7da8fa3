use std::ffi::OsString;
use std::path::PathBuf;

use audrop_core::attack::AttackKind;
use audrop_core::detector::ClassifierKind;
use audrop_core::uncertainty::FeatureMode;
use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::stages::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "audrop", version, about = "Adversarial audio attacks and a dropout-uncertainty detector")]
pub struct Cli {
    /// JSON experiment document; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Recompute artifacts even when current ones exist.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus and its manifest.
    SynthCorpus,
    /// Train the acoustic model on the corpus.
    TrainAsr,
    /// Print greedy transcripts of WAV files.
    Transcribe {
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        /// Decode under one dropout realization at this rate.
        #[arg(long)]
        dropout: Option<f64>,
    },
    /// Forge adversarial examples for every corpus utterance.
    Attack {
        #[arg(long = "type", value_parser = parse::<AttackKind>)]
        kind: AttackKind,
    },
    /// Spectral subtraction of WAV files into `<out>/denoised`.
    Denoise {
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
    },
    /// Uncertainty features of original and adversarial samples.
    Defend,
    /// Train and evaluate one detector.
    Detect {
        #[arg(long, value_parser = parse::<ClassifierKind>)]
        classifier: ClassifierKind,
        #[arg(long, value_parser = parse::<FeatureMode>)]
        mode: FeatureMode,
    },
    /// Accuracy and AUC of every configured detector, per attack.
    Report,
    /// Mean uncertainty histogram per sample label.
    Hist,
}

fn parse<T: std::str::FromStr<Err = audrop_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: audrop_core::Error| e.to_string())
}

pub fn pipeline(cli: &Cli) -> CliResult<Pipeline> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.out = out.clone();
    }
    Pipeline::new(cfg, cli.force)
}

fn execute(cli: &Cli) -> CliResult<()> {
    let p = pipeline(cli)?;
    let done = |path: PathBuf| println!("{}", path.display());
    match &cli.command {
        Command::SynthCorpus => done(p.synth_corpus()?),
        Command::TrainAsr => done(p.train_asr()?),
        Command::Transcribe { wavs, dropout } => {
            if let Some(rate) = dropout {
                if !(0.0..1.0).contains(rate) {
                    return Err(CliError::Usage("--dropout must lie in [0, 1)".into()));
                }
            }
            for (path, t) in p.transcribe(wavs, *dropout)? {
                println!("{}\t{}", path.display(), t.as_str());
            }
        }
        Command::Attack { kind } => done(p.attack(*kind)?),
        Command::Denoise { wavs } => p.denoise(wavs)?.into_iter().for_each(done),
        Command::Defend => p.defend()?.into_iter().for_each(done),
        Command::Detect { classifier, mode } => done(p.detect(*classifier, *mode)?),
        Command::Report => done(p.report()?),
        Command::Hist => done(p.hist()?),
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 success, 1 usage, 2 missing artifact, 3 numerical failure.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
