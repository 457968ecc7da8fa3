use audrop_core::asr::{
    mean_loss, realize, train, AcousticModel, Alphabet, DropoutScope, DropoutSpec, Example, FrontendConfig,
    MelFrontend, ModelGeometry, TrainConfig,
};
use audrop_core::corpus::{SynthConfig, Synthesizer};
use audrop_core::{Error, Recognizer, Recognizer32};

fn examples(n: usize, seed: u64) -> (AcousticModel<f64>, Vec<Example<f64>>) {
    let alphabet = Alphabet::default();
    let cfg = SynthConfig { utterances: n, seed, ..SynthConfig::default() };
    let corpus = Synthesizer::new(&cfg, &alphabet).unwrap().corpus::<f64>().unwrap();
    let fe = MelFrontend::<f64>::new(FrontendConfig::default()).unwrap();
    let geometry = ModelGeometry { hidden: 32, dense_layers: 2, ..ModelGeometry::default() };
    let mut model = AcousticModel::new(alphabet.clone(), geometry, 0.0, 3).unwrap();
    let feats: Vec<_> = corpus.iter().map(|u| fe.forward(&u.wave.samples).unwrap()).collect();
    model.fit_normalization(feats.iter());
    let ex = corpus
        .iter()
        .zip(feats)
        .map(|(u, features)| Example { features, target: alphabet.encode(u.transcript.as_str()).unwrap() })
        .collect();
    (model, ex)
}

#[test]
fn training_overfits_a_small_set() {
    let (mut model, ex) = examples(6, 2);
    let before = mean_loss(&model, &ex).unwrap();
    let cfg = TrainConfig { epochs: 40, batch_size: 3, holdout_fraction: 0.0, ..TrainConfig::default() };
    let report = train(&mut model, &ex, &cfg).unwrap();
    let after = mean_loss(&model, &ex).unwrap();
    assert!(after < 0.2 * before, "loss {before} -> {after}");
    assert_eq!(report.epoch_train_loss.len(), 40);
    assert_eq!(report.train_examples, 6);
}

#[test]
fn zero_learning_rate_leaves_the_model_unchanged() {
    let (mut model, ex) = examples(4, 3);
    let before = model.clone();
    let cfg = TrainConfig { epochs: 2, learning_rate: 0.0, ..TrainConfig::default() };
    train(&mut model, &ex, &cfg).unwrap();
    assert_eq!(model, before);
}

#[test]
fn training_is_deterministic() {
    let (m0, ex) = examples(5, 4);
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let (mut a, mut b) = (m0.clone(), m0);
    let ra = train(&mut a, &ex, &cfg).unwrap();
    let rb = train(&mut b, &ex, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn realizations_replay_single_dropout_specs() {
    let (model, _) = examples(1, 5);
    let rec = Recognizer::new(FrontendConfig::default(), model).unwrap();
    let cfg = SynthConfig { utterances: 1, seed: 5, ..SynthConfig::default() };
    let x = Synthesizer::new(&cfg, &Alphabet::default()).unwrap().corpus::<f64>().unwrap().remove(0).wave;
    let r = realize(&rec, &x.samples, 0.3, 6, 77, DropoutScope::DenseOnly).unwrap();
    assert_eq!(r.transcripts.len(), 6);
    for i in 0..6 {
        let spec = DropoutSpec::new(0.3, 77 ^ i as u64);
        assert_eq!(r.posteriors[i], rec.posteriors(&x.samples, Some(&spec)).unwrap());
        assert_eq!(r.transcripts[i], rec.transcribe(&x.samples, Some(&spec)).unwrap());
    }
    assert!(r.posteriors.windows(2).any(|w| w[0] != w[1]));
    let off = realize(&rec, &x.samples, 0.0, 3, 1, DropoutScope::DenseOnly).unwrap();
    assert!(off.posteriors.iter().all(|p| *p == rec.posteriors(&x.samples, None).unwrap()));
    assert!(matches!(realize(&rec, &x.samples, 0.1, 1, 0, DropoutScope::DenseOnly), Err(Error::TooFew { .. })));
}

#[test]
fn single_precision_tracks_double_precision() {
    let (model, _) = examples(1, 6);
    let json = model.to_json().unwrap();
    let rec64 = Recognizer::new(FrontendConfig::default(), model).unwrap();
    let rec32 = Recognizer32::new(FrontendConfig::default(), AcousticModel::<f32>::from_json(&json).unwrap()).unwrap();
    let cfg = SynthConfig { utterances: 1, seed: 6, ..SynthConfig::default() };
    let x = Synthesizer::new(&cfg, &Alphabet::default()).unwrap().corpus::<f64>().unwrap().remove(0).wave;
    let p64 = rec64.posteriors(&x.samples, None).unwrap();
    let p32 = rec32.posteriors(&x.cast::<f32>().samples, None).unwrap();
    let worst = p64.rows.iter().zip(p32.rows.iter()).map(|(a, b)| (a - f64::from(*b)).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "max posterior gap {worst}");
}

#[test]
fn waveform_gradient_matches_central_differences() {
    use rand::{Rng, SeedableRng};
    let (model, _) = examples(1, 7);
    let rec = Recognizer::new(FrontendConfig::default(), model).unwrap();
    let cfg = SynthConfig { utterances: 1, seed: 7, ..SynthConfig::default() };
    let x = Synthesizer::new(&cfg, &Alphabet::default()).unwrap().corpus::<f64>().unwrap().remove(0).wave;
    let target = Alphabet::default().encode("ok").unwrap();
    let spec = DropoutSpec::new(0.2, 4);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for dropout in [None, Some(&spec)] {
        let wl = rec.loss_and_grad(&x.samples, &target, dropout).unwrap();
        for _ in 0..20 {
            let i = rng.gen_range(0..x.len());
            let h = 1e-6;
            let mut xp = x.samples.clone();
            xp[i] += h;
            let up = rec.loss(&xp, &target, dropout).unwrap();
            xp[i] -= 2.0 * h;
            let fd = (up - rec.loss(&xp, &target, dropout).unwrap()) / (2.0 * h);
            let scale = fd.abs().max(wl.grad[i].abs());
            assert!(scale == 0.0 || (fd - wl.grad[i]).abs() / scale < 1e-3, "coordinate {i}: {fd} vs {}", wl.grad[i]);
        }
    }
}
