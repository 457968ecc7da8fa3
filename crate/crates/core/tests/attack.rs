use audrop_core::asr::{AcousticModel, Alphabet, FrontendConfig, ModelGeometry};
use audrop_core::attack::{Adam, AttackConfig, AttackKind, Forge, MaskingTerm};
use audrop_core::corpus::{SynthConfig, Synthesizer};
use audrop_core::{Error, Recognizer, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_recognizer(seed: u64) -> Recognizer {
    let geometry = ModelGeometry { hidden: 24, dense_layers: 2, ..ModelGeometry::default() };
    let model = AcousticModel::<f64>::new(Alphabet::default(), geometry, 0.05, seed).unwrap();
    Recognizer::new(FrontendConfig::default(), model).unwrap()
}

fn utterance(seed: u64) -> Waveform {
    let cfg = SynthConfig { utterances: 1, min_chars: 2, max_chars: 2, seed, ..SynthConfig::default() };
    Synthesizer::new(&cfg, &Alphabet::default()).unwrap().corpus::<f64>().unwrap().remove(0).wave
}

/// Largest per-coordinate relative error between the analytic gradient and
/// central differences of the objective value.
fn max_relative_error(forge: &Forge<f64>, kind: AttackKind, x: &Waveform, seed: u64, coords: usize) -> f64 {
    let target = forge.target_labels().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-3e-3..3e-3)).collect();
    let theta = forge.masking().threshold(&x.samples).unwrap();
    let masking = (kind == AttackKind::Ia).then_some(MaskingTerm { alpha: 0.5, theta: &theta });
    let eval = |d: &[f64]| forge.objective(kind, &x.samples, d, &target, seed, masking).unwrap();
    let obj = eval(&delta);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let i = rng.gen_range(0..x.len());
        let mut d = delta.clone();
        d[i] += h;
        let up = eval(&d).value;
        d[i] -= 2.0 * h;
        let down = eval(&d).value;
        let fd = (up - down) / (2.0 * h);
        let an = obj.grad[i];
        let scale = fd.abs().max(an.abs());
        if scale > 0.0 {
            worst = worst.max((fd - an).abs() / scale);
        }
    }
    worst
}

#[test]
fn objective_gradients_match_central_differences() {
    let rec = small_recognizer(5);
    let x = utterance(8);
    let forge = Forge::new(&rec, AttackConfig::default()).unwrap();
    for kind in AttackKind::ALL {
        for seed in 0..3 {
            let err = max_relative_error(&forge, kind, &x, seed, 20);
            println!("{kind} seed {seed}: {err:.2e}");
            assert!(err < 1e-3, "{kind} seed {seed}: relative error {err}");
        }
    }
}

#[test]
fn adam_with_zero_learning_rate_leaves_parameters_unchanged() {
    let mut adam = Adam::new(3, 0.0);
    let mut p = vec![0.5, -0.25, 1.0];
    for _ in 0..5 {
        adam.step(&mut p, &[1.0, -2.0, 0.3]);
    }
    assert_eq!(p, vec![0.5, -0.25, 1.0]);
}

#[test]
fn adam_moves_against_the_gradient() {
    let mut adam = Adam::new(2, 0.1);
    let mut p = vec![0.0, 0.0];
    adam.step(&mut p, &[1.0, -1.0]);
    assert!(p[0] < 0.0 && p[1] > 0.0);
}

#[test]
fn results_respect_the_loudness_constraint_and_sample_range() {
    let rec = small_recognizer(9);
    let x = utterance(4);
    let cfg = AttackConfig { max_iterations: 15, ia_stage2_iterations: 10, learning_rate: 0.05, ..AttackConfig::default() };
    let forge = Forge::new(&rec, cfg).unwrap();
    for kind in AttackKind::ALL {
        let r = forge.run(kind, &x).unwrap();
        assert!(r.satisfies_constraint(&x.samples).unwrap(), "{kind}");
        assert!(r.tau_db >= 10.0);
        assert!(x.plus(&r.delta.samples).samples.iter().all(|v| v.abs() <= 1.0));
        assert!(r.iterations_used <= 15 + 10);
        assert_eq!(r.kind, kind);
        if r.success_plain {
            assert_eq!(r.transcript.as_str(), "ok");
        }
    }
}

#[test]
fn attacks_are_deterministic() {
    let rec = small_recognizer(2);
    let x = utterance(6);
    let cfg = AttackConfig { max_iterations: 8, ..AttackConfig::default() };
    let forge = Forge::new(&rec, cfg).unwrap();
    for kind in [AttackKind::Dr, AttackKind::Nrr] {
        assert_eq!(forge.run(kind, &x).unwrap(), forge.run(kind, &x).unwrap());
    }
}

#[test]
fn infeasible_target_is_rejected() {
    let rec = small_recognizer(1);
    let cfg = AttackConfig { target: "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaa".into(), ..AttackConfig::default() };
    let forge = Forge::new(&rec, cfg).unwrap();
    let x = Waveform::new(vec![0.01; 4000], 16_000);
    assert!(matches!(forge.run(AttackKind::Cw, &x), Err(Error::InfeasibleTarget { .. })));
}

#[test]
fn invalid_configurations_are_rejected() {
    let rec = small_recognizer(1);
    let bad = [
        AttackConfig { p_dr: 1.0, ..AttackConfig::default() },
        AttackConfig { learning_rate: 0.0, ..AttackConfig::default() },
        AttackConfig { alpha_growth: 0.5, ..AttackConfig::default() },
        AttackConfig { target: "zz".into(), ..AttackConfig::default() },
    ];
    for cfg in bad {
        assert!(Forge::new(&rec, cfg.clone()).is_err() || Forge::new(&rec, cfg).unwrap().target_labels().is_err());
    }
}

#[test]
fn attack_names_round_trip() {
    for kind in AttackKind::ALL {
        assert_eq!(kind.name().parse::<AttackKind>().unwrap(), kind);
    }
    assert!("pgd".parse::<AttackKind>().is_err());
}
