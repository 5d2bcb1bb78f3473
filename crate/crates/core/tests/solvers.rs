use specconsist::audio_io::{synth, SynthKind};
use specconsist::metrics::aligned_snr;
use specconsist::stft::{MagnitudeField, PhaseField, StftConfig, WindowKind};
use specconsist::{
    gd_reconstruct, griffin_lim, random_phase, reconstruct_signal, stft, ConsistencyKernel, Error,
    InitKind, LossKind, Parameterization, SolverOptions, StepRule,
};

fn config() -> StftConfig {
    StftConfig::new(128, 32, WindowKind::Hann).unwrap()
}

fn magnitude(kind: &SynthKind, config: &StftConfig) -> MagnitudeField {
    let x = synth(kind, 8000, 0.25).unwrap();
    stft(&x, config).unwrap().magnitude()
}

#[test]
fn ec_trace_is_blind_to_a_global_phase_offset() {
    let config = config();
    let kernel = ConsistencyKernel::new(&config);
    let mag = magnitude(&SynthKind::default_multisine(), &config);
    let start = random_phase(mag.dim(), 5);
    let run = |phase: PhaseField| {
        let opts = SolverOptions {
            max_iters: 40,
            init: InitKind::Provided,
            initial_phase: Some(phase),
            ..Default::default()
        };
        gd_reconstruct(&mag, LossKind::Ec, None, &opts, &kernel)
            .unwrap()
            .1
    };
    let a = run(start.clone());
    let b = run(start.shifted(1.234));
    assert!((a.initial_loss - b.initial_loss).abs() <= 1e-9 * a.initial_loss);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert!((x.loss - y.loss).abs() <= 1e-9 * x.loss, "{x:?} vs {y:?}");
    }
}

#[test]
fn solvers_are_deterministic_for_a_seed() {
    let config = config();
    let kernel = ConsistencyKernel::new(&config);
    let mag = magnitude(
        &SynthKind::Chirp {
            f0: 200.0,
            f1: 3000.0,
            amplitude: 0.8,
        },
        &config,
    );
    let opts = SolverOptions {
        max_iters: 25,
        seed: 99,
        ..Default::default()
    };
    let (p1, t1) = gd_reconstruct(&mag, LossKind::Ec, None, &opts, &kernel).unwrap();
    let (p2, t2) = gd_reconstruct(&mag, LossKind::Ec, None, &opts, &kernel).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(t1, t2);
    let (g1, _) = griffin_lim(&mag, &opts, &config).unwrap();
    let (g2, _) = griffin_lim(&mag, &opts, &config).unwrap();
    assert_eq!(g1, g2);

    let other = SolverOptions { seed: 100, ..opts };
    let (p3, _) = gd_reconstruct(&mag, LossKind::Ec, None, &other, &kernel).unwrap();
    assert_ne!(p1, p3);
}

#[test]
fn griffin_lim_never_increases_inconsistency() {
    let config = config();
    let signals = [
        SynthKind::default_multisine(),
        SynthKind::Chirp {
            f0: 100.0,
            f1: 3500.0,
            amplitude: 1.0,
        },
        SynthKind::Noise {
            seed: 4,
            amplitude: 0.5,
        },
    ];
    for kind in &signals {
        let mag = magnitude(kind, &config);
        for seed in 0..4 {
            let opts = SolverOptions {
                max_iters: 60,
                seed,
                ..Default::default()
            };
            let (_, trace) = griffin_lim(&mag, &opts, &config).unwrap();
            let mut prev = trace.initial_loss;
            for r in &trace.records {
                assert!(
                    r.loss <= prev * (1.0 + 1e-10),
                    "{kind:?} seed {seed}: {r:?}"
                );
                prev = r.loss;
            }
        }
    }
}

#[test]
fn ec_descent_improves_reconstruction_in_both_parameterizations() {
    let config = config();
    let kernel = ConsistencyKernel::new(&config);
    let x = synth(&SynthKind::default_multisine(), 8000, 0.25).unwrap();
    let mag = stft(&x, &config).unwrap().magnitude();
    for parameterization in [Parameterization::DirectPhase, Parameterization::C1C2] {
        let opts = SolverOptions {
            max_iters: 150,
            parameterization,
            ..Default::default()
        };
        let (phase, trace) = gd_reconstruct(&mag, LossKind::Ec, None, &opts, &kernel).unwrap();
        assert!(
            trace.final_loss() < 0.2 * trace.initial_loss,
            "{parameterization:?}"
        );
        assert!(trace.final_consistency() < trace.initial_consistency);
        let y = reconstruct_signal(&mag, &phase, &config).unwrap();
        let y = specconsist::Signal::new(y.samples()[..x.len()].to_vec(), 8000).unwrap();
        let (snr, _) = aligned_snr(&x, &y, 64).unwrap();
        assert!(snr.is_finite());
    }
}

#[test]
fn noisy_init_with_target_recovers_under_phase_losses() {
    let config = config();
    let kernel = ConsistencyKernel::new(&config);
    let spec = stft(
        &synth(&SynthKind::default_multisine(), 8000, 0.25).unwrap(),
        &config,
    )
    .unwrap();
    let mag = spec.magnitude();
    let target = spec.phase();
    let noisy = PhaseField::new(target.as_array().mapv(|p| p + 0.6 * (7.0 * p).sin())).unwrap();
    for loss in [
        LossKind::Cos,
        LossKind::Aw,
        LossKind::CompL2,
        LossKind::TimeL2,
    ] {
        let opts = SolverOptions {
            max_iters: 100,
            step_rule: StepRule::Fixed,
            initial_step: 1.0,
            init: InitKind::NoisyPhase,
            initial_phase: Some(noisy.clone()),
            ..Default::default()
        };
        let (_, trace) = gd_reconstruct(&mag, loss, Some(&target), &opts, &kernel).unwrap();
        assert!(
            trace.final_loss() < 0.5 * trace.initial_loss,
            "{loss}: {}",
            trace.final_loss()
        );
    }
}

#[test]
fn input_errors() {
    let config = config();
    let kernel = ConsistencyKernel::new(&config);
    let mag = magnitude(&SynthKind::default_multisine(), &config);
    let opts = SolverOptions::default();
    assert!(matches!(
        gd_reconstruct(&mag, LossKind::Cos, None, &opts, &kernel),
        Err(Error::Input(_))
    ));
    let provided = SolverOptions {
        init: InitKind::Provided,
        ..Default::default()
    };
    assert!(matches!(
        griffin_lim(&mag, &provided, &config),
        Err(Error::Input(_))
    ));
    let wrong = MagnitudeField::zeros(4, 64);
    assert!(matches!(
        griffin_lim(&wrong, &opts, &config),
        Err(Error::ShapeMismatch { .. })
    ));
}
