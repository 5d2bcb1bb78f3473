//! Consistency residual against a from-scratch O(N²) overlap-add oracle,
//! plus the algebraic invariants of the residual operator.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specconsist::stft::{PhaseField, Signal, Spectrogram, StftConfig, WindowKind};
use specconsist::{consistency_measure, reconstruct_signal, stft, ConsistencyKernel};

fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    match kind {
        WindowKind::Hann => (0..n)
            .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
            .collect(),
        WindowKind::Rectangular => vec![1.0; n],
    }
}

fn dual(w: &[f64], hop: usize) -> Vec<f64> {
    (0..w.len())
        .map(|k| {
            let denom: f64 = (k % hop..w.len()).step_by(hop).map(|i| w[i] * w[i]).sum();
            w[k] / denom
        })
        .collect()
}

/// `STFT(iSTFT(H)) − H` by direct summation over the padded time axis.
fn naive_residual(
    h: &Array2<Complex64>,
    n: usize,
    hop: usize,
    kind: WindowKind,
) -> Array2<Complex64> {
    let w = window(kind, n);
    let s = dual(&w, hop);
    let frames = h.nrows();
    let mut y = vec![Complex64::new(0.0, 0.0); (frames - 1) * hop + n];
    for m in 0..frames {
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n {
                acc += h[[m, b]] * Complex64::from_polar(1.0, 2.0 * PI * (b * k) as f64 / n as f64);
            }
            y[m * hop + k] += s[k] * acc / n as f64;
        }
    }
    Array2::from_shape_fn((frames, n), |(m, b)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += w[k]
                * y[m * hop + k]
                * Complex64::from_polar(1.0, -2.0 * PI * (b * k) as f64 / n as f64);
        }
        acc - h[[m, b]]
    })
}

fn random_complex(frames: usize, bins: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
    Array2::from_shape_fn((frames, bins), |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn max_rel(got: &Array2<Complex64>, want: &Array2<Complex64>) -> f64 {
    max_abs(&(got - want)) / max_abs(want).max(f64::MIN_POSITIVE)
}

#[test]
fn residual_matches_naive_overlap_add() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let configs = [
        (16, 4, WindowKind::Hann),
        (32, 8, WindowKind::Hann),
        (12, 4, WindowKind::Hann),
        (4, 4, WindowKind::Rectangular),
        (8, 2, WindowKind::Rectangular),
    ];
    for (n, hop, kind) in configs {
        let config = StftConfig::new(n, hop, kind).unwrap();
        let kernel = ConsistencyKernel::new(&config);
        // Includes fewer frames than the overlap factor.
        for frames in [1, 2, 3, 7, 13] {
            let h = random_complex(frames, n, &mut rng);
            let spec = Spectrogram::from_array(h.clone(), &config).unwrap();
            let got = kernel.residual(&spec).unwrap().into_array();
            let want = naive_residual(&h, n, hop, kind);
            // Relative to H: with no overlap the residual itself is zero.
            let err = max_abs(&(&got - &want)) / max_abs(&h);
            assert!(err < 1e-10, "{n}/{hop} {kind:?} M={frames}: {err:e}");
        }
    }
}

#[test]
fn alpha_taps_match_definition() {
    // α_q(p) = (1/N) Σ_k W[k] S[k + qR] e^{-j2πp(k + qR)/N}, minus δ_q δ_p.
    let config = StftConfig::new(16, 4, WindowKind::Hann).unwrap();
    let kernel = ConsistencyKernel::new(&config);
    let w = window(WindowKind::Hann, 16);
    let s = dual(&w, 4);
    for q in -3isize..=3 {
        for p in 0..16isize {
            let mut want = Complex64::new(0.0, 0.0);
            for k in 0..16isize {
                let j = k + q * 4;
                if (0..16).contains(&j) {
                    want += w[k as usize]
                        * s[j as usize]
                        * Complex64::from_polar(1.0, -2.0 * PI * (p * j) as f64 / 16.0);
                }
            }
            want /= 16.0;
            if q == 0 && p == 0 {
                want -= 1.0;
            }
            let got = kernel.alpha(q, p);
            assert!((got - want).norm() < 1e-13, "q={q} p={p}: {got} vs {want}");
        }
    }
}

#[test]
fn sign_flip_is_invisible_to_the_phase_loss() {
    let config = StftConfig::new(32, 8, WindowKind::Hann).unwrap();
    let kernel = ConsistencyKernel::new(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Signal::new((0..300).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap();
    let spec = stft(&x, &config).unwrap();
    let mag = spec.magnitude();
    let phase =
        PhaseField::new(spec.phase().as_array().mapv(|p| p + 0.4 * (p * 3.0).sin())).unwrap();
    let flipped = phase.shifted(PI);
    let a = kernel.loss_ec_phase(&mag, &phase).unwrap();
    let b = kernel.loss_ec_phase(&mag, &flipped).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);

    let y = reconstruct_signal(&mag, &phase, &config).unwrap();
    let z = reconstruct_signal(&mag, &flipped, &config).unwrap();
    let peak = y.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (u, v) in y.samples().iter().zip(z.samples()) {
        assert!((u + v).abs() <= 1e-10 * peak);
    }
}

fn config_strategy() -> impl Strategy<Value = StftConfig> {
    prop_oneof![
        Just((16usize, 4usize, WindowKind::Hann)),
        Just((32, 8, WindowKind::Hann)),
        Just((64, 16, WindowKind::Hann)),
        Just((24, 6, WindowKind::Hann)),
        Just((8, 8, WindowKind::Rectangular)),
        Just((16, 4, WindowKind::Rectangular)),
    ]
    .prop_map(|(n, r, k)| StftConfig::new(n, r, k).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stft_of_any_real_signal_is_consistent(
        config in config_strategy(),
        samples in prop::collection::vec(-1.0f64..1.0, 1..600),
    ) {
        prop_assume!(samples.iter().any(|v| *v != 0.0));
        let kernel = ConsistencyKernel::new(&config);
        let spec = stft(&Signal::new(samples, 8000).unwrap(), &config).unwrap();
        prop_assert!(consistency_measure(&spec, &kernel).unwrap() < 1e-7);
    }

    #[test]
    fn residual_is_linear(config in config_strategy(), seed in any::<u64>(), frames in 1usize..10,
                          a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let kernel = ConsistencyKernel::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.window_len();
        let h1 = random_complex(frames, n, &mut rng);
        let h2 = random_complex(frames, n, &mut rng);
        let (ca, cb) = (Complex64::new(a, 0.5), Complex64::new(-0.25, b));
        let mix = h1.mapv(|z| z * ca) + h2.mapv(|z| z * cb);
        let lhs = kernel.apply(mix.view()).unwrap();
        let rhs = kernel.apply(h1.view()).unwrap().mapv(|z| z * ca)
            + kernel.apply(h2.view()).unwrap().mapv(|z| z * cb);
        prop_assert!(max_rel(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn global_phase_shift_leaves_loss_unchanged(config in config_strategy(), seed in any::<u64>(),
                                                 frames in 1usize..10, theta in 0.0f64..(2.0 * PI)) {
        let kernel = ConsistencyKernel::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_complex(frames, config.window_len(), &mut rng);
        let spec = Spectrogram::from_array(h, &config).unwrap();
        let base = kernel.loss_ec(&spec).unwrap();
        let rotated = kernel.loss_ec(&spec.scaled(Complex64::from_polar(1.0, theta))).unwrap();
        prop_assert!((base - rotated).abs() <= 1e-12 * base);
    }

    #[test]
    fn adjoint_pairs_with_forward(config in config_strategy(), seed in any::<u64>(), frames in 1usize..10) {
        let kernel = ConsistencyKernel::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.window_len();
        let x = random_complex(frames, n, &mut rng);
        let y = random_complex(frames, n, &mut rng);
        let cx = kernel.apply(x.view()).unwrap();
        let cty = kernel.apply_adjoint(y.view()).unwrap();
        let lhs: Complex64 = cx.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(&cty).map(|(a, b)| a * b.conj()).sum();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }
}
