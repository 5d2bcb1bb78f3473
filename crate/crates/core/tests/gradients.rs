//! Analytic phase gradients against central finite differences.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specconsist::phase_losses::{self, DerivativeBase, Norm};
use specconsist::stft::{MagnitudeField, PhaseField, StftConfig, WindowKind};
use specconsist::{ConsistencyKernel, Result};

const EPS: f64 = 1e-6;

struct Case {
    mag: MagnitudeField,
    target: PhaseField,
    estimate: PhaseField,
}

fn case(seed: u64, frames: usize, bins: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field =
        |lo: f64, hi: f64| Array2::from_shape_fn((frames, bins), |_| rng.gen_range(lo..hi));
    Case {
        mag: MagnitudeField::new(field(0.1, 2.0)).unwrap(),
        target: PhaseField::new(field(-PI, PI)).unwrap(),
        estimate: PhaseField::new(field(-PI, PI)).unwrap(),
    }
}

/// Max-norm relative error between `grad` and a central difference of `f`.
fn fd_error(f: impl Fn(&PhaseField) -> Result<f64>, at: &PhaseField, grad: &Array2<f64>) -> f64 {
    let mut fd = Array2::zeros(at.dim());
    for (idx, slot) in fd.indexed_iter_mut() {
        let mut plus = at.as_array().clone();
        let mut minus = at.as_array().clone();
        plus[idx] += EPS;
        minus[idx] -= EPS;
        let hi = f(&PhaseField::new(plus).unwrap()).unwrap();
        let lo = f(&PhaseField::new(minus).unwrap()).unwrap();
        *slot = (hi - lo) / (2.0 * EPS);
    }
    let diff = (&fd - grad).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diff / scale
}

fn check_all(frames: usize, n: usize, hop: usize, seeds: std::ops::Range<u64>, tol: f64) {
    let config = StftConfig::new(n, hop, WindowKind::Hann).unwrap();
    let kernel = ConsistencyKernel::new(&config);
    for seed in seeds {
        let Case {
            mag,
            target,
            estimate,
        } = case(seed, frames, n);
        let mut errors = Vec::new();

        let g = kernel.grad_loss_ec_phase(&mag, &estimate).unwrap();
        errors.push((
            "ec",
            fd_error(|p| kernel.loss_ec_phase(&mag, p), &estimate, &g),
        ));

        let g = phase_losses::grad_loss_cos(&target, &estimate).unwrap();
        errors.push((
            "cos",
            fd_error(|p| phase_losses::loss_cos(&target, p), &estimate, &g),
        ));

        let g = phase_losses::grad_loss_aw(&target, &estimate).unwrap();
        errors.push((
            "aw",
            fd_error(|p| phase_losses::loss_aw(&target, p), &estimate, &g),
        ));

        for (name, norm) in [("comp-l1", Norm::L1), ("comp-l2", Norm::L2)] {
            let g = phase_losses::grad_loss_complex(&target, &estimate, &mag, norm).unwrap();
            let e = fd_error(
                |p| phase_losses::loss_complex(&target, p, &mag, norm),
                &estimate,
                &g,
            );
            errors.push((name, e));
        }

        for (name, norm) in [("time-l1", Norm::L1), ("time-l2", Norm::L2)] {
            let g = phase_losses::grad_loss_time(&target, &estimate, &mag, &config, norm).unwrap();
            let e = fd_error(
                |p| phase_losses::loss_time(&target, p, &mag, &config, norm),
                &estimate,
                &g,
            );
            errors.push((name, e));
        }

        for (name, base) in [
            ("cos-derv", DerivativeBase::Cos),
            ("aw-derv", DerivativeBase::Aw),
        ] {
            let g = phase_losses::grad_loss_with_derivatives(&target, &estimate, base).unwrap();
            let e = fd_error(
                |p| phase_losses::loss_with_derivatives(&target, p, base),
                &estimate,
                &g,
            );
            errors.push((name, e));
        }

        for (name, e) in errors {
            assert!(e < tol, "{name} seed {seed}: relative error {e:e}");
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    check_all(12, 64, 16, 0..8, 1e-5);
}

#[test]
fn gradients_match_on_short_and_rectangular_layouts() {
    check_all(3, 16, 4, 100..104, 1e-5);

    let config = StftConfig::new(8, 8, WindowKind::Rectangular).unwrap();
    let kernel = ConsistencyKernel::new(&config);
    let Case { mag, estimate, .. } = case(7, 5, 8);
    let g = kernel.grad_loss_ec_phase(&mag, &estimate).unwrap();
    // No overlap: every array is consistent, so the gradient is zero.
    assert!(g.iter().all(|v| v.abs() < 1e-12));
}
