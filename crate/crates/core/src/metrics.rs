//! Exactly computable evaluation metrics: normalized consistency, spectral
//! convergence and an SNR maximized over sign and integer delay.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::consistency::{energy, ConsistencyKernel};
use crate::error::{Error, Result};
use crate::stft::{check_same_dim, MagnitudeField, Signal, Spectrogram};

/// Reported dB values are clamped to `±DB_LIMIT`.
pub const DB_LIMIT: f64 = 300.0;

fn clamp_db(db: f64) -> f64 {
    if db.is_nan() {
        return db;
    }
    db.clamp(-DB_LIMIT, DB_LIMIT)
}

/// `sqrt(L_EC(H) / ‖H‖²)`.
pub fn consistency_measure(spec: &Spectrogram, kernel: &ConsistencyKernel) -> Result<f64> {
    let total = spec.energy();
    if total == 0.0 {
        return Err(Error::UndefinedMeasure(
            "consistency of an all-zero spectrogram".into(),
        ));
    }
    let residual = kernel.residual(spec)?;
    Ok((energy(residual.as_array().view()) / total).sqrt())
}

/// `20·log10(‖A_ref − A_est‖_F / ‖A_ref‖_F)`, floored at `−DB_LIMIT`.
pub fn spectral_convergence(reference: &MagnitudeField, estimate: &MagnitudeField) -> Result<f64> {
    check_same_dim(reference.dim(), estimate.dim())?;
    let ref_energy: f64 = reference.as_array().iter().map(|a| a * a).sum();
    if ref_energy == 0.0 {
        return Err(Error::UndefinedMeasure(
            "spectral convergence against a zero reference".into(),
        ));
    }
    let diff = Zip::from(reference.as_array())
        .and(estimate.as_array())
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    Ok(clamp_db(10.0 * (diff / ref_energy).log10()))
}

/// Sign and delay applied to the estimate before comparison.
///
/// `shift = s` compares `ref[i]` with `sign·est[i + s]`, so a positive shift
/// advances the estimate; an estimate delayed by `d` samples aligns at
/// `shift = d`. Only overlapping indices are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub sign: i8,
    pub shift: isize,
}

fn snr_at(reference: &[f64], estimate: &[f64], sign: f64, shift: isize) -> Option<f64> {
    let len = reference.len() as isize;
    let lo = (-shift).max(0);
    let hi = (len - shift).min(len);
    if lo >= hi {
        return None;
    }
    let (mut signal, mut noise) = (0.0, 0.0);
    for i in lo..hi {
        let r = reference[i as usize];
        let e = sign * estimate[(i + shift) as usize];
        signal += r * r;
        noise += (r - e) * (r - e);
    }
    if signal == 0.0 {
        return None;
    }
    Some(if noise == 0.0 {
        DB_LIMIT
    } else {
        clamp_db(10.0 * (signal / noise).log10())
    })
}

fn check_signals(reference: &Signal, estimate: &Signal) -> Result<()> {
    if reference.is_empty() || reference.len() != estimate.len() {
        return Err(Error::Input(format!(
            "SNR needs equal non-zero lengths (got {} and {})",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.energy() == 0.0 {
        return Err(Error::UndefinedMeasure(
            "SNR against a zero reference".into(),
        ));
    }
    Ok(())
}

/// Plain SNR in dB with no realignment.
pub fn snr(reference: &Signal, estimate: &Signal) -> Result<f64> {
    check_signals(reference, estimate)?;
    Ok(snr_at(reference.samples(), estimate.samples(), 1.0, 0).expect("nonzero reference"))
}

/// SNR maximized over `sign ∈ {+1, −1}` and `shift ∈ [−radius, radius]`.
/// Ties keep the smallest `|shift|`, then `+1`.
pub fn aligned_snr(
    reference: &Signal,
    estimate: &Signal,
    search_radius: usize,
) -> Result<(f64, Alignment)> {
    check_signals(reference, estimate)?;
    let radius = search_radius as isize;
    let mut best: Option<(f64, Alignment)> = None;
    let shifts = std::iter::once(0).chain((1..=radius).flat_map(|s| [-s, s]));
    for shift in shifts {
        for sign in [1i8, -1] {
            let Some(db) = snr_at(reference.samples(), estimate.samples(), sign as f64, shift)
            else {
                continue;
            };
            if best.is_none_or(|(b, _)| db > b) {
                best = Some((db, Alignment { sign, shift }));
            }
        }
    }
    Ok(best.expect("zero shift always has a nonzero reference"))
}

/// Summary of a reconstruction against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub consistency_measure: f64,
    pub spectral_convergence_db: f64,
    pub aligned_snr_db: f64,
    pub alignment: Alignment,
    pub search_radius: usize,
}

impl EvalReport {
    /// `estimate` is the spectrogram the solver produced (`A·e^{jP′}`);
    /// the magnitudes compared are those of the reference and of the
    /// reconstruction's own STFT.
    pub fn compute(
        reference: &Signal,
        reconstruction: &Signal,
        estimate: &Spectrogram,
        kernel: &ConsistencyKernel,
        search_radius: usize,
    ) -> Result<Self> {
        let config = kernel.config();
        let ref_mag = crate::stft::stft(reference, config)?.magnitude();
        let rec_mag = crate::stft::stft(reconstruction, config)?.magnitude();
        let (aligned_snr_db, alignment) = aligned_snr(reference, reconstruction, search_radius)?;
        Ok(Self {
            consistency_measure: consistency_measure(estimate, kernel)?,
            spectral_convergence_db: spectral_convergence(&ref_mag, &rec_mag)?,
            aligned_snr_db,
            alignment,
            search_radius,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{project, stft, StftConfig, WindowKind};
    use ndarray::Array2;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn consistency_of_clean_stft_is_tiny() {
        let cfg = StftConfig::new(128, 32, WindowKind::Hann).unwrap();
        let kernel = ConsistencyKernel::new(&cfg);
        let spec = stft(&random_signal(900, 1), &cfg).unwrap();
        assert!(consistency_measure(&spec, &kernel).unwrap() < 1e-7);
    }

    #[test]
    fn consistency_matches_projection_and_is_scale_invariant() {
        let cfg = StftConfig::new(32, 8, WindowKind::Hann).unwrap();
        let kernel = ConsistencyKernel::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = Array2::from_shape_fn((9, 32), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let spec = Spectrogram::from_array(h.clone(), &cfg).unwrap();
        let oracle = {
            let d = project(h.view(), &cfg) - &h;
            let num: f64 = d.iter().map(|z| z.norm_sqr()).sum();
            let den: f64 = h.iter().map(|z| z.norm_sqr()).sum();
            (num / den).sqrt()
        };
        let got = consistency_measure(&spec, &kernel).unwrap();
        assert!((got - oracle).abs() < 1e-9);
        let rotated =
            consistency_measure(&spec.scaled(Complex64::from_polar(1.0, 0.3)), &kernel).unwrap();
        assert!((rotated - got).abs() < 1e-12);
        let scaled = consistency_measure(&spec.scaled(Complex64::new(-3.0, 7.5)), &kernel).unwrap();
        assert!((scaled - got).abs() < 1e-12);
    }

    #[test]
    fn zero_spectrogram_measure_is_undefined() {
        let cfg = StftConfig::new(8, 4, WindowKind::Hann).unwrap();
        let kernel = ConsistencyKernel::new(&cfg);
        let spec = Spectrogram::from_array(Array2::zeros((3, 8)), &cfg).unwrap();
        assert!(matches!(
            consistency_measure(&spec, &kernel),
            Err(Error::UndefinedMeasure(_))
        ));
    }

    #[test]
    fn spectral_convergence_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Array2::from_shape_fn((4, 6), |_| rng.gen_range(0.1..2.0));
        let reference = MagnitudeField::new(a.clone()).unwrap();
        assert_eq!(
            spectral_convergence(&reference, &reference).unwrap(),
            -DB_LIMIT
        );
        let zero = MagnitudeField::zeros(4, 6);
        assert!(spectral_convergence(&reference, &zero).unwrap().abs() < 1e-12);
        let scaled = MagnitudeField::new(a * 0.9).unwrap();
        assert!((spectral_convergence(&reference, &scaled).unwrap() + 20.0).abs() < 1e-9);
        assert!(spectral_convergence(&zero, &reference).is_err());
    }

    #[test]
    fn aligned_snr_examples() {
        let x = random_signal(500, 5);
        let (db, al) = aligned_snr(&x, &x, 4).unwrap();
        assert_eq!(db, DB_LIMIT);
        assert_eq!(al, Alignment { sign: 1, shift: 0 });

        let neg = Signal::new(x.samples().iter().map(|v| -v).collect(), 16_000).unwrap();
        let (db, al) = aligned_snr(&x, &neg, 4).unwrap();
        assert_eq!(db, DB_LIMIT);
        assert_eq!(al, Alignment { sign: -1, shift: 0 });

        let mut delayed = vec![0.0; 3];
        delayed.extend_from_slice(&x.samples()[..497]);
        let delayed = Signal::new(delayed, 16_000).unwrap();
        let (db, al) = aligned_snr(&x, &delayed, 5).unwrap();
        assert_eq!(db, DB_LIMIT);
        assert_eq!(al, Alignment { sign: 1, shift: 3 });
    }

    #[test]
    fn aligned_snr_dominates_plain_snr() {
        for seed in 0..20 {
            let x = random_signal(300, seed);
            let y = random_signal(300, seed + 100);
            let plain = snr(&x, &y).unwrap();
            let (aligned, _) = aligned_snr(&x, &y, 6).unwrap();
            assert!(aligned >= plain);
        }
    }

    #[test]
    fn snr_errors() {
        let x = random_signal(10, 1);
        let short = random_signal(9, 1);
        assert!(matches!(aligned_snr(&x, &short, 1), Err(Error::Input(_))));
        let zero = Signal::new(vec![0.0; 10], 16_000).unwrap();
        assert!(aligned_snr(&zero, &x, 1).is_err());
    }
}
