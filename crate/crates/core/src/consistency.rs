//! Explicit magnitude-phase consistency constraints.
//!
//! For a configuration `(N, R, W, S)` with `Q = N/R`, the kernel holds
//!
//! ```text
//! α_q(p) = (1/N) Σ_k W[k] S[k+qR] e^{-j2πp(k+qR)/N} − δ_p δ_q,   |q| < Q, p mod N
//! ```
//!
//! and the residual of a spectrogram `H` is
//!
//! ```text
//! r[m, n] = Σ_q e^{j2πqRn/N} (α_q ⊛ H)[m−q, n]
//! ```
//!
//! with `⊛` a circular convolution along frequency and out-of-range frames
//! treated as zero. `r ≡ 0` exactly when `H` is the STFT of a signal, and
//! `r = STFT(iSTFT(H)) − H` in general.
//!
//! Evaluation runs in the DFT domain of the frequency axis: convolving with
//! `α_q` becomes a product with `K_q = DFT(α_q)/N` and the ramp
//! `e^{j2πqRn/N}` becomes a circular shift by `qR`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stft::{check_same_dim, ConfigId, MagnitudeField, PhaseField, Spectrogram, StftConfig};

/// Precomputed `α_q(p)` table plus its frequency-domain form.
#[derive(Clone, Debug)]
pub struct ConsistencyKernel {
    config: StftConfig,
    // (2Q − 1) × N, row q + Q − 1.
    alpha: Array2<Complex64>,
    spectral: Array2<Complex64>,
}

/// Per-bin consistency residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualField(Array2<Complex64>);

impl ResidualField {
    pub fn as_array(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<Complex64> {
        self.0
    }

    /// `Σ |r|²`.
    pub fn energy(&self) -> f64 {
        energy(self.0.view())
    }
}

pub(crate) fn energy(a: ArrayView2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

impl ConsistencyKernel {
    pub fn new(config: &StftConfig) -> Self {
        let n = config.window_len();
        let hop = config.hop();
        let q_max = config.overlap() as isize - 1;
        let taps = (2 * q_max + 1) as usize;
        let w = config.analysis_window();
        let s = config.synthesis_window();
        let twiddle: Vec<Complex64> = (0..n)
            .map(|t| Complex64::from_polar(1.0, -2.0 * PI * t as f64 / n as f64))
            .collect();

        let mut alpha = Array2::zeros((taps, n));
        for (row, q) in (-q_max..=q_max).enumerate() {
            for p in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &wk) in w.iter().enumerate() {
                    let t = k as isize + q * hop as isize;
                    if t < 0 || t >= n as isize {
                        continue;
                    }
                    let t = t as usize;
                    acc += twiddle[(p * t) % n] * (wk * s[t]);
                }
                acc /= n as f64;
                if p == 0 && q == 0 {
                    acc -= 1.0;
                }
                alpha[[row, p]] = acc;
            }
        }

        let mut spectral = alpha.clone();
        for mut row in spectral.axis_iter_mut(Axis(0)) {
            let mut buf = row.to_vec();
            config.fft_forward(&mut buf);
            row.iter_mut()
                .zip(&buf)
                .for_each(|(k, b)| *k = *b / n as f64);
        }

        Self {
            config: config.clone(),
            alpha,
            spectral,
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn config_id(&self) -> ConfigId {
        self.config.id()
    }

    /// `α_q(p)`, with `p` folded modulo `N`; zero for `|q| ≥ Q`.
    pub fn alpha(&self, q: isize, p: isize) -> Complex64 {
        let q_max = self.q_max();
        if q.abs() > q_max {
            return Complex64::new(0.0, 0.0);
        }
        let n = self.config.window_len() as isize;
        self.alpha[[(q + q_max) as usize, p.rem_euclid(n) as usize]]
    }

    fn q_max(&self) -> isize {
        self.config.overlap() as isize - 1
    }

    fn shift(&self, q: isize) -> usize {
        let n = self.config.window_len() as isize;
        (q * self.config.hop() as isize).rem_euclid(n) as usize
    }

    fn check_spec(&self, spec: &Spectrogram) -> Result<()> {
        self.config.check(spec.config_id())
    }

    fn check_bins(&self, h: ArrayView2<Complex64>) -> Result<()> {
        let (frames, bins) = h.dim();
        if frames == 0 || bins != self.config.window_len() {
            return Err(Error::ShapeMismatch {
                expected: (frames.max(1), self.config.window_len()),
                actual: (frames, bins),
            });
        }
        Ok(())
    }

    fn row_spectra(&self, h: ArrayView2<Complex64>) -> Array2<Complex64> {
        let mut out = h.as_standard_layout().into_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            self.config
                .fft_forward(row.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// The residual operator `C` on a raw `M×N` array.
    pub fn apply(&self, h: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        self.check_bins(h)?;
        let (frames, n) = h.dim();
        let spectra = self.row_spectra(h);
        let q_max = self.q_max();
        let mut out = Array2::zeros((frames, n));
        for (m, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let acc = row.as_slice_mut().expect("standard layout");
            for q in -q_max..=q_max {
                let src = m as isize - q;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let x = spectra.row(src as usize);
                let x = x.as_slice().expect("standard layout");
                let kernel = self.spectral.row((q + q_max) as usize);
                let kernel = kernel.as_slice().expect("standard layout");
                let cut = n - self.shift(q);
                let (head, tail) = acc.split_at_mut(n - cut);
                mac(tail, &kernel[..cut], &x[..cut]);
                mac(head, &kernel[cut..], &x[cut..]);
            }
            self.config.fft_inverse(acc);
        }
        Ok(out)
    }

    /// The adjoint `C*`: conjugated kernel with reversed frame and
    /// frequency shifts, so that `⟨C h, g⟩ = ⟨h, C* g⟩`.
    pub fn apply_adjoint(&self, g: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        self.check_bins(g)?;
        let (frames, n) = g.dim();
        let spectra = self.row_spectra(g);
        let q_max = self.q_max();
        let mut out = Array2::zeros((frames, n));
        for (m, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let acc = row.as_slice_mut().expect("standard layout");
            for q in -q_max..=q_max {
                let src = m as isize + q;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let y = spectra.row(src as usize);
                let y = y.as_slice().expect("standard layout");
                let kernel = self.spectral.row((q + q_max) as usize);
                let kernel = kernel.as_slice().expect("standard layout");
                let s = self.shift(q);
                let (head, tail) = acc.split_at_mut(n - s);
                mac_conj(head, &kernel[..n - s], &y[s..]);
                mac_conj(tail, &kernel[n - s..], &y[..s]);
            }
            self.config.fft_inverse(acc);
        }
        Ok(out)
    }

    /// Reference evaluation of `C` by explicit circular convolution,
    /// `O(M·Q·N²)`. Intended for small configurations and cross-checks.
    pub fn apply_direct(&self, h: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        self.check_bins(h)?;
        let (frames, n) = h.dim();
        let q_max = self.q_max();
        let mut out = Array2::zeros((frames, n));
        for m in 0..frames {
            for q in -q_max..=q_max {
                let src = m as isize - q;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let src = src as usize;
                let s = self.shift(q);
                let alpha = self.alpha.row((q + q_max) as usize);
                for bin in 0..n {
                    let mut conv = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        conv += alpha[(bin + n - j) % n] * h[[src, j]];
                    }
                    let ramp =
                        Complex64::from_polar(1.0, 2.0 * PI * ((s * bin) % n) as f64 / n as f64);
                    out[[m, bin]] += ramp * conv;
                }
            }
        }
        Ok(out)
    }

    pub fn residual(&self, spec: &Spectrogram) -> Result<ResidualField> {
        self.check_spec(spec)?;
        self.apply(spec.data().view()).map(ResidualField)
    }

    /// `L_EC(H) = Σ |r[m, n]|²`, unnormalized.
    pub fn loss_ec(&self, spec: &Spectrogram) -> Result<f64> {
        Ok(self.residual(spec)?.energy())
    }

    /// `L_EC(A·e^{jP})`.
    pub fn loss_ec_phase(&self, mag: &MagnitudeField, phase: &PhaseField) -> Result<f64> {
        let h = polar(mag, phase)?;
        Ok(energy(self.apply(h.view())?.view()))
    }

    /// Analytic `∂L_EC/∂P` for `H = A·e^{jP}`.
    pub fn grad_loss_ec_phase(
        &self,
        mag: &MagnitudeField,
        phase: &PhaseField,
    ) -> Result<Array2<f64>> {
        Ok(self.loss_and_grad_phase(mag, phase)?.1)
    }

    /// Loss and phase gradient in one pass (one forward, one adjoint).
    pub fn loss_and_grad_phase(
        &self,
        mag: &MagnitudeField,
        phase: &PhaseField,
    ) -> Result<(f64, Array2<f64>)> {
        let h = polar(mag, phase)?;
        let (loss, grad_h) = self.loss_and_grad_complex(h.view())?;
        Ok((loss, phase_gradient(h.view(), grad_h.view())))
    }

    /// `L_EC(H)` and `G = 2·C*(C H)`, where `dL = Re Σ conj(G)·dH`.
    pub fn loss_and_grad_complex(
        &self,
        h: ArrayView2<Complex64>,
    ) -> Result<(f64, Array2<Complex64>)> {
        let r = self.apply(h)?;
        let loss = energy(r.view());
        let mut g = self.apply_adjoint(r.view())?;
        g.mapv_inplace(|z| z * 2.0);
        Ok((loss, g))
    }

    /// Power-iteration estimate of `‖C‖²` on `frames`-frame spectrograms.
    pub fn operator_norm_sqr(&self, frames: usize, iterations: usize) -> f64 {
        let n = self.config.window_len();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v = Array2::from_shape_fn((frames.max(1), n), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = energy(v.view()).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.mapv_inplace(|z| z / norm);
            let cv = self.apply(v.view()).expect("shape checked");
            estimate = energy(cv.view());
            v = self.apply_adjoint(cv.view()).expect("shape checked");
        }
        estimate
    }
}

/// `acc += a ⊙ b`.
fn mac(acc: &mut [Complex64], a: &[Complex64], b: &[Complex64]) {
    for ((slot, a), b) in acc.iter_mut().zip(a).zip(b) {
        *slot += a * b;
    }
}

/// `acc += conj(a) ⊙ b`.
fn mac_conj(acc: &mut [Complex64], a: &[Complex64], b: &[Complex64]) {
    for ((slot, a), b) in acc.iter_mut().zip(a).zip(b) {
        *slot += a.conj() * b;
    }
}

pub(crate) fn polar(mag: &MagnitudeField, phase: &PhaseField) -> Result<Array2<Complex64>> {
    check_same_dim(mag.dim(), phase.dim())?;
    let mut h = Array2::zeros(mag.dim());
    Zip::from(&mut h)
        .and(mag.as_array())
        .and(phase.as_array())
        .for_each(|z, &a, &p| *z = Complex64::from_polar(a, p));
    Ok(h)
}

/// Chain rule from a complex gradient `G` (with `dL = Re Σ conj(G)·dH`) to
/// the phase of `H = A·e^{jP}`: `∂L/∂P = Im(conj(H)·G)`.
pub(crate) fn phase_gradient(
    h: ArrayView2<Complex64>,
    grad_h: ArrayView2<Complex64>,
) -> Array2<f64> {
    let mut out = Array2::zeros(h.dim());
    Zip::from(&mut out)
        .and(h)
        .and(grad_h)
        .for_each(|o, z, g| *o = (z.conj() * g).im);
    out
}

/// `L_EC` of a spectrogram against its own configuration.
pub fn loss_ec(spec: &Spectrogram, kernel: &ConsistencyKernel) -> Result<f64> {
    kernel.loss_ec(spec)
}
