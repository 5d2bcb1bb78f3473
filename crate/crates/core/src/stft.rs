//! Full-band STFT / iSTFT with a canonical dual synthesis window.
//!
//! Conventions used throughout the crate:
//!
//! * forward DFT carries no scale: `H[m, n] = Σ_k W[k] x[mR + k] e^{-j2πnk/N}`;
//! * the inverse DFT carries the usual `1/N`, and overlap-add applies `S`
//!   with no further gain;
//! * `S[n] = W[n] / Σ_q W[n + qR]²`, so `Σ_q W·S = 1` on every offset;
//! * the signal is zero-padded by `N − R` in front and up to frame alignment
//!   at the end, so every original sample is covered by exactly `Q` frames.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Periodic window of length `len`, sampled on its support only.
    pub fn build(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / len as f64).cos()))
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::Hann => "hann",
            WindowKind::Rectangular => "rectangular",
        })
    }
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "rectangular" | "rect" => Ok(WindowKind::Rectangular),
            other => Err(Error::Config(format!("unknown window kind '{other}'"))),
        }
    }
}

/// Identity of an [`StftConfig`]; spectrograms and kernels carry it so that
/// mismatched pairs are rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfigId {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

/// Window length `N`, hop `R`, analysis window `W` and synthesis window `S`.
#[derive(Clone)]
pub struct StftConfig {
    id: ConfigId,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for StftConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StftConfig")
            .field("window_len", &self.id.window_len)
            .field("hop", &self.id.hop)
            .field("window", &self.id.window)
            .finish()
    }
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize, window: WindowKind) -> Result<Self> {
        if window_len == 0 || hop == 0 {
            return Err(Error::Config(format!(
                "window length and hop must be positive (got N={window_len}, R={hop})"
            )));
        }
        if !window_len.is_multiple_of(hop) {
            return Err(Error::Config(format!(
                "window length {window_len} is not an integer multiple of hop {hop}"
            )));
        }
        if window == WindowKind::Hann && window_len < 2 * hop {
            return Err(Error::Config(format!(
                "hann window needs N >= 2R (got N={window_len}, R={hop})"
            )));
        }

        let analysis = window.build(window_len);
        let mut square_sum = vec![0.0; hop];
        for (n, w) in analysis.iter().enumerate() {
            square_sum[n % hop] += w * w;
        }
        if let Some(offset) = square_sum.iter().position(|&s| s <= 0.0) {
            return Err(Error::DegenerateWindow { offset });
        }
        let synthesis = analysis
            .iter()
            .enumerate()
            .map(|(n, w)| w / square_sum[n % hop])
            .collect();

        let mut planner = FftPlanner::new();
        Ok(Self {
            id: ConfigId {
                window_len,
                hop,
                window,
            },
            analysis,
            synthesis,
            forward: planner.plan_fft_forward(window_len),
            inverse: planner.plan_fft_inverse(window_len),
        })
    }

    /// The 512/128 Hann configuration used for all defaults.
    pub fn default_hann() -> Self {
        Self::new(512, 128, WindowKind::Hann).expect("512/128 hann is valid")
    }

    pub fn id(&self) -> ConfigId {
        self.id
    }

    pub fn window_len(&self) -> usize {
        self.id.window_len
    }

    pub fn hop(&self) -> usize {
        self.id.hop
    }

    pub fn window_kind(&self) -> WindowKind {
        self.id.window
    }

    /// `Q = N / R`.
    pub fn overlap(&self) -> usize {
        self.id.window_len / self.id.hop
    }

    pub fn analysis_window(&self) -> &[f64] {
        &self.analysis
    }

    pub fn synthesis_window(&self) -> &[f64] {
        &self.synthesis
    }

    /// `Σ_q W[n+qR]·S[n+qR]` for each offset `n` in `[0, R)`.
    pub fn cola_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.hop()];
        for (n, (w, s)) in self.analysis.iter().zip(&self.synthesis).enumerate() {
            sums[n % self.hop()] += w * s;
        }
        sums
    }

    /// Leading zero padding applied to a signal before framing.
    pub fn lead_pad(&self) -> usize {
        self.window_len() - self.hop()
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frames_for_len(&self, len: usize) -> usize {
        (self.lead_pad() + len.max(1) - 1) / self.hop() + 1
    }

    /// Length of the padded time axis spanned by `frames` frames.
    pub fn padded_len(&self, frames: usize) -> usize {
        (frames.max(1) - 1) * self.hop() + self.window_len()
    }

    /// Constant `c` with `‖synthesize(H)‖² ≤ c·‖H‖²` for every spectrogram.
    pub fn synthesis_energy_bound(&self) -> f64 {
        let mut sums = vec![0.0; self.hop()];
        for (n, s) in self.synthesis.iter().enumerate() {
            sums[n % self.hop()] += s * s;
        }
        sums.into_iter().fold(0.0, f64::max) / self.window_len() as f64
    }

    pub(crate) fn fft_forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    pub(crate) fn check(&self, id: ConfigId) -> Result<()> {
        if id == self.id {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }
}

/// A mono time-domain signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// Non-negative real `M×N` field (`A = |H|`).
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeField(Array2<f64>);

impl MagnitudeField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(Error::Input(
                "magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self(values.as_standard_layout().into_owned()))
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self(Array2::zeros((frames, bins)))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

/// Real `M×N` phase field. Values need not be wrapped.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField(Array2<f64>);

impl PhaseField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("phase values must be finite".into()));
        }
        Ok(Self(values.as_standard_layout().into_owned()))
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self(Array2::zeros((frames, bins)))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Adds `theta` to every bin.
    pub fn shifted(&self, theta: f64) -> Self {
        Self(self.0.mapv(|p| p + theta))
    }
}

/// Complex `M×N` spectrogram carrying all `N` bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    data: Array2<Complex64>,
    config: ConfigId,
    signal_len: usize,
    sample_rate: u32,
}

/// Sample rate assumed for spectrograms that were not produced from audio.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

impl Spectrogram {
    /// Wraps a raw `M×N` array. The signal length defaults to `M·R`, i.e.
    /// everything after the leading pad.
    pub fn from_array(data: Array2<Complex64>, config: &StftConfig) -> Result<Self> {
        let (frames, bins) = data.dim();
        if frames == 0 {
            return Err(Error::Input("spectrogram needs at least one frame".into()));
        }
        if bins != config.window_len() {
            return Err(Error::ShapeMismatch {
                expected: (frames, config.window_len()),
                actual: (frames, bins),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Input("spectrogram entries must be finite".into()));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
            config: config.id(),
            signal_len: frames * config.hop(),
            sample_rate: DEFAULT_SAMPLE_RATE,
        })
    }

    /// Builds the full band from `N/2 + 1` non-negative-frequency bins using
    /// Hermitian symmetry.
    pub fn from_half_spectrum(half: ArrayView2<Complex64>, config: &StftConfig) -> Result<Self> {
        let n = config.window_len();
        let (frames, half_bins) = half.dim();
        if half_bins != n / 2 + 1 {
            return Err(Error::ShapeMismatch {
                expected: (frames, n / 2 + 1),
                actual: (frames, half_bins),
            });
        }
        let mut full = Array2::zeros((frames, n));
        for m in 0..frames {
            for k in 0..n {
                full[[m, k]] = if k < half_bins {
                    half[[m, k]]
                } else {
                    half[[m, n - k]].conj()
                };
            }
        }
        Self::from_array(full, config)
    }

    /// `A·e^{jP}`.
    pub fn from_polar(
        mag: &MagnitudeField,
        phase: &PhaseField,
        config: &StftConfig,
    ) -> Result<Self> {
        check_same_dim(mag.dim(), phase.dim())?;
        let mut data = Array2::zeros(mag.dim());
        ndarray::Zip::from(&mut data)
            .and(mag.as_array())
            .and(phase.as_array())
            .for_each(|h, &a, &p| *h = Complex64::from_polar(a, p));
        Self::from_array(data, config)
    }

    pub fn with_signal_len(mut self, len: usize) -> Self {
        self.signal_len = len;
        self
    }

    pub fn with_sample_rate(mut self, sample_rate: u32) -> Self {
        self.sample_rate = sample_rate;
        self
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<Complex64> {
        self.data
    }

    pub fn config_id(&self) -> ConfigId {
        self.config
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn magnitude(&self) -> MagnitudeField {
        MagnitudeField(self.data.mapv(|z| z.norm()))
    }

    pub fn phase(&self) -> PhaseField {
        PhaseField(self.data.mapv(|z| z.arg()))
    }

    /// `‖H‖²` (Frobenius).
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Multiplies every bin by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            data: self.data.mapv(|z| z * factor),
            ..self.clone()
        }
    }
}

pub(crate) fn check_same_dim(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, actual })
    }
}

/// Frames `signal` (already padded; zero beyond its end) into `frames` rows
/// with `window`, without any further padding.
pub fn analyze_with(
    signal: &[Complex64],
    window: &[f64],
    frames: usize,
    config: &StftConfig,
) -> Array2<Complex64> {
    let n = config.window_len();
    let hop = config.hop();
    let mut out = Array2::zeros((frames, n));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (m, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for (k, slot) in buf.iter_mut().enumerate() {
            let x = signal.get(m * hop + k).copied().unwrap_or_default();
            *slot = x * window[k];
        }
        config.fft_forward(&mut buf);
        row.iter_mut().zip(&buf).for_each(|(h, b)| *h = *b);
    }
    out
}

/// Raw analysis with the analysis window.
pub fn analyze(signal: &[Complex64], frames: usize, config: &StftConfig) -> Array2<Complex64> {
    analyze_with(signal, config.analysis_window(), frames, config)
}

/// Weighted overlap-add over the full padded time axis, `(M−1)R + N`
/// samples, without taking the real part.
pub fn synthesize(spec: ArrayView2<Complex64>, config: &StftConfig) -> Vec<Complex64> {
    let n = config.window_len();
    let hop = config.hop();
    let frames = spec.nrows();
    let scale = 1.0 / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); config.padded_len(frames)];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (m, row) in spec.axis_iter(Axis(0)).enumerate() {
        buf.iter_mut().zip(row.iter()).for_each(|(b, h)| *b = *h);
        config.fft_inverse(&mut buf);
        let s = config.synthesis_window();
        for k in 0..n {
            out[m * hop + k] += buf[k] * (s[k] * scale);
        }
    }
    out
}

/// `STFT(iSTFT(H))` on the full padded axis. The consistency residual
/// equals `project(H) − H`.
pub fn project(spec: ArrayView2<Complex64>, config: &StftConfig) -> Array2<Complex64> {
    let signal = synthesize(spec, config);
    analyze(&signal, spec.nrows(), config)
}

fn padded_signal(signal: &Signal, config: &StftConfig) -> (Vec<Complex64>, usize) {
    let frames = config.frames_for_len(signal.len());
    let mut padded = vec![Complex64::new(0.0, 0.0); config.padded_len(frames)];
    let lead = config.lead_pad();
    for (slot, &x) in padded[lead..].iter_mut().zip(signal.samples()) {
        slot.re = x;
    }
    (padded, frames)
}

pub fn stft(signal: &Signal, config: &StftConfig) -> Result<Spectrogram> {
    if signal.is_empty() {
        return Err(Error::Input("cannot analyze an empty signal".into()));
    }
    let (padded, frames) = padded_signal(signal, config);
    Ok(Spectrogram {
        data: analyze(&padded, frames, config),
        config: config.id(),
        signal_len: signal.len(),
        sample_rate: signal.sample_rate(),
    })
}

/// Overlap-add resynthesis cropped to the spectrogram's signal length. The
/// imaginary part (nonzero only for non-Hermitian input) is dropped.
pub fn istft(spec: &Spectrogram, config: &StftConfig) -> Result<Signal> {
    config.check(spec.config_id())?;
    if spec.bins() != config.window_len() {
        return Err(Error::ShapeMismatch {
            expected: (spec.frames(), config.window_len()),
            actual: spec.data().dim(),
        });
    }
    let full = synthesize(spec.data().view(), config);
    let lead = config.lead_pad();
    let samples = full
        .iter()
        .skip(lead)
        .take(spec.signal_len())
        .map(|z| z.re)
        .chain(std::iter::repeat(0.0))
        .take(spec.signal_len())
        .collect();
    Signal::new(samples, spec.sample_rate())
}

/// `b·|H|^a·e^{j∠H}` elementwise. Zero bins stay zero.
pub fn compress_magnitude(spec: &Spectrogram, exponent: f64, scale: f64) -> Result<Spectrogram> {
    if !(exponent > 0.0 && exponent <= 1.0) {
        return Err(Error::Config(format!(
            "compression exponent must lie in (0, 1], got {exponent}"
        )));
    }
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Config(format!(
            "compression scale must be positive, got {scale}"
        )));
    }
    let data = spec.data.mapv(|z| {
        let r = z.norm();
        if r == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            z * (scale * r.powf(exponent) / r)
        }
    });
    Ok(Spectrogram {
        data,
        ..spec.clone()
    })
}
