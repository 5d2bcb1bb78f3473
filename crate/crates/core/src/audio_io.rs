//! Mono WAV input/output and deterministic test signals.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::Signal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Pcm16,
    Float32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavMeta {
    pub sample_rate: u32,
    /// Always 1 once loaded.
    pub channels: u16,
    pub encoding: Encoding,
    pub length: usize,
}

impl WavMeta {
    pub fn mono(sample_rate: u32, encoding: Encoding, length: usize) -> Self {
        Self {
            sample_rate,
            channels: 1,
            encoding,
            length,
        }
    }
}

/// Reads a pcm16 or float32 WAV file. Multi-channel input is averaged when
/// `downmix` is set and rejected otherwise.
pub fn read_wav(path: impl AsRef<Path>, downmix: bool) -> Result<(Signal, WavMeta)> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let encoding = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => Encoding::Pcm16,
        (hound::SampleFormat::Float, 32) => Encoding::Float32,
        (format, bits) => {
            return Err(Error::Input(format!(
                "unsupported wav encoding: {format:?} with {bits} bits per sample"
            )))
        }
    };
    let channels = spec.channels as usize;
    if channels > 1 && !downmix {
        return Err(Error::Input(format!(
            "{channels}-channel input; pass --downmix to average channels"
        )));
    }

    let interleaved: Vec<f64> = match encoding {
        Encoding::Pcm16 => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        Encoding::Float32 => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
    };
    if interleaved.is_empty() {
        return Err(Error::Input("wav file has no samples".into()));
    }
    let samples: Vec<f64> = if channels > 1 {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    } else {
        interleaved
    };
    let meta = WavMeta::mono(spec.sample_rate, encoding, samples.len());
    Ok((Signal::new(samples, spec.sample_rate)?, meta))
}

/// Writes a mono WAV file and returns how many samples were clipped to
/// `[−1, 1]` (always 0 for float32).
pub fn write_wav(signal: &Signal, meta: &WavMeta, path: impl AsRef<Path>) -> Result<usize> {
    if signal.is_empty() {
        return Err(Error::Input("refusing to write an empty wav file".into()));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: meta.sample_rate,
        bits_per_sample: match meta.encoding {
            Encoding::Pcm16 => 16,
            Encoding::Float32 => 32,
        },
        sample_format: match meta.encoding {
            Encoding::Pcm16 => hound::SampleFormat::Int,
            Encoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    let mut clipped = 0;
    for &x in signal.samples() {
        match meta.encoding {
            Encoding::Pcm16 => {
                if x.abs() > 1.0 {
                    clipped += 1;
                }
                let v = (x.clamp(-1.0, 1.0) * 32768.0).round();
                writer.write_sample(v.clamp(i16::MIN as f64, i16::MAX as f64) as i16)?;
            }
            Encoding::Float32 => writer.write_sample(x as f32)?,
        }
    }
    writer.finalize()?;
    Ok(clipped)
}

/// Deterministic test signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SynthKind {
    /// `amplitude·sin(2πft + φ)`.
    Sine {
        freq: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Sum of sines, one per `(freq, amplitude, phase)` triple.
    Multisine {
        components: Vec<(f64, f64, f64)>,
    },
    /// Linear sweep from `f0` to `f1` over the whole duration.
    Chirp {
        f0: f64,
        f1: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Uniform white noise in `[−amplitude, amplitude)`.
    Noise {
        seed: u64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Impulse {
        index: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl SynthKind {
    /// Four-tone mixture used by the reconstruction experiments; peak below 0.9.
    pub fn default_multisine() -> Self {
        SynthKind::Multisine {
            components: vec![
                (220.0, 0.4, 0.0),
                (523.25, 0.25, 1.1),
                (1046.5, 0.15, 2.3),
                (2793.8, 0.1, 0.7),
            ],
        }
    }

    fn frequencies(&self) -> Vec<f64> {
        match self {
            SynthKind::Sine { freq, .. } => vec![*freq],
            SynthKind::Multisine { components } => components.iter().map(|c| c.0).collect(),
            SynthKind::Chirp { f0, f1, .. } => vec![*f0, *f1],
            SynthKind::Noise { .. } | SynthKind::Impulse { .. } => vec![],
        }
    }
}

/// Renders `duration` seconds at `sample_rate`.
pub fn synth(kind: &SynthKind, sample_rate: u32, duration: f64) -> Result<Signal> {
    if sample_rate == 0 {
        return Err(Error::Input("sample rate must be positive".into()));
    }
    if duration <= 0.0 || !duration.is_finite() {
        return Err(Error::Input(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let sr = sample_rate as f64;
    let nyquist = sr / 2.0;
    if let Some(f) = kind
        .frequencies()
        .into_iter()
        .find(|f| !(*f >= 0.0 && *f < nyquist))
    {
        return Err(Error::Input(format!(
            "frequency {f} Hz outside [0, {nyquist}) Hz"
        )));
    }
    let len = (duration * sr).round() as usize;
    if len == 0 {
        return Err(Error::Input("duration rounds to zero samples".into()));
    }
    let t = |i: usize| i as f64 / sr;
    let samples: Vec<f64> = match kind {
        SynthKind::Sine {
            freq,
            phase,
            amplitude,
        } => (0..len)
            .map(|i| amplitude * (2.0 * PI * freq * t(i) + phase).sin())
            .collect(),
        SynthKind::Multisine { components } => (0..len)
            .map(|i| {
                components
                    .iter()
                    .map(|&(f, a, p)| a * (2.0 * PI * f * t(i) + p).sin())
                    .sum()
            })
            .collect(),
        SynthKind::Chirp { f0, f1, amplitude } => {
            let total = len as f64 / sr;
            (0..len)
                .map(|i| {
                    let ti = t(i);
                    amplitude * (2.0 * PI * (f0 * ti + (f1 - f0) * ti * ti / (2.0 * total))).sin()
                })
                .collect()
        }
        SynthKind::Noise { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..len)
                .map(|_| amplitude * rng.gen_range(-1.0..1.0))
                .collect()
        }
        SynthKind::Impulse { index } => {
            if *index >= len {
                return Err(Error::Input(format!(
                    "impulse index {index} beyond signal length {len}"
                )));
            }
            let mut v = vec![0.0; len];
            v[*index] = 1.0;
            v
        }
    };
    Signal::new(samples, sample_rate)
}
