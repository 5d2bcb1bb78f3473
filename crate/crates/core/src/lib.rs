//! Consistent-spectrogram toolkit.
//!
//! A complex time-frequency array is *consistent* when it is the STFT of
//! some signal. This crate provides the explicit consistency residual and
//! its squared-norm loss, the usual phase-distance losses for comparison,
//! and two phase-reconstruction solvers (Griffin-Lim and gradient descent).
//!
//! ```
//! use specconsist::{stft, ConsistencyKernel, Signal, StftConfig};
//!
//! let config = StftConfig::default_hann();
//! let kernel = ConsistencyKernel::new(&config);
//! let x = Signal::new((0..2048).map(|i| (i as f64 * 0.05).sin()).collect(), 16_000)?;
//! let spec = stft(&x, &config)?;
//! assert!(kernel.loss_ec(&spec)? < 1e-16 * spec.energy());
//! # Ok::<(), specconsist::Error>(())
//! ```

pub mod audio_io;
pub mod consistency;
mod error;
pub mod metrics;
pub mod phase_losses;
pub mod solvers;
pub mod stft;

pub use consistency::{loss_ec, ConsistencyKernel, ResidualField};
pub use error::{Error, Result};
pub use metrics::{aligned_snr, consistency_measure, spectral_convergence, Alignment, EvalReport};
pub use solvers::{
    gd_reconstruct, griffin_lim, random_phase, reconstruct_signal, InitKind, IterationRecord,
    LossKind, Parameterization, SolveTrace, SolverOptions, StepRule,
};
pub use stft::{
    compress_magnitude, istft, stft, ConfigId, MagnitudeField, PhaseField, Signal, Spectrogram,
    StftConfig, WindowKind,
};
