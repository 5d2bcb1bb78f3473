//! Phase reconstruction from a known magnitude: Griffin-Lim and first-order
//! descent on any of the phase losses.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consistency::{energy, polar, ConsistencyKernel};
use crate::error::{Error, Result};
use crate::phase_losses::{self, DerivativeBase, Norm, TimeTarget};
use crate::stft::{istft, project, MagnitudeField, PhaseField, Signal, Spectrogram, StftConfig};

/// Loss driving [`gd_reconstruct`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Ec,
    Cos,
    Aw,
    CompL1,
    CompL2,
    TimeL1,
    TimeL2,
    CosDerv,
    AwDerv,
}

impl LossKind {
    pub const ALL: [LossKind; 9] = [
        LossKind::Ec,
        LossKind::Cos,
        LossKind::Aw,
        LossKind::CompL1,
        LossKind::CompL2,
        LossKind::TimeL1,
        LossKind::TimeL2,
        LossKind::CosDerv,
        LossKind::AwDerv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ec => "ec",
            LossKind::Cos => "cos",
            LossKind::Aw => "aw",
            LossKind::CompL1 => "comp-l1",
            LossKind::CompL2 => "comp-l2",
            LossKind::TimeL1 => "time-l1",
            LossKind::TimeL2 => "time-l2",
            LossKind::CosDerv => "cos-derv",
            LossKind::AwDerv => "aw-derv",
        }
    }

    /// Whether the loss compares against a target phase.
    pub fn needs_target(self) -> bool {
        self != LossKind::Ec
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    Fixed,
    CosineAnneal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Zeros,
    RandomUniform,
    NoisyPhase,
    Provided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    DirectPhase,
    /// `P′ = atan2(C₁, C₂)`, optimizing `(C₁, C₂)`.
    C1C2,
}

/// Step sizes are in units of `1/L̂`, where `L̂` is a per-loss curvature
/// bound computed from the magnitude, so `1.0` is the classic `1/L` step
/// and `2.0` the edge of guaranteed stability on a quadratic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub initial_step: f64,
    pub final_step: f64,
    pub init: InitKind,
    pub seed: u64,
    pub parameterization: Parameterization,
    /// Stop once the loss decreases by less than this (0 disables).
    pub tolerance: f64,
    /// Phase used by the `noisy-phase` and `provided` inits.
    #[serde(skip)]
    pub initial_phase: Option<PhaseField>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step_rule: StepRule::CosineAnneal,
            initial_step: 2.0,
            final_step: 0.5,
            init: InitKind::RandomUniform,
            seed: 0,
            parameterization: Parameterization::DirectPhase,
            tolerance: 0.0,
            initial_phase: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        for (name, v) in [
            ("initial_step", self.initial_step),
            ("final_step", self.final_step),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::Config(format!(
                "tolerance must be non-negative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    /// Step size for 0-based iteration `k`.
    pub fn step_at(&self, k: usize) -> f64 {
        match self.step_rule {
            StepRule::Fixed => self.initial_step,
            StepRule::CosineAnneal => {
                let span = self.max_iters.saturating_sub(1).max(1) as f64;
                let t = (k as f64 / span).min(1.0);
                self.final_step
                    + 0.5 * (self.initial_step - self.final_step) * (1.0 + (PI * t).cos())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: f64,
    pub consistency_measure: f64,
    pub step_size: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    pub initial_loss: f64,
    pub initial_consistency: f64,
    /// One entry per completed iteration.
    pub records: Vec<IterationRecord>,
    /// Iteration whose phase is returned (0 = the initialization).
    pub best_iter: usize,
    /// Curvature scale dividing every step; 1 for Griffin-Lim.
    pub step_scale: f64,
    pub final_phase: PhaseField,
}

impl SolveTrace {
    /// Loss of the returned phase.
    pub fn final_loss(&self) -> f64 {
        match self.best_iter {
            0 => self.initial_loss,
            k => self.records[k - 1].loss,
        }
    }

    pub fn final_consistency(&self) -> f64 {
        match self.best_iter {
            0 => self.initial_consistency,
            k => self.records[k - 1].consistency_measure,
        }
    }
}

fn random_hermitian_phase(frames: usize, bins: usize, seed: u64) -> Array2<f64> {
    // Antisymmetric across bins so that A·e^{jP} stays the spectrum of a
    // real signal; DC and Nyquist get 0 or π.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Array2::zeros((frames, bins));
    for m in 0..frames {
        for n in 0..=bins / 2 {
            let u = -rng.gen_range(-PI..PI);
            let self_conjugate = n == 0 || 2 * n == bins;
            let v = if self_conjugate {
                if u < 0.0 {
                    PI
                } else {
                    0.0
                }
            } else {
                u
            };
            p[[m, n]] = v;
            if !self_conjugate {
                p[[m, bins - n]] = -v;
            }
        }
    }
    p
}

/// Uniform random phase that keeps `A·e^{jP}` Hermitian in every frame.
pub fn random_phase(dim: (usize, usize), seed: u64) -> PhaseField {
    PhaseField::new(random_hermitian_phase(dim.0, dim.1, seed)).expect("finite by construction")
}

fn initial_phase(mag: &MagnitudeField, opts: &SolverOptions) -> Result<PhaseField> {
    let (frames, bins) = mag.dim();
    match opts.init {
        InitKind::Zeros => Ok(PhaseField::zeros(frames, bins)),
        InitKind::RandomUniform => Ok(random_phase((frames, bins), opts.seed)),
        InitKind::NoisyPhase | InitKind::Provided => {
            let p = opts.initial_phase.clone().ok_or_else(|| {
                Error::Input(format!("init {:?} needs an initial phase", opts.init))
            })?;
            if p.dim() != mag.dim() {
                return Err(Error::ShapeMismatch {
                    expected: mag.dim(),
                    actual: p.dim(),
                });
            }
            Ok(p)
        }
    }
}

fn check_mag(mag: &MagnitudeField, config: &StftConfig) -> Result<()> {
    let (frames, bins) = mag.dim();
    if frames == 0 || bins != config.window_len() {
        return Err(Error::ShapeMismatch {
            expected: (frames.max(1), config.window_len()),
            actual: (frames, bins),
        });
    }
    Ok(())
}

fn relative_consistency(loss_ec: f64, total: f64) -> f64 {
    if total == 0.0 {
        0.0
    } else {
        (loss_ec / total).sqrt()
    }
}

/// Griffin-Lim: `P ← ∠ STFT(iSTFT(A·e^{jP}))`. The traced loss is the
/// inconsistency `‖A·e^{jP} − STFT(iSTFT(A·e^{jP}))‖²`. Bins whose
/// projection vanishes keep their previous phase.
pub fn griffin_lim(
    mag: &MagnitudeField,
    opts: &SolverOptions,
    config: &StftConfig,
) -> Result<(PhaseField, SolveTrace)> {
    opts.validate()?;
    check_mag(mag, config)?;
    let total: f64 = mag.as_array().iter().map(|a| a * a).sum();
    let mut phase = initial_phase(mag, opts)?.into_array();

    let inconsistency = |phase: &Array2<f64>| -> Result<(f64, Array2<num_complex::Complex64>)> {
        let h = polar(mag, &PhaseField::new(phase.clone())?)?;
        let projected = project(h.view(), config);
        Ok((energy((&projected - &h).view()), projected))
    };

    let (initial_loss, mut projected) = inconsistency(&phase)?;
    let mut trace = SolveTrace {
        initial_loss,
        initial_consistency: relative_consistency(initial_loss, total),
        records: Vec::with_capacity(opts.max_iters),
        best_iter: 0,
        step_scale: 1.0,
        final_phase: PhaseField::zeros(0, 0),
    };
    let mut best = (initial_loss, phase.clone());
    let mut previous = initial_loss;

    for k in 0..opts.max_iters {
        Zip::from(&mut phase).and(&projected).for_each(|p, y| {
            if y.norm_sqr() > 0.0 {
                *p = y.arg();
            }
        });
        let (loss, next) = inconsistency(&phase)?;
        projected = next;
        trace.records.push(IterationRecord {
            iter: k + 1,
            loss,
            consistency_measure: relative_consistency(loss, total),
            step_size: 1.0,
        });
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: k + 1,
                trace: Box::new(trace),
            });
        }
        if loss <= best.0 {
            best = (loss, phase.clone());
            trace.best_iter = k + 1;
        }
        let decrease = previous - loss;
        previous = loss;
        if decrease >= 0.0 && decrease < opts.tolerance {
            break;
        }
    }

    let result = PhaseField::new(best.1)?;
    trace.final_phase = result.clone();
    Ok((result, trace))
}

/// What gradient descent minimizes; built once per run.
enum Objective {
    Ec,
    Cos(PhaseField),
    Aw(PhaseField),
    Complex(PhaseField, Norm),
    Time(TimeTarget),
    Derivatives(PhaseField, DerivativeBase),
}

impl Objective {
    fn new(
        loss: LossKind,
        mag: &MagnitudeField,
        target: Option<&PhaseField>,
        config: &StftConfig,
    ) -> Result<Self> {
        let target = match (loss.needs_target(), target) {
            (false, Some(_)) => {
                return Err(Error::Input(
                    "the consistency loss does not take a target phase".into(),
                ))
            }
            (false, None) => return Ok(Objective::Ec),
            (true, None) => {
                return Err(Error::Input(format!("loss '{loss}' needs a target phase")))
            }
            (true, Some(t)) => t.clone(),
        };
        if target.dim() != mag.dim() {
            return Err(Error::ShapeMismatch {
                expected: mag.dim(),
                actual: target.dim(),
            });
        }
        Ok(match loss {
            LossKind::Ec => unreachable!(),
            LossKind::Cos => Objective::Cos(target),
            LossKind::Aw => Objective::Aw(target),
            LossKind::CompL1 => Objective::Complex(target, Norm::L1),
            LossKind::CompL2 => Objective::Complex(target, Norm::L2),
            LossKind::TimeL1 => Objective::Time(TimeTarget::new(&target, mag, config, Norm::L1)?),
            LossKind::TimeL2 => Objective::Time(TimeTarget::new(&target, mag, config, Norm::L2)?),
            LossKind::CosDerv => Objective::Derivatives(target, DerivativeBase::Cos),
            LossKind::AwDerv => Objective::Derivatives(target, DerivativeBase::Aw),
        })
    }

    /// Curvature bound `L̂` of the loss as a function of `P′`.
    fn step_scale(&self, mag: &MagnitudeField, kernel: &ConsistencyKernel) -> f64 {
        let a_max = mag.max();
        let scale = match self {
            Objective::Ec => 2.0 * kernel.operator_norm_sqr(mag.dim().0, 30) * a_max * a_max,
            Objective::Cos(_) => 1.0,
            Objective::Aw(_) => 2.0,
            Objective::Complex(_, Norm::L2) => 2.0 * a_max,
            Objective::Complex(_, Norm::L1) => a_max,
            Objective::Time(_) => 2.0 * kernel.config().synthesis_energy_bound() * a_max * a_max,
            Objective::Derivatives(_, DerivativeBase::Cos) => 9.0,
            Objective::Derivatives(_, DerivativeBase::Aw) => 18.0,
        };
        if scale > 0.0 && scale.is_finite() {
            scale
        } else {
            1.0
        }
    }

    /// Returns `(loss, ∂loss/∂P′, L_EC)`.
    fn evaluate(
        &self,
        mag: &MagnitudeField,
        phase: &PhaseField,
        kernel: &ConsistencyKernel,
    ) -> Result<(f64, Array2<f64>, f64)> {
        let (loss, grad) = match self {
            Objective::Ec => {
                let (loss, grad) = kernel.loss_and_grad_phase(mag, phase)?;
                return Ok((loss, grad, loss));
            }
            Objective::Cos(t) => (
                phase_losses::loss_cos(t, phase)?,
                phase_losses::grad_loss_cos(t, phase)?,
            ),
            Objective::Aw(t) => (
                phase_losses::loss_aw(t, phase)?,
                phase_losses::grad_loss_aw(t, phase)?,
            ),
            Objective::Complex(t, norm) => (
                phase_losses::loss_complex(t, phase, mag, *norm)?,
                phase_losses::grad_loss_complex(t, phase, mag, *norm)?,
            ),
            Objective::Time(target) => target.loss_and_grad(mag, phase, kernel.config())?,
            Objective::Derivatives(t, base) => (
                phase_losses::loss_with_derivatives(t, phase, *base)?,
                phase_losses::grad_loss_with_derivatives(t, phase, *base)?,
            ),
        };
        Ok((loss, grad, kernel.loss_ec_phase(mag, phase)?))
    }
}

/// Descent state in either parameterization.
enum Params {
    Phase(Array2<f64>),
    C1C2(Array2<f64>, Array2<f64>),
}

impl Params {
    fn new(phase: Array2<f64>, parameterization: Parameterization) -> Self {
        match parameterization {
            Parameterization::DirectPhase => Params::Phase(phase),
            Parameterization::C1C2 => Params::C1C2(phase.mapv(f64::sin), phase.mapv(f64::cos)),
        }
    }

    fn phase(&self) -> Array2<f64> {
        match self {
            Params::Phase(p) => p.clone(),
            Params::C1C2(c1, c2) => {
                let mut p = Array2::zeros(c1.dim());
                Zip::from(&mut p)
                    .and(c1)
                    .and(c2)
                    .for_each(|p, &a, &b| *p = a.atan2(b));
                p
            }
        }
    }

    /// Steps against `grad_phase`, chained through `atan2` for `(C₁, C₂)`.
    fn step(&mut self, grad_phase: &Array2<f64>, lr: f64) {
        match self {
            Params::Phase(p) => p.scaled_add(-lr, grad_phase),
            Params::C1C2(c1, c2) => {
                Zip::from(c1).and(c2).and(grad_phase).for_each(|a, b, &g| {
                    let r2 = *a * *a + *b * *b;
                    if r2 > 0.0 {
                        let (ga, gb) = (g * *b / r2, -g * *a / r2);
                        *a -= lr * ga;
                        *b -= lr * gb;
                    }
                });
            }
        }
    }
}

/// First-order descent on `loss` over the phase of `A·e^{jP′}`.
///
/// Losses other than `ec` compare against `target_phase`; `ec` must not be
/// given one. The returned phase is the lowest-loss iterate, so its loss
/// never exceeds the initial loss.
pub fn gd_reconstruct(
    mag: &MagnitudeField,
    loss: LossKind,
    target_phase: Option<&PhaseField>,
    opts: &SolverOptions,
    kernel: &ConsistencyKernel,
) -> Result<(PhaseField, SolveTrace)> {
    opts.validate()?;
    let config = kernel.config();
    check_mag(mag, config)?;
    let objective = Objective::new(loss, mag, target_phase, config)?;
    let total: f64 = mag.as_array().iter().map(|a| a * a).sum();
    let scale = objective.step_scale(mag, kernel);

    let mut params = Params::new(
        initial_phase(mag, opts)?.into_array(),
        opts.parameterization,
    );
    let mut phase = PhaseField::new(params.phase())?;
    let (initial_loss, mut grad, ec) = objective.evaluate(mag, &phase, kernel)?;
    let mut trace = SolveTrace {
        initial_loss,
        initial_consistency: relative_consistency(ec, total),
        records: Vec::with_capacity(opts.max_iters),
        best_iter: 0,
        step_scale: scale,
        final_phase: PhaseField::zeros(0, 0),
    };
    if !initial_loss.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            trace: Box::new(trace),
        });
    }
    let mut best = (initial_loss, phase.clone());
    let mut previous = initial_loss;

    for k in 0..opts.max_iters {
        let step = opts.step_at(k);
        params.step(&grad, step / scale);
        let raw = params.phase();
        if raw.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                iteration: k + 1,
                trace: Box::new(trace),
            });
        }
        phase = PhaseField::new(raw)?;
        let (value, next_grad, ec) = objective.evaluate(mag, &phase, kernel)?;
        grad = next_grad;
        trace.records.push(IterationRecord {
            iter: k + 1,
            loss: value,
            consistency_measure: relative_consistency(ec, total),
            step_size: step,
        });
        if !value.is_finite() {
            return Err(Error::Divergence {
                iteration: k + 1,
                trace: Box::new(trace),
            });
        }
        if value <= best.0 {
            best = (value, phase.clone());
            trace.best_iter = k + 1;
        }
        let decrease = previous - value;
        previous = value;
        if decrease >= 0.0 && decrease < opts.tolerance {
            break;
        }
    }

    trace.final_phase = best.1.clone();
    Ok((best.1, trace))
}

/// `iSTFT(A·e^{jP})`, `M·R` samples long (everything after the leading pad).
pub fn reconstruct_signal(
    mag: &MagnitudeField,
    phase: &PhaseField,
    config: &StftConfig,
) -> Result<Signal> {
    let spec = Spectrogram::from_polar(mag, phase, config)?;
    istft(&spec, config)
}
