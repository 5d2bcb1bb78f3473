//! Baseline phase losses: cosine distance, complex-domain, time-domain,
//! anti-wrapping, and the phase-derivative variants built on group delay
//! and instantaneous frequency.
//!
//! Every loss is a plain sum over bins (or samples). Gradients are taken
//! with respect to the estimated phase `P′`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consistency::{phase_gradient, polar};
use crate::error::{Error, Result};
use crate::stft::{
    analyze_with, check_same_dim, synthesize, MagnitudeField, PhaseField, StftConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeBase {
    Cos,
    Aw,
}

/// A loss value with optional per-frame breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss_name: String,
    pub value: f64,
    /// Per-frame sums; they add up to `value`.
    pub per_frame: Option<Vec<f64>>,
    /// Contribution of the `n = 0` group-delay column and the `m = 0`
    /// instantaneous-frequency row, already included in `value`.
    pub boundary: Option<f64>,
}

impl LossReport {
    fn from_terms(name: &str, terms: &Array2<f64>) -> Self {
        let per_frame: Vec<f64> = terms.axis_iter(Axis(0)).map(|r| r.sum()).collect();
        Self {
            loss_name: name.to_string(),
            value: per_frame.iter().sum(),
            per_frame: Some(per_frame),
            boundary: None,
        }
    }
}

/// Principal value in `(−π, π]`.
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// `Δ − 2π·round(Δ/2π)` with round-half-away-from-zero.
pub fn anti_wrap(delta: f64) -> f64 {
    delta - 2.0 * PI * (delta / (2.0 * PI)).round()
}

fn zip_map(a: ArrayView2<f64>, b: ArrayView2<f64>, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let mut out = Array2::zeros(a.dim());
    Zip::from(&mut out)
        .and(a)
        .and(b)
        .for_each(|o, &x, &y| *o = f(x, y));
    out
}

fn check_pair(p: &PhaseField, p_est: &PhaseField) -> Result<()> {
    check_same_dim(p.dim(), p_est.dim())
}

// ---- cosine distance ----

fn cos_terms(p: ArrayView2<f64>, p_est: ArrayView2<f64>) -> Array2<f64> {
    zip_map(p, p_est, |a, b| -(a - b).cos())
}

fn cos_grad(p: ArrayView2<f64>, p_est: ArrayView2<f64>) -> Array2<f64> {
    zip_map(p, p_est, |a, b| -(a - b).sin())
}

/// `−Σ cos(P − P′)`.
pub fn loss_cos(p: &PhaseField, p_est: &PhaseField) -> Result<f64> {
    check_pair(p, p_est)?;
    Ok(cos_terms(p.as_array().view(), p_est.as_array().view()).sum())
}

pub fn grad_loss_cos(p: &PhaseField, p_est: &PhaseField) -> Result<Array2<f64>> {
    check_pair(p, p_est)?;
    Ok(cos_grad(p.as_array().view(), p_est.as_array().view()))
}

pub fn report_cos(p: &PhaseField, p_est: &PhaseField) -> Result<LossReport> {
    check_pair(p, p_est)?;
    Ok(LossReport::from_terms(
        "cos",
        &cos_terms(p.as_array().view(), p_est.as_array().view()),
    ))
}

// ---- anti-wrapping ----

fn aw_terms(p: ArrayView2<f64>, p_est: ArrayView2<f64>) -> Array2<f64> {
    zip_map(p, p_est, |a, b| anti_wrap(a - b).powi(2))
}

fn aw_grad(p: ArrayView2<f64>, p_est: ArrayView2<f64>) -> Array2<f64> {
    zip_map(p, p_est, |a, b| -2.0 * anti_wrap(a - b))
}

/// `Σ |Δ − 2π·round(Δ/2π)|²` with `Δ = P − P′`.
pub fn loss_aw(p: &PhaseField, p_est: &PhaseField) -> Result<f64> {
    check_pair(p, p_est)?;
    Ok(aw_terms(p.as_array().view(), p_est.as_array().view()).sum())
}

pub fn grad_loss_aw(p: &PhaseField, p_est: &PhaseField) -> Result<Array2<f64>> {
    check_pair(p, p_est)?;
    Ok(aw_grad(p.as_array().view(), p_est.as_array().view()))
}

pub fn report_aw(p: &PhaseField, p_est: &PhaseField) -> Result<LossReport> {
    check_pair(p, p_est)?;
    Ok(LossReport::from_terms(
        "aw",
        &aw_terms(p.as_array().view(), p_est.as_array().view()),
    ))
}

// ---- complex domain ----
//
// Magnitude-weighted phasor distance: L2 is Σ A·|e^{jP} − e^{jP′}|², which
// equals Σ 2A(1 − cos ΔP); L1 is Σ A·|e^{jP} − e^{jP′}| = Σ |A e^{jP} − A e^{jP′}|.

fn complex_terms(
    p: ArrayView2<f64>,
    p_est: ArrayView2<f64>,
    mag: ArrayView2<f64>,
    norm: Norm,
) -> Array2<f64> {
    let mut out = Array2::zeros(p.dim());
    Zip::from(&mut out)
        .and(p)
        .and(p_est)
        .and(mag)
        .for_each(|o, &a, &b, &amp| {
            let d = (Complex64::from_polar(1.0, a) - Complex64::from_polar(1.0, b)).norm();
            *o = match norm {
                Norm::L1 => amp * d,
                Norm::L2 => amp * d * d,
            };
        });
    out
}

fn complex_grad(
    p: ArrayView2<f64>,
    p_est: ArrayView2<f64>,
    mag: ArrayView2<f64>,
    norm: Norm,
) -> Array2<f64> {
    let mut out = Array2::zeros(p.dim());
    Zip::from(&mut out)
        .and(p)
        .and(p_est)
        .and(mag)
        .for_each(|o, &a, &b, &amp| {
            let delta = a - b;
            *o = match norm {
                Norm::L2 => -2.0 * amp * delta.sin(),
                // 2A|sin(Δ/2)|; the subgradient at Δ ≡ 0 is taken as zero.
                Norm::L1 => {
                    let half = 0.5 * delta;
                    let s = half.sin();
                    if s == 0.0 {
                        0.0
                    } else {
                        -amp * half.cos() * s.signum()
                    }
                }
            };
        });
    out
}

fn check_triple(p: &PhaseField, p_est: &PhaseField, mag: &MagnitudeField) -> Result<()> {
    check_pair(p, p_est)?;
    check_same_dim(p.dim(), mag.dim())
}

pub fn loss_complex(
    p: &PhaseField,
    p_est: &PhaseField,
    mag: &MagnitudeField,
    norm: Norm,
) -> Result<f64> {
    check_triple(p, p_est, mag)?;
    Ok(complex_terms(
        p.as_array().view(),
        p_est.as_array().view(),
        mag.as_array().view(),
        norm,
    )
    .sum())
}

pub fn grad_loss_complex(
    p: &PhaseField,
    p_est: &PhaseField,
    mag: &MagnitudeField,
    norm: Norm,
) -> Result<Array2<f64>> {
    check_triple(p, p_est, mag)?;
    Ok(complex_grad(
        p.as_array().view(),
        p_est.as_array().view(),
        mag.as_array().view(),
        norm,
    ))
}

pub fn report_complex(
    p: &PhaseField,
    p_est: &PhaseField,
    mag: &MagnitudeField,
    norm: Norm,
) -> Result<LossReport> {
    check_triple(p, p_est, mag)?;
    let name = match norm {
        Norm::L1 => "comp-l1",
        Norm::L2 => "comp-l2",
    };
    Ok(LossReport::from_terms(
        name,
        &complex_terms(
            p.as_array().view(),
            p_est.as_array().view(),
            mag.as_array().view(),
            norm,
        ),
    ))
}

// ---- time domain ----

/// Reference side of the time-domain loss, resynthesized once.
#[derive(Clone, Debug)]
pub struct TimeTarget {
    reference: Vec<f64>,
    norm: Norm,
}

fn check_config_shape(dim: (usize, usize), config: &StftConfig) -> Result<()> {
    if dim.0 == 0 || dim.1 != config.window_len() {
        return Err(Error::ShapeMismatch {
            expected: (dim.0.max(1), config.window_len()),
            actual: dim,
        });
    }
    Ok(())
}

impl TimeTarget {
    pub fn new(
        p: &PhaseField,
        mag: &MagnitudeField,
        config: &StftConfig,
        norm: Norm,
    ) -> Result<Self> {
        check_config_shape(p.dim(), config)?;
        let h = polar(mag, p)?;
        let reference = synthesize(h.view(), config).iter().map(|z| z.re).collect();
        Ok(Self { reference, norm })
    }

    fn estimate(&self, h: ArrayView2<Complex64>, config: &StftConfig) -> Vec<f64> {
        synthesize(h, config).iter().map(|z| z.re).collect()
    }

    /// Loss over every sample of the padded time axis.
    pub fn loss(
        &self,
        mag: &MagnitudeField,
        p_est: &PhaseField,
        config: &StftConfig,
    ) -> Result<f64> {
        check_config_shape(p_est.dim(), config)?;
        let h = polar(mag, p_est)?;
        let y = self.estimate(h.view(), config);
        if y.len() != self.reference.len() {
            return Err(Error::ShapeMismatch {
                expected: (self.reference.len(), 1),
                actual: (y.len(), 1),
            });
        }
        Ok(self
            .reference
            .iter()
            .zip(&y)
            .map(|(a, b)| match self.norm {
                Norm::L1 => (a - b).abs(),
                Norm::L2 => (a - b).powi(2),
            })
            .sum())
    }

    pub fn loss_and_grad(
        &self,
        mag: &MagnitudeField,
        p_est: &PhaseField,
        config: &StftConfig,
    ) -> Result<(f64, Array2<f64>)> {
        check_config_shape(p_est.dim(), config)?;
        let h = polar(mag, p_est)?;
        let y = self.estimate(h.view(), config);
        let mut loss = 0.0;
        // dL/dy′ for each sample, then back through Re ∘ synthesis.
        let upstream: Vec<Complex64> = self
            .reference
            .iter()
            .zip(&y)
            .map(|(a, b)| {
                let d = a - b;
                let g = match self.norm {
                    Norm::L1 => {
                        loss += d.abs();
                        -d.signum()
                    }
                    Norm::L2 => {
                        loss += d * d;
                        -2.0 * d
                    }
                };
                Complex64::new(g, 0.0)
            })
            .collect();
        let mut grad_h = analyze_with(&upstream, config.synthesis_window(), h.nrows(), config);
        let scale = 1.0 / config.window_len() as f64;
        grad_h.mapv_inplace(|z| z * scale);
        Ok((loss, phase_gradient(h.view(), grad_h.view())))
    }
}

/// Norm of `iSTFT(A e^{jP}) − iSTFT(A e^{jP′})` over every time index.
pub fn loss_time(
    p: &PhaseField,
    p_est: &PhaseField,
    mag: &MagnitudeField,
    config: &StftConfig,
    norm: Norm,
) -> Result<f64> {
    check_triple(p, p_est, mag)?;
    TimeTarget::new(p, mag, config, norm)?.loss(mag, p_est, config)
}

pub fn grad_loss_time(
    p: &PhaseField,
    p_est: &PhaseField,
    mag: &MagnitudeField,
    config: &StftConfig,
    norm: Norm,
) -> Result<Array2<f64>> {
    check_triple(p, p_est, mag)?;
    Ok(TimeTarget::new(p, mag, config, norm)?
        .loss_and_grad(mag, p_est, config)?
        .1)
}

// ---- phase derivatives ----

fn gd_raw(p: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(p.dim());
    for ((m, n), o) in out.indexed_iter_mut() {
        *o = if n == 0 {
            wrap(p[[m, 0]])
        } else {
            wrap(p[[m, n]] - p[[m, n - 1]])
        };
    }
    out
}

fn if_raw(p: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(p.dim());
    for ((m, n), o) in out.indexed_iter_mut() {
        *o = if m == 0 {
            wrap(p[[0, n]])
        } else {
            wrap(p[[m, n]] - p[[m - 1, n]])
        };
    }
    out
}

// Transposes of the (unwrapped) difference operators.
fn gd_adjoint(g: ArrayView2<f64>) -> Array2<f64> {
    let (_, bins) = g.dim();
    let mut out = g.to_owned();
    for ((m, n), o) in out.indexed_iter_mut() {
        if n + 1 < bins {
            *o -= g[[m, n + 1]];
        }
    }
    out
}

fn if_adjoint(g: ArrayView2<f64>) -> Array2<f64> {
    let (frames, _) = g.dim();
    let mut out = g.to_owned();
    for ((m, n), o) in out.indexed_iter_mut() {
        if m + 1 < frames {
            *o -= g[[m + 1, n]];
        }
    }
    out
}

/// Wrapped backward difference along frequency; column 0 holds `wrap(P)`.
pub fn group_delay(p: &PhaseField) -> Result<Array2<f64>> {
    if p.dim().1 < 2 {
        return Err(Error::Input("group delay needs at least two bins".into()));
    }
    Ok(gd_raw(p.as_array().view()))
}

/// Wrapped backward difference along time; row 0 holds `wrap(P)`.
pub fn inst_freq(p: &PhaseField) -> Result<Array2<f64>> {
    if p.dim().0 < 2 {
        return Err(Error::Input(
            "instantaneous frequency needs at least two frames".into(),
        ));
    }
    Ok(if_raw(p.as_array().view()))
}

fn base_terms(base: DerivativeBase, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    match base {
        DerivativeBase::Cos => cos_terms(a, b),
        DerivativeBase::Aw => aw_terms(a, b),
    }
}

fn base_grad(base: DerivativeBase, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    match base {
        DerivativeBase::Cos => cos_grad(a, b),
        DerivativeBase::Aw => aw_grad(a, b),
    }
}

fn check_derivative_shape(p: &PhaseField) -> Result<()> {
    let (frames, bins) = p.dim();
    if frames < 2 || bins < 2 {
        return Err(Error::Input(
            "derivative losses need at least two frames and two bins".into(),
        ));
    }
    Ok(())
}

/// `base(P, P′) + base(GD P, GD P′) + base(IF P, IF P′)`.
pub fn loss_with_derivatives(
    p: &PhaseField,
    p_est: &PhaseField,
    base: DerivativeBase,
) -> Result<f64> {
    Ok(report_with_derivatives(p, p_est, base)?.value)
}

pub fn report_with_derivatives(
    p: &PhaseField,
    p_est: &PhaseField,
    base: DerivativeBase,
) -> Result<LossReport> {
    check_pair(p, p_est)?;
    check_derivative_shape(p)?;
    let (a, b) = (p.as_array().view(), p_est.as_array().view());
    let plain = base_terms(base, a, b);
    let gd = base_terms(base, gd_raw(a).view(), gd_raw(b).view());
    let inf = base_terms(base, if_raw(a).view(), if_raw(b).view());
    let boundary = gd.column(0).sum() + inf.row(0).sum();
    let total = plain + &gd + &inf;
    let name = match base {
        DerivativeBase::Cos => "cos-derv",
        DerivativeBase::Aw => "aw-derv",
    };
    let mut report = LossReport::from_terms(name, &total);
    report.boundary = Some(boundary);
    Ok(report)
}

pub fn grad_loss_with_derivatives(
    p: &PhaseField,
    p_est: &PhaseField,
    base: DerivativeBase,
) -> Result<Array2<f64>> {
    check_pair(p, p_est)?;
    check_derivative_shape(p)?;
    let (a, b) = (p.as_array().view(), p_est.as_array().view());
    let mut grad = base_grad(base, a, b);
    // wrap() has unit derivative almost everywhere.
    grad += &gd_adjoint(base_grad(base, gd_raw(a).view(), gd_raw(b).view()).view());
    grad += &if_adjoint(base_grad(base, if_raw(a).view(), if_raw(b).view()).view());
    Ok(grad)
}
