//! Stroboscopic two-time correlation `<Sz(mT) Sz(0)>_s` of the periodic
//! steady state and its period-doubling diagnostics.

use std::io::Write;

use ndarray::Array2;
use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, max_abs_diff};
use crate::model::{OpKind, OperatorSet};
use crate::propagation::{apply_floquet, DensityMatrix, FloquetMap, PropagationError};
use crate::scalar::{c_to_f64, to_f64, Cplx, Real};
use crate::spectral::SpectrumResult;

type C64 = Complex<f64>;

pub const DEFAULT_M_MAX: usize = 200;
/// Shortest series accepted by [`doubling_diagnostics`].
pub const MIN_SERIES_LAGS: usize = 8;
const FIXED_POINT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("rho_s is not a fixed point of the map: max |P(rho) - rho| = {residual:.3e} (tolerance {tolerance:.1e})")]
    NotFixedPoint { residual: f64, tolerance: f64 },
    #[error("series too short: m_max = {m_max} (< {min})")]
    SeriesTooShort { m_max: usize, min: usize },
    #[error("operator basis does not match the map basis")]
    BasisMismatch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationSeries {
    /// `C(m)` for `m = 0..=m_max`.
    pub values: Vec<C64>,
    pub sz_mean: f64,
    /// `<Sz>_s²`, the `m → ∞` limit.
    pub asymptote: f64,
}

impl CorrelationSeries {
    pub fn m_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// `Re C(m) − C(∞)`.
    pub fn deviations(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re - self.asymptote).collect()
    }

    /// CSV with header `m,re,im,asymptote`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "m,re,im,asymptote")?;
        for (m, c) in self.values.iter().enumerate() {
            writeln!(w, "{m},{:.16e},{:.16e},{:.16e}", c.re, c.im, self.asymptote)?;
        }
        Ok(())
    }
}

fn sz_trace<T: Real>(sz: &[T], x: &Array2<Cplx<T>>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (k, w) in sz.iter().enumerate() {
        acc += c_to_f64(x[(k, k)]) * to_f64(*w);
    }
    acc
}

/// `tr(Sz Pᵐ(X₀))` for `m = 0..=m_max`.
pub fn propagate_correlator<T: Real>(
    map: &FloquetMap<T>,
    x0: &Array2<Cplx<T>>,
    ops: &OperatorSet<T>,
    m_max: usize,
) -> Result<Vec<C64>, CorrelationError> {
    if ops.basis != map.basis {
        return Err(CorrelationError::BasisMismatch);
    }
    let sz = &ops.sz_weights;
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(m_max + 1);
    out.push(sz_trace(sz, &x));
    for _ in 0..m_max {
        x = apply_floquet(map, &x)?;
        out.push(sz_trace(sz, &x));
    }
    Ok(out)
}

/// `Sz · ρ`.
fn sz_times<T: Real>(ops: &OperatorSet<T>, rho: &Array2<Cplx<T>>) -> Array2<Cplx<T>> {
    let mut x = rho.clone();
    for (mut row, w) in x.rows_mut().into_iter().zip(&ops.sz_weights) {
        row.mapv_inplace(|z| z * *w);
    }
    x
}

/// `C(m) = tr(Sz Pᵐ(Sz ρ_s))`. `rho_s` must be a fixed point of `map`.
pub fn two_time_sz<T: Real>(
    map: &FloquetMap<T>,
    rho_s: &DensityMatrix<T>,
    ops: &OperatorSet<T>,
    m_max: usize,
) -> Result<CorrelationSeries, CorrelationError> {
    if rho_s.basis != map.basis {
        return Err(CorrelationError::BasisMismatch);
    }
    let residual = to_f64(max_abs_diff(&apply_floquet(map, &rho_s.entries)?, &rho_s.entries));
    if !(residual < FIXED_POINT_TOLERANCE) {
        return Err(CorrelationError::NotFixedPoint { residual, tolerance: FIXED_POINT_TOLERANCE });
    }
    let sz_mean = to_f64(rho_s.expectation(ops.band(OpKind::Sz)).re);
    let values = propagate_correlator(map, &sz_times(ops, &rho_s.entries), ops, m_max)?;
    Ok(CorrelationSeries { values, sz_mean, asymptote: sz_mean * sz_mean })
}

/// Splits `X` into Hermitian and anti-Hermitian parts, `X = H + A`.
pub fn hermitian_split<T: Real>(x: &Array2<Cplx<T>>) -> (Array2<Cplx<T>>, Array2<Cplx<T>>) {
    let xd = linalg::adjoint(x);
    let half = crate::scalar::lit::<T>(0.5);
    let h = (x + &xd).mapv(|z| z * half);
    let a = (x - &xd).mapv(|z| z * half);
    (h, a)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublingReport {
    /// Largest `M` such that `Re C(m) − C(∞)` alternates in sign for all `m ≤ M`.
    pub alternation_length: usize,
    /// Power at frequency `1/(2T)` over total power, in `[0, 1]`.
    pub halffreq_power: f64,
    /// Frequency (cycles per period, in `[0, ½]`) of the largest periodogram value.
    pub dominant_frequency: f64,
    /// `|λ₂|`.
    pub predicted_decay: f64,
    /// `exp(slope)` of a least-squares fit to `log|C(m) − C(∞)|`.
    pub fitted_decay: f64,
    /// Lags `[start, end)` used for the fit.
    pub fit_window: (usize, usize),
}

impl DoublingReport {
    /// Relative difference between the fitted and predicted decay.
    pub fn decay_mismatch(&self) -> f64 {
        (self.fitted_decay - self.predicted_decay).abs() / self.predicted_decay
    }
}

fn alternation_length(dev: &[f64]) -> usize {
    let sign = |x: f64| if x > 0.0 { 1 } else if x < 0.0 { -1 } else { 0 };
    if dev.is_empty() || sign(dev[0]) == 0 {
        return 0;
    }
    let mut m = 0;
    while m + 1 < dev.len() && sign(dev[m + 1]) == -sign(dev[m]) && sign(dev[m + 1]) != 0 {
        m += 1;
    }
    m
}

/// Periodogram `|Σ x_m e^{−2πi f m}|²` on `f = k / (2K)`, `k = 0..=K`.
fn periodogram(x: &[f64], k_max: usize) -> Vec<(f64, f64)> {
    (0..=k_max)
        .map(|k| {
            let f = 0.5 * k as f64 / k_max as f64;
            let w = -std::f64::consts::TAU * f;
            let s: C64 = x.iter().enumerate().map(|(m, v)| C64::from_polar(*v, w * m as f64)).sum();
            (f, s.norm_sqr())
        })
        .collect()
}

/// Least-squares slope of `log y` against the index over `range`.
fn log_slope(y: &[f64], range: std::ops::Range<usize>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = range.filter(|&m| y[m] > 0.0).map(|m| (m as f64, y[m].ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Fit window for the envelope: the second half of the lags before the
/// envelope first drops below `1e-9` of its value at `m = 0`. The early half
/// still carries faster modes; past the cutoff, rounding noise dominates.
fn fit_window(envelope: &[f64]) -> (usize, usize) {
    let len = envelope.len();
    let floor = envelope[0] * 1e-9;
    let end = envelope.iter().position(|&e| e < floor).unwrap_or(len).max(2);
    (end / 2, end)
}

/// Period-doubling diagnostics of a correlation series against the spectrum
/// of the map it was computed from.
pub fn doubling_diagnostics(series: &CorrelationSeries, spec: &SpectrumResult) -> Result<DoublingReport, CorrelationError> {
    let m_max = series.m_max();
    if m_max < MIN_SERIES_LAGS || series.values.is_empty() {
        return Err(CorrelationError::SeriesTooShort { m_max, min: MIN_SERIES_LAGS });
    }
    let dev = series.deviations();
    let len = dev.len();
    let total: f64 = dev.iter().map(|v| v * v).sum();
    let alt: f64 = dev.iter().enumerate().map(|(m, v)| if m % 2 == 0 { *v } else { -*v }).sum();
    let halffreq_power = if total > 0.0 { alt * alt / (len as f64 * total) } else { 0.0 };

    let spectrum = periodogram(&dev, 4 * len);
    let dominant_frequency = if total > 0.0 {
        spectrum.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map_or(0.0, |p| p.0)
    } else {
        0.0
    };

    let envelope: Vec<f64> = series.values.iter().map(|c| (c - C64::new(series.asymptote, 0.0)).norm()).collect();
    let fit_window = fit_window(&envelope);
    let fitted_decay = log_slope(&envelope, fit_window.0..fit_window.1).map_or(0.0, f64::exp);
    let predicted_decay = spec.rapidities.get(1).map_or(0.0, |z| z.norm());

    Ok(DoublingReport {
        alternation_length: alternation_length(&dev),
        halffreq_power,
        dominant_frequency,
        predicted_decay,
        fitted_decay,
        fit_window,
    })
}
