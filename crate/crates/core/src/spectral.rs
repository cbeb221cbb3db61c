//! Floquet-map spectrum ("Floquet rapidities"), periodic steady state,
//! subdominant mode and the Sz-projected quantum bifurcation slice.
//!
//! Eigendecomposition runs in double precision through faer's general complex
//! eigensolver regardless of the scalar type the map was built with.

use std::io::Write;

use faer::c64;
use ndarray::Array2;
use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, to_faer, unvectorize};
use crate::model::{FockBasis, ModelParams};
use crate::propagation::{
    apply_floquet, build_floquet_map, DensityMatrix, FloquetMap, PropagationContext, PropagationError, StepControl,
};
use crate::scalar::{c_from_f64, Real};

type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("eigensolver did not converge{}", .index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    NoConvergence { index: Option<usize> },
    #[error("leading rapidity {lambda} is not within {tolerance:e} of 1")]
    LeadingNotUnity { lambda: C64, tolerance: f64 },
    #[error("steady state has eigenvalue {value:.3e} below -1e-6 (propagation defect)")]
    NegativeEigenvalue { value: f64 },
    #[error("fixed-point residual {residual:.3e} exceeds {tolerance:.1e}")]
    FixedPointResidual { residual: f64, tolerance: f64 },
    #[error("spectrum has {0} rapidities; at least 2 required")]
    TooSmall(usize),
}

/// Eigenpairs of a Floquet map sorted by modulus, largest first.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub rapidities: Vec<C64>,
    /// Unit-norm right eigenvectors in the column-stacking convention.
    pub right_eigenvectors: Vec<Vec<C64>>,
    /// `‖P v − λ v‖` for each pair.
    pub residuals: Vec<f64>,
    /// Frobenius norm of the map.
    pub map_norm: f64,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.rapidities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rapidities.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.rapidities.first().map_or(0.0, |z| z.norm())
    }

    /// Violations of the structural invariants expected of a CPTP Floquet map
    /// with a unique steady state. Empty when all hold.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let one = C64::new(1.0, 0.0);
        match self.rapidities.first() {
            Some(l1) if (l1 - one).norm() < 1e-8 => {}
            other => out.push(format!("leading rapidity {other:?} not within 1e-8 of 1")),
        }
        let near_one = self.rapidities.iter().filter(|z| (*z - one).norm() < 1e-6).count();
        if near_one != 1 {
            out.push(format!("{near_one} rapidities within 1e-6 of 1"));
        }
        if let Some(z) = self.rapidities.iter().find(|z| z.norm() > 1.0 + 1e-8) {
            out.push(format!("rapidity {z} outside the unit disk"));
        }
        for z in &self.rapidities {
            let partner = self
                .rapidities
                .iter()
                .map(|w| (w - z.conj()).norm())
                .fold(f64::INFINITY, f64::min);
            if partner >= 1e-7 {
                out.push(format!("rapidity {z} has no conjugate partner (closest {partner:.2e})"));
                break;
            }
        }
        let bound = 1e-7 * self.map_norm;
        if let Some((k, r)) = self.residuals.iter().enumerate().find(|(_, r)| **r >= bound) {
            out.push(format!("residual {r:.2e} of pair {k} exceeds {bound:.2e}"));
        }
        out
    }
}

/// Full non-Hermitian eigendecomposition of the map.
pub fn eig_floquet<T: Real>(map: &FloquetMap<T>) -> Result<SpectrumResult, SpectralError> {
    let a = to_faer(&map.entries);
    let n = a.nrows();
    let evd = a.eigen().map_err(|_| SpectralError::NoConvergence { index: None })?;
    let s = evd.S();
    let u = evd.U();

    let mut pairs: Vec<(C64, Vec<C64>)> = (0..n)
        .map(|k| {
            let z = s[k];
            let col: Vec<C64> = (0..n).map(|r| C64::new(u[(r, k)].re, u[(r, k)].im)).collect();
            let norm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            (C64::new(z.re, z.im), col.into_iter().map(|v| v / norm).collect())
        })
        .collect();
    if let Some(k) = pairs.iter().position(|(z, v)| !z.is_finite() || v.iter().any(|x| !x.is_finite())) {
        return Err(SpectralError::NoConvergence { index: Some(k) });
    }
    // Descending modulus, quantized so conjugate pairs tie; ties broken by
    // imaginary then real part for a deterministic order.
    let key = |z: &C64| (z.norm() * 1e10).round() as i64;
    pairs.sort_by(|(a, _), (b, _)| {
        key(b)
            .cmp(&key(a))
            .then(b.im.total_cmp(&a.im))
            .then(b.re.total_cmp(&a.re))
    });

    let vmat = faer::Mat::<c64>::from_fn(n, n, |r, k| c64::new(pairs[k].1[r].re, pairs[k].1[r].im));
    let av = &a * &vmat;
    let residuals = (0..n)
        .map(|k| {
            let lam = c64::new(pairs[k].0.re, pairs[k].0.im);
            (0..n)
                .map(|r| {
                    let d = av[(r, k)] - lam * vmat[(r, k)];
                    d.re * d.re + d.im * d.im
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let map_norm = a.norm_l2();
    let (rapidities, right_eigenvectors) = pairs.into_iter().unzip();
    Ok(SpectrumResult { rapidities, right_eigenvectors, residuals, map_norm })
}

/// Periodic steady state from the leading eigenvector: reshape, remove the
/// global phase using the trace, Hermitize, normalize to unit trace.
pub fn steady_state<T: Real>(spec: &SpectrumResult, basis: FockBasis) -> Result<DensityMatrix<T>, SpectralError> {
    let lambda = *spec.rapidities.first().ok_or(SpectralError::TooSmall(0))?;
    if (lambda - C64::new(1.0, 0.0)).norm() >= 1e-6 {
        return Err(SpectralError::LeadingNotUnity { lambda, tolerance: 1e-6 });
    }
    let d = basis.len();
    let raw = unvectorize(&spec.right_eigenvectors[0], d);
    let tr = linalg::trace(&raw);
    let phase = if tr.norm() > 0.0 { tr.conj() / tr.norm() } else { C64::new(1.0, 0.0) };
    let aligned = raw.mapv(|z| z * phase);
    let herm = (&aligned + &linalg::adjoint(&aligned)).mapv(|z| z * 0.5);
    let tr = linalg::trace(&herm).re;
    let rho: Array2<C64> = herm.mapv(|z| z / tr);
    let min = linalg::hermitian_eigenvalues(&rho)[0];
    if min < -1e-6 {
        return Err(SpectralError::NegativeEigenvalue { value: min });
    }
    Ok(DensityMatrix { basis, entries: rho.mapv(c_from_f64::<T>) })
}

/// Steady state plus the fixed-point check `max |P(ρ) − ρ| < 1e-7`.
pub fn steady_state_checked<T: Real>(
    map: &FloquetMap<T>,
    spec: &SpectrumResult,
) -> Result<DensityMatrix<T>, SpectralError> {
    let rho = steady_state::<T>(spec, map.basis)?;
    let residual = linalg::max_abs_diff(&apply_floquet(map, &rho.entries)?, &rho.entries)
        .to_f64()
        .unwrap_or(f64::NAN);
    if !(residual < 1e-7) {
        return Err(SpectralError::FixedPointResidual { residual, tolerance: 1e-7 });
    }
    Ok(rho)
}

/// Slowest-decaying non-stationary mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubdominantMode {
    pub lambda: C64,
    /// `|λ₂ − (−1)|`.
    pub gap_to_minus_one: f64,
}

/// Rapidity of largest modulus after the steady-state one. Of a conjugate
/// pair, the member with non-negative imaginary part is reported.
pub fn subdominant_mode(spec: &SpectrumResult) -> Result<SubdominantMode, SpectralError> {
    if spec.len() < 2 {
        return Err(SpectralError::TooSmall(spec.len()));
    }
    let mut lambda = spec.rapidities[1];
    if lambda.im < 0.0 {
        if let Some(partner) = spec.rapidities.get(2) {
            if (partner - lambda.conj()).norm() < 1e-9 {
                lambda = *partner;
            }
        }
    }
    Ok(SubdominantMode { lambda, gap_to_minus_one: (lambda + C64::new(1.0, 0.0)).norm() })
}

/// Steady-state populations over the Sz eigenbasis at one interaction value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumBifurcationSlice {
    /// Interaction U·N.
    pub un: f64,
    /// Sz eigenvalues s_n = n/N − 1/2.
    pub sz_values: Vec<f64>,
    /// p_n = <n,N−n| ρ_s(0) |n,N−n>.
    pub populations: Vec<f64>,
}

impl QuantumBifurcationSlice {
    /// `<Sz_n>_s = s_n p_n`.
    pub fn weighted(&self) -> Vec<f64> {
        self.sz_values.iter().zip(&self.populations).map(|(s, p)| s * p).collect()
    }

    pub fn total(&self) -> f64 {
        self.populations.iter().sum()
    }
}

/// Builds the map at `params`, extracts ρ_s(0) and projects it on Sz eigenstates.
pub fn quantum_bifurcation_slice<T: Real>(
    params: &ModelParams<T>,
    step: StepControl,
) -> Result<QuantumBifurcationSlice, SpectralError> {
    let ctx = PropagationContext::new(*params, step)?;
    let map = build_floquet_map(&ctx)?;
    slice_from_map(&map)
}

pub fn slice_from_map<T: Real>(map: &FloquetMap<T>) -> Result<QuantumBifurcationSlice, SpectralError> {
    let spec = eig_floquet(map)?;
    let rho = steady_state::<f64>(&spec, map.basis)?;
    let n = map.basis.particles();
    Ok(QuantumBifurcationSlice {
        un: map.params.to_f64().un(),
        sz_values: (0..=n).map(|k| k as f64 / n as f64 - 0.5).collect(),
        populations: rho.populations(),
    })
}

/// The identity channel on the parameters' Hilbert space (γ = 0, H = 0 limit).
pub fn identity_map<T: Real>(params: &ModelParams<T>, step: StepControl) -> FloquetMap<T> {
    let d = params.dim();
    let d2 = d * d;
    let mut entries = Array2::from_elem((d2, d2), Complex::new(T::zero(), T::zero()));
    for k in 0..d2 {
        entries[(k, k)] = Complex::new(T::one(), T::zero());
    }
    FloquetMap {
        basis: crate::model::build_basis(params.n).expect("valid N"),
        entries,
        params: *params,
        step,
        fingerprint: crate::propagation::fingerprint(params, &step),
    }
}

/// CSV with header `re,im,abs`, one row per rapidity in spectrum order.
pub fn write_spectrum_csv<W: Write>(spec: &SpectrumResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "re,im,abs")?;
    for z in &spec.rapidities {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", z.re, z.im, z.norm())?;
    }
    Ok(())
}

/// CSV with header `U,s_n,population`, one row per (slice, n).
pub fn write_bifurcation_csv<W: Write>(slices: &[QuantumBifurcationSlice], mut w: W) -> std::io::Result<()> {
    writeln!(w, "U,s_n,population")?;
    for s in slices {
        for (sn, p) in s.sz_values.iter().zip(&s.populations) {
            writeln!(w, "{:.16e},{sn:.16e},{p:.16e}", s.un)?;
        }
    }
    Ok(())
}
