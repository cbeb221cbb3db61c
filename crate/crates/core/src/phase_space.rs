//! Spin coherent states, Husimi Q functions and stroboscopic evolution of a
//! coherent state, including the multi-seed / multi-parameter time-crystal
//! checklist.

use std::io::Write;

use ndarray::Array2;
use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::meanfield::{integrate_mf, ClassicalState, MeanFieldError};
use crate::model::{build_basis, FockBasis, ModelError, ModelParams};
use crate::propagation::{propagate_state, DensityMatrix, PropagationContext, PropagationError, StepControl};
use crate::scalar::{c_to_f64, to_f64, Real};

type C64 = Complex<f64>;

pub const DEFAULT_GRID: (usize, usize) = (181, 181);
/// Great-circle radius (rad) of the neighbourhood used for Q-mass checks.
pub const NEIGHBOURHOOD_RADIUS: f64 = 0.7;
/// Smallest `|⟨Sz⟩(m+1) − ⟨Sz⟩(m)|` counted as a jump by [`alternation_length`].
pub const MIN_JUMP: f64 = 0.02;

#[derive(Debug, Error)]
pub enum PhaseSpaceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error("grid must have at least 2 points per axis, got {0} x {1}")]
    InvalidGrid(usize, usize),
    #[error("dimension mismatch: state has d = {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("m_max must be at least 1")]
    InvalidLength,
    #[error("snapshot time {0} exceeds m_max")]
    SnapshotOutOfRange(usize),
}

pub type Result<T, E = PhaseSpaceError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherentState {
    pub theta: f64,
    pub phi: f64,
    /// `f_n` in the canonical basis (`n` = site-1 count).
    pub amplitudes: Vec<C64>,
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    // Exact sum of logs; N stays in the hundreds.
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Real factor `√C(N,n) cᵑ s^{N−n}` evaluated in logs, with exact zeros.
fn coherent_moduli(theta: f64, n: usize) -> Vec<f64> {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    (0..=n)
        .map(|k| {
            let (pc, ps) = (k, n - k);
            if (c == 0.0 && pc > 0) || (s == 0.0 && ps > 0) {
                return 0.0;
            }
            let mut ln = 0.5 * ln_binomial(n, k);
            if pc > 0 {
                ln += pc as f64 * c.abs().ln();
            }
            if ps > 0 {
                ln += ps as f64 * s.abs().ln();
            }
            let sign = if (c < 0.0 && pc % 2 == 1) != (s < 0.0 && ps % 2 == 1) { -1.0 } else { 1.0 };
            sign * ln.exp()
        })
        .collect()
}

/// `f_n = √C(N,n) cos(ϑ/2)ⁿ (sin(ϑ/2) e^{iφ})^{N−n}`.
pub fn coherent_state(theta: f64, phi: f64, n: usize) -> Result<CoherentState> {
    build_basis(n)?;
    if !theta.is_finite() || !phi.is_finite() {
        return Err(ModelError::InvalidParameter { name: "theta/phi", value: theta, reason: "must be finite" }.into());
    }
    let amplitudes = coherent_moduli(theta, n)
        .into_iter()
        .enumerate()
        .map(|(k, r)| C64::from_polar(r, (n - k) as f64 * phi))
        .collect();
    Ok(CoherentState { theta, phi, amplitudes })
}

impl CoherentState {
    pub fn from_classical(s: &ClassicalState<f64>, n: usize) -> Result<Self> {
        coherent_state(s.theta, s.phi, n)
    }

    pub fn density<T: Real>(&self) -> Result<DensityMatrix<T>> {
        let basis = build_basis(self.amplitudes.len() - 1)?;
        let amps: Vec<Complex<T>> = self.amplitudes.iter().map(|z| crate::scalar::c_from_f64(*z)).collect();
        Ok(DensityMatrix::from_pure(basis, &amps)?)
    }
}

/// `Q(ϑ, φ) = ⟨ϑ,φ|ρ|ϑ,φ⟩` on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HusimiGrid {
    pub particles: usize,
    /// `n_theta` points spanning `[0, π]` inclusive.
    pub theta_axis: Vec<f64>,
    /// `n_phi` points spanning `[0, 2π)`.
    pub phi_axis: Vec<f64>,
    /// `q[(i, j)]` at `(theta_axis[i], phi_axis[j])`.
    pub q: Array2<f64>,
}

impl HusimiGrid {
    /// Quadrature weight of node `(i, j)` for `(N+1)/(4π) ∮ · sin ϑ dϑ dφ`:
    /// trapezoid in ϑ, periodic rectangle rule in φ.
    fn weight(&self, i: usize) -> f64 {
        let nt = self.theta_axis.len();
        let dtheta = std::f64::consts::PI / (nt - 1) as f64;
        let dphi = std::f64::consts::TAU / self.phi_axis.len() as f64;
        let end = if i == 0 || i == nt - 1 { 0.5 } else { 1.0 };
        (self.particles + 1) as f64 / (4.0 * std::f64::consts::PI) * end * self.theta_axis[i].sin() * dtheta * dphi
    }

    /// `(N+1)/(4π) ∮ Q sin ϑ dϑ dφ`, equal to `tr ρ` up to quadrature error.
    pub fn normalization(&self) -> f64 {
        self.masked_mass(|_, _| true)
    }

    fn masked_mass(&self, keep: impl Fn(f64, f64) -> bool) -> f64 {
        let mut acc = 0.0;
        for (i, &th) in self.theta_axis.iter().enumerate() {
            let w = self.weight(i);
            for (j, &ph) in self.phi_axis.iter().enumerate() {
                if keep(th, ph) {
                    acc += w * self.q[(i, j)];
                }
            }
        }
        acc
    }

    /// Fraction of the total Q-mass within great-circle distance `radius` of `center`.
    pub fn mass_fraction_near(&self, center: &ClassicalState<f64>, radius: f64) -> f64 {
        let near = self.masked_mass(|th, ph| ClassicalState::new(th, ph).distance(center) <= radius);
        near / self.normalization()
    }

    /// Grid node with the largest Q.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for ((i, j), &v) in self.q.indexed_iter() {
            if v > best.2 {
                best = (self.theta_axis[i], self.phi_axis[j], v);
            }
        }
        best
    }

    pub fn min(&self) -> f64 {
        self.q.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `theta,phi,Q`, ϑ-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,phi,Q")?;
        for (i, th) in self.theta_axis.iter().enumerate() {
            for (j, ph) in self.phi_axis.iter().enumerate() {
                writeln!(w, "{th:.16e},{ph:.16e},{:.16e}", self.q[(i, j)])?;
            }
        }
        Ok(())
    }
}

/// Husimi function on an `n_theta × n_phi` grid. With
/// `f_n = a_n(ϑ) e^{i(N−n)φ}` one has `Q = Σ_k e^{ikφ} B_k(ϑ)` where
/// `B_k = Σ_{n−m=k} a_n a_m ρ_nm`, so each ϑ row costs O(d²) + O(d·n_phi).
pub fn husimi<T: Real>(rho: &DensityMatrix<T>, grid: (usize, usize)) -> Result<HusimiGrid> {
    let (nt, np) = grid;
    if nt < 2 || np < 2 {
        return Err(PhaseSpaceError::InvalidGrid(nt, np));
    }
    let n = rho.basis.particles();
    let d = n + 1;
    let theta_axis: Vec<f64> = (0..nt).map(|i| std::f64::consts::PI * i as f64 / (nt - 1) as f64).collect();
    let phi_axis: Vec<f64> = (0..np).map(|j| std::f64::consts::TAU * j as f64 / np as f64).collect();
    let r: Vec<C64> = rho.entries.iter().map(|z| c_to_f64(*z)).collect();
    let rows: Vec<Vec<f64>> = theta_axis
        .par_iter()
        .map(|&th| {
            let a = coherent_moduli(th, n);
            // b[k + n] for k = n_row − n_col ∈ [−n, n].
            let mut b = vec![C64::new(0.0, 0.0); 2 * d - 1];
            for (p, ap) in a.iter().enumerate() {
                if *ap == 0.0 {
                    continue;
                }
                for (q, aq) in a.iter().enumerate() {
                    b[p + n - q] += r[p * d + q] * (ap * aq);
                }
            }
            phi_axis
                .iter()
                .map(|&ph| {
                    let step = C64::from_polar(1.0, ph);
                    // Σ_k b_k e^{ikφ} via Horner in e^{iφ}, starting at k = n.
                    let mut acc = C64::new(0.0, 0.0);
                    for bk in b.iter().rev() {
                        acc = acc * step + bk;
                    }
                    (acc * C64::from_polar(1.0, -(n as f64) * ph)).re
                })
                .collect()
        })
        .collect();
    let q = Array2::from_shape_fn((nt, np), |(i, j)| rows[i][j]);
    Ok(HusimiGrid { particles: n, theta_axis, phi_axis, q })
}

fn sz_of<T: Real>(rho: &DensityMatrix<T>) -> f64 {
    let n = rho.basis.particles() as f64;
    rho.populations().iter().enumerate().map(|(k, p)| to_f64(*p) * (k as f64 / n - 0.5)).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoherentEvolution {
    /// `⟨Sz⟩` at `t = mT`, `m = 0..=m_max`.
    pub sz_series: Vec<f64>,
    /// Husimi grids at the requested periods, in request order.
    pub snapshots: Vec<(usize, HusimiGrid)>,
}

/// Propagates `|state0⟩⟨state0|` period by period and samples `⟨Sz⟩` at every
/// period boundary, with Husimi snapshots at `snapshot_times`.
pub fn stroboscopic_coherent_evolution<T: Real>(
    state0: &CoherentState,
    params: &ModelParams<T>,
    step: StepControl,
    m_max: usize,
    snapshot_times: &[usize],
    grid: (usize, usize),
) -> Result<CoherentEvolution> {
    if m_max == 0 {
        return Err(PhaseSpaceError::InvalidLength);
    }
    if let Some(&m) = snapshot_times.iter().find(|&&m| m > m_max) {
        return Err(PhaseSpaceError::SnapshotOutOfRange(m));
    }
    if state0.amplitudes.len() != params.dim() {
        return Err(PhaseSpaceError::DimensionMismatch { expected: params.dim(), found: state0.amplitudes.len() });
    }
    let ctx = PropagationContext::new(*params, step)?;
    let period = params.period();
    let mut rho = state0.density::<T>()?;
    let mut sz_series = Vec::with_capacity(m_max + 1);
    let mut taken: Vec<(usize, HusimiGrid)> = Vec::new();
    for m in 0..=m_max {
        if m > 0 {
            let t0 = period * crate::scalar::count(m - 1);
            rho = propagate_state(&rho, t0, t0 + period, &ctx)?;
        }
        sz_series.push(sz_of(&rho));
        if snapshot_times.contains(&m) {
            taken.push((m, husimi(&rho, grid)?));
        }
    }
    let snapshots = snapshot_times
        .iter()
        .map(|m| taken.iter().find(|(k, _)| k == m).cloned().expect("snapshot taken"))
        .collect();
    Ok(CoherentEvolution { sz_series, snapshots })
}

/// Number of consecutive jumps `⟨Sz⟩(m+1) − ⟨Sz⟩(m)`, starting at `m = 0`,
/// that alternate in sign and exceed [`MIN_JUMP`] in magnitude.
pub fn alternation_length(series: &[f64]) -> usize {
    let jumps: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let mut count = 0;
    for (k, j) in jumps.iter().enumerate() {
        if j.abs() < MIN_JUMP || (k > 0 && j.signum() == jumps[k - 1].signum()) {
            break;
        }
        count += 1;
    }
    count
}

/// `⟨Sz⟩(t)` of a coherent state under the quantum dynamics next to the
/// classical `½ cos ϑ(t)` from the same point.
#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceTrace {
    pub times: Vec<f64>,
    pub quantum: Vec<f64>,
    pub classical: Vec<f64>,
}

impl CorrespondenceTrace {
    pub fn max_deviation(&self) -> f64 {
        self.quantum.iter().zip(&self.classical).map(|(q, c)| (q - c).abs()).fold(0.0, f64::max)
    }
}

/// Samples both dynamics `samples_per_period` times per period for `periods`
/// periods, starting at `t = 0`.
pub fn quantum_classical_trace(
    seed: &ClassicalState<f64>,
    params: &ModelParams<f64>,
    step: StepControl,
    periods: usize,
    samples_per_period: usize,
) -> Result<CorrespondenceTrace> {
    if periods == 0 || samples_per_period == 0 {
        return Err(PhaseSpaceError::InvalidLength);
    }
    let ctx = PropagationContext::new(*params, step)?;
    let period = params.period();
    let dt = period / samples_per_period as f64;
    let total = periods * samples_per_period;
    let mf_step = period / step.steps_per_period as f64;
    let mut rho = CoherentState::from_classical(seed, params.n)?.density::<f64>()?;
    let mut cl = seed.canonical();
    let mut out = CorrespondenceTrace { times: vec![0.0], quantum: vec![sz_of(&rho)], classical: vec![cl.sz()] };
    for k in 0..total {
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        rho = propagate_state(&rho, t0, t1, &ctx)?;
        cl = integrate_mf(cl, t0, t1, params, mf_step)?.last().expect("non-empty trajectory").1;
        out.times.push(t1);
        out.quantum.push(sz_of(&rho));
        out.classical.push(cl.sz());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChecklistRun {
    pub run_id: usize,
    pub seed_theta: f64,
    pub seed_phi: f64,
    pub un: f64,
    pub alternation_length: usize,
    pub sz_series: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeCrystalReport {
    pub runs: Vec<ChecklistRun>,
    /// All runs jump in the same direction at every step of their common
    /// alternation window, and that window is non-empty.
    pub locked: bool,
}

impl TimeCrystalReport {
    pub fn min_alternation(&self) -> usize {
        self.runs.iter().map(|r| r.alternation_length).min().unwrap_or(0)
    }

    /// CSV with header `run_id,seed_theta,seed_phi,UN,alternation_length,locked`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "run_id,seed_theta,seed_phi,UN,alternation_length,locked")?;
        for r in &self.runs {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{},{}",
                r.run_id, r.seed_theta, r.seed_phi, r.un, r.alternation_length, self.locked
            )?;
        }
        Ok(())
    }
}

/// Runs the stroboscopic evolution from `seed + offset` for every offset at
/// the base U·N, then from `seed` at `U·N + δ` for every non-zero δ. Runs are
/// independent and execute in parallel; output order is fixed.
pub fn time_crystal_checklist(
    seed: ClassicalState<f64>,
    ic_offsets: &[(f64, f64)],
    un_perturbations: &[f64],
    params: &ModelParams<f64>,
    step: StepControl,
    m_max: usize,
) -> Result<TimeCrystalReport> {
    let base_un = params.un();
    let mut items: Vec<(ClassicalState<f64>, f64)> =
        ic_offsets.iter().map(|(dt, dp)| (ClassicalState::new(seed.theta + dt, seed.phi + dp), base_un)).collect();
    let has_zero_offset = ic_offsets.iter().any(|o| *o == (0.0, 0.0));
    for &du in un_perturbations {
        if du != 0.0 || !has_zero_offset {
            items.push((seed, base_un + du));
        }
    }
    let runs: Vec<ChecklistRun> = items
        .par_iter()
        .enumerate()
        .map(|(run_id, (s, un))| {
            let p = params.with_un(*un)?;
            let cs = CoherentState::from_classical(s, p.n)?;
            let ev = stroboscopic_coherent_evolution(&cs, &p, step, m_max, &[], DEFAULT_GRID)?;
            Ok(ChecklistRun {
                run_id,
                seed_theta: s.theta,
                seed_phi: s.phi,
                un: *un,
                alternation_length: alternation_length(&ev.sz_series),
                sz_series: ev.sz_series,
            })
        })
        .collect::<Result<_>>()?;
    let window = runs.iter().map(|r| r.alternation_length).min().unwrap_or(0);
    let locked = window > 0
        && runs.iter().all(|r| {
            (0..window).all(|m| {
                let a = runs[0].sz_series[m + 1] - runs[0].sz_series[m];
                let b = r.sz_series[m + 1] - r.sz_series[m];
                a.signum() == b.signum()
            })
        });
    Ok(TimeCrystalReport { runs, locked })
}

/// CSV with header `m,sz`.
pub fn write_sz_csv<W: Write>(series: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "m,sz")?;
    for (m, s) in series.iter().enumerate() {
        writeln!(w, "{m},{s:.16e}")?;
    }
    Ok(())
}

/// Basis of a coherent state's Hilbert space.
pub fn basis_of(state: &CoherentState) -> Result<FockBasis> {
    Ok(build_basis(state.amplitudes.len() - 1)?)
}
