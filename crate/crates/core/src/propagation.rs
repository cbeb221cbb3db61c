//! Lindblad propagation and the one-period Floquet map.
//!
//! The generator is applied in the structured form
//!
//! ```text
//! L_t(X) = -i (K(t) X - X K(t)†) + 2γ G X G†,   K(t) = H(t) - iγ G†G
//! ```
//!
//! which equals `-i[H, X] + γ(2 G X G† - {G†G, X})` for any square `X`,
//! Hermitian or not. All operators are banded, so one application costs
//! O(d²) instead of the O(d⁴) of a dense superoperator product.
//!
//! Vectorization is column stacking: element `X[i, j]` sits at `i + d·j`.

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{self, hermiticity_defect, max_abs_diff, vectorize, BandOp};
use crate::model::{build_operators, drive_eps, FockBasis, ModelError, ModelParams, OperatorSet};
use crate::scalar::{c_from_f64, c_to_f64, count, lit, to_f64, Cplx, Real};

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid step control: {0}")]
    InvalidStepControl(String),
    #[error("invalid interval: t1 = {t1} < t0 = {t0}")]
    InvalidInterval { t0: f64, t1: f64 },
    #[error("step-halving check failed: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    ConvergenceFailure { defect: f64, tolerance: f64 },
    #[error("cache format error: {0}")]
    CacheFormat(String),
    #[error("cache fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PropagationError> = std::result::Result<T, E>;

/// Fixed-step fourth-order integration settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub steps_per_period: usize,
    /// Re-run with half the step and compare endpoints.
    pub convergence_check: bool,
    /// Maximum entrywise defect tolerated by the halving check.
    pub tolerance: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { steps_per_period: 2000, convergence_check: false, tolerance: 1e-8 }
    }
}

impl StepControl {
    pub fn with_steps(steps_per_period: usize) -> Self {
        Self { steps_per_period, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 100 {
            return Err(PropagationError::InvalidStepControl(format!(
                "steps_per_period = {} (< 100)",
                self.steps_per_period
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(PropagationError::InvalidStepControl(format!("tolerance = {}", self.tolerance)));
        }
        Ok(())
    }

    fn doubled(&self) -> Self {
        Self { steps_per_period: 2 * self.steps_per_period, convergence_check: false, ..*self }
    }
}

/// The Lindblad generator of one parameter set, pre-assembled in banded form.
#[derive(Clone, Debug)]
pub struct Liouvillian<T: Real> {
    params: ModelParams<T>,
    dim: usize,
    /// Static part of K: hop + int − iγ G†G.
    k0: BandOp<T>,
    k0_adj: BandOp<T>,
    tilt: Vec<T>,
    g: BandOp<T>,
    g_adj: BandOp<T>,
    two_gamma: T,
}

/// Scratch space for one Liouvillian application.
#[derive(Clone, Debug)]
pub struct Workspace<T: Real> {
    a: Vec<Cplx<T>>,
    b: Vec<Cplx<T>>,
    y: Vec<Cplx<T>>,
    z: Vec<Cplx<T>>,
}

impl<T: Real> Workspace<T> {
    pub fn new(dim: usize) -> Self {
        let buf = vec![Cplx::zero(); dim * dim];
        Self { a: buf.clone(), b: buf.clone(), y: buf.clone(), z: buf }
    }
}

impl<T: Real> Liouvillian<T> {
    pub fn new(ops: &OperatorSet<T>, params: &ModelParams<T>) -> Result<Self> {
        params.validate()?;
        if ops.basis.particles() != params.n {
            return Err(ModelError::BasisMismatch { ops: ops.basis.particles(), params: params.n }.into());
        }
        let damp = Complex::new(T::zero(), -params.gamma);
        let k0 = ops.hop.add(&ops.int).add(&ops.gdg.scale(damp));
        let k0_adj = k0.adjoint();
        let tilt = (0..ops.dim()).map(|k| ops.tilt.get(k, k).re).collect();
        Ok(Self {
            params: *params,
            dim: ops.dim(),
            k0,
            k0_adj,
            tilt,
            g: ops.g.clone(),
            g_adj: ops.g.adjoint(),
            two_gamma: params.gamma + params.gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    /// `out = L_t(x)` for a row-major `d x d` buffer.
    pub fn apply_into(&self, t: T, x: &[Cplx<T>], out: &mut [Cplx<T>], ws: &mut Workspace<T>) {
        let d = self.dim;
        let eps = drive_eps(t, &self.params);
        self.k0.mul_left(x, &mut ws.a);
        self.k0_adj.mul_right(x, &mut ws.b);
        self.g_adj.mul_right(x, &mut ws.y);
        self.g.mul_left(&ws.y, &mut ws.z);
        let minus_i = Complex::new(T::zero(), -T::one());
        for i in 0..d {
            let ti = self.tilt[i];
            for j in 0..d {
                let k = i * d + j;
                let comm = ws.a[k] - ws.b[k] + x[k] * (eps * (ti - self.tilt[j]));
                out[k] = comm * minus_i + ws.z[k] * self.two_gamma;
            }
        }
    }
}

/// Operators, generator and step control for one parameter set.
#[derive(Clone, Debug)]
pub struct PropagationContext<T: Real> {
    pub params: ModelParams<T>,
    pub ops: OperatorSet<T>,
    pub step: StepControl,
    pub liouvillian: Liouvillian<T>,
}

impl<T: Real> PropagationContext<T> {
    pub fn new(params: ModelParams<T>, step: StepControl) -> Result<Self> {
        step.validate()?;
        let ops = build_operators(&params)?;
        let liouvillian = Liouvillian::new(&ops, &params)?;
        Ok(Self { params, ops, step, liouvillian })
    }

    pub fn basis(&self) -> FockBasis {
        self.ops.basis
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    fn with_step(&self, step: StepControl) -> Self {
        Self { step, ..self.clone() }
    }

    /// Number of fixed steps used on `[t0, t1]`.
    pub fn steps_for(&self, t0: T, t1: T) -> usize {
        let periods = to_f64((t1 - t0) / self.params.period());
        let n = (periods * self.step.steps_per_period as f64 - 1e-9).ceil();
        n.max(1.0) as usize
    }
}

/// Classical RK4 on a single `d x d` matrix.
pub struct Rk4<'a, T: Real> {
    gen: &'a Liouvillian<T>,
    k1: Vec<Cplx<T>>,
    k2: Vec<Cplx<T>>,
    k3: Vec<Cplx<T>>,
    k4: Vec<Cplx<T>>,
    tmp: Vec<Cplx<T>>,
    ws: Workspace<T>,
}

impl<'a, T: Real> Rk4<'a, T> {
    pub fn new(gen: &'a Liouvillian<T>) -> Self {
        let d = gen.dim();
        let buf = vec![Cplx::zero(); d * d];
        Self {
            gen,
            k1: buf.clone(),
            k2: buf.clone(),
            k3: buf.clone(),
            k4: buf.clone(),
            tmp: buf,
            ws: Workspace::new(d),
        }
    }

    fn step(&mut self, t: T, h: T, x: &mut [Cplx<T>]) {
        let half = h * lit(0.5);
        let gen = self.gen;
        gen.apply_into(t, x, &mut self.k1, &mut self.ws);
        axpy_into(&mut self.tmp, x, half, &self.k1);
        gen.apply_into(t + half, &self.tmp, &mut self.k2, &mut self.ws);
        axpy_into(&mut self.tmp, x, half, &self.k2);
        gen.apply_into(t + half, &self.tmp, &mut self.k3, &mut self.ws);
        axpy_into(&mut self.tmp, x, h, &self.k3);
        gen.apply_into(t + h, &self.tmp, &mut self.k4, &mut self.ws);
        let sixth = h / lit(6.0);
        let two: T = lit(2.0);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = *xi + (self.k1[i] + (self.k2[i] + self.k3[i]) * two + self.k4[i]) * sixth;
        }
    }

    /// Advances `x` from `t0` to `t1` in `n` equal steps. Step times are
    /// `t0 + k·h`, so the drive phase is tied to absolute time.
    pub fn advance(&mut self, x: &mut [Cplx<T>], t0: T, t1: T, n: usize) {
        if n == 0 || t1 == t0 {
            return;
        }
        let h = (t1 - t0) / count(n);
        for k in 0..n {
            self.step(t0 + h * count(k), h, x);
        }
    }
}

#[inline]
fn axpy_into<T: Real>(out: &mut [Cplx<T>], x: &[Cplx<T>], a: T, k: &[Cplx<T>]) {
    for ((o, &xv), &kv) in out.iter_mut().zip(x).zip(k) {
        *o = xv + kv * a;
    }
}

fn check_square<T: Real>(x: &Array2<Cplx<T>>, d: usize) -> Result<()> {
    let (r, c) = x.dim();
    if r != d || c != d {
        return Err(PropagationError::DimensionMismatch { expected: d, found: if r != d { r } else { c } });
    }
    Ok(())
}

/// `−i[H(t), ρ] + γ(2GρG† − {G†G, ρ})`. Linear; accepts any square matrix.
pub fn apply_liouvillian<T: Real>(
    rho: &Array2<Cplx<T>>,
    t: T,
    ops: &OperatorSet<T>,
    params: &ModelParams<T>,
) -> Result<Array2<Cplx<T>>> {
    let gen = Liouvillian::new(ops, params)?;
    check_square(rho, gen.dim())?;
    let x = rho.as_standard_layout();
    let mut out = vec![Cplx::zero(); gen.dim() * gen.dim()];
    gen.apply_into(t, x.as_slice().expect("standard layout"), &mut out, &mut Workspace::new(gen.dim()));
    Ok(Array2::from_shape_vec(rho.dim(), out).expect("shape"))
}

fn propagate_raw<T: Real>(x0: &Array2<Cplx<T>>, t0: T, t1: T, ctx: &PropagationContext<T>) -> Array2<Cplx<T>> {
    let mut x = x0.as_standard_layout().into_owned();
    let n = ctx.steps_for(t0, t1);
    if t1 > t0 {
        Rk4::new(&ctx.liouvillian).advance(x.as_slice_mut().expect("standard layout"), t0, t1, n);
    }
    x
}

/// Propagates an arbitrary (not necessarily Hermitian or normalized) matrix
/// from `t0` to `t1`.
pub fn propagate_matrix<T: Real>(
    x0: &Array2<Cplx<T>>,
    t0: T,
    t1: T,
    ctx: &PropagationContext<T>,
) -> Result<Array2<Cplx<T>>> {
    check_square(x0, ctx.dim())?;
    if t1 < t0 {
        return Err(PropagationError::InvalidInterval { t0: to_f64(t0), t1: to_f64(t1) });
    }
    let x = propagate_raw(x0, t0, t1, ctx);
    if ctx.step.convergence_check && t1 > t0 {
        let fine = propagate_raw(x0, t0, t1, &ctx.with_step(ctx.step.doubled()));
        let defect = to_f64(max_abs_diff(&x, &fine));
        if defect > ctx.step.tolerance {
            return Err(PropagationError::ConvergenceFailure { defect, tolerance: ctx.step.tolerance });
        }
    }
    Ok(x)
}

/// Density matrix in the canonical Fock basis.
#[derive(Clone, Debug)]
pub struct DensityMatrix<T: Real> {
    pub basis: FockBasis,
    pub entries: Array2<Cplx<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(basis: FockBasis, entries: Array2<Cplx<T>>) -> Result<Self> {
        check_square(&entries, basis.len())?;
        Ok(Self { basis, entries })
    }

    /// `|ψ><ψ|` for normalized amplitudes `ψ`.
    pub fn from_pure(basis: FockBasis, amplitudes: &[Cplx<T>]) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(PropagationError::DimensionMismatch { expected: basis.len(), found: amplitudes.len() });
        }
        let d = basis.len();
        let entries = Array2::from_shape_fn((d, d), |(i, j)| amplitudes[i] * amplitudes[j].conj());
        Ok(Self { basis, entries })
    }

    /// `I / d`.
    pub fn maximally_mixed(basis: FockBasis) -> Self {
        let d = basis.len();
        let w = T::one() / count(d);
        let mut entries = Array2::from_elem((d, d), Cplx::zero());
        for k in 0..d {
            entries[(k, k)] = Complex::new(w, T::zero());
        }
        Self { basis, entries }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn trace(&self) -> Cplx<T> {
        linalg::trace(&self.entries)
    }

    pub fn hermiticity_defect(&self) -> T {
        hermiticity_defect(&self.entries)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.entries)[0]
    }

    pub fn purity(&self) -> T {
        // tr(ρ²) = Σ_ij ρ_ij ρ_ji
        let d = self.dim();
        let mut acc = Cplx::zero();
        for i in 0..d {
            for j in 0..d {
                acc = acc + self.entries[(i, j)] * self.entries[(j, i)];
            }
        }
        acc.re
    }

    /// `tr(A ρ)` for a banded operator.
    pub fn expectation(&self, op: &BandOp<T>) -> Cplx<T> {
        let d = self.dim();
        let mut acc = Cplx::zero();
        for i in 0..d {
            for j in 0..d {
                let a = op.get(i, j);
                if !a.is_zero() {
                    acc = acc + a * self.entries[(j, i)];
                }
            }
        }
        acc
    }

    /// `<ψ|ρ|ψ>`.
    pub fn fidelity_pure(&self, psi: &[Cplx<T>]) -> T {
        let d = self.dim();
        let mut acc = Cplx::zero();
        for i in 0..d {
            for j in 0..d {
                acc = acc + psi[i].conj() * self.entries[(i, j)] * psi[j];
            }
        }
        acc.re
    }

    pub fn populations(&self) -> Vec<T> {
        self.entries.diag().iter().map(|z| z.re).collect()
    }

    /// Checks trace (when `normalized`), Hermiticity (1e-10) and approximate
    /// positivity (min eigenvalue ≥ −1e-8·d). Returns the first violation.
    pub fn check(&self, normalized: bool) -> std::result::Result<(), String> {
        if normalized {
            let tr = c_to_f64(self.trace());
            if (tr - Complex::new(1.0, 0.0)).norm() > 1e-9 {
                return Err(format!("trace {tr} differs from 1"));
            }
        }
        let herm = to_f64(self.hermiticity_defect());
        if herm > 1e-10 {
            return Err(format!("Hermiticity defect {herm:.3e}"));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 * self.dim() as f64 {
            return Err(format!("minimum eigenvalue {min:.3e}"));
        }
        Ok(())
    }
}

/// Propagates a density matrix from `t0` to `t1` (`t1 ≥ t0`).
pub fn propagate_state<T: Real>(
    rho0: &DensityMatrix<T>,
    t0: T,
    t1: T,
    ctx: &PropagationContext<T>,
) -> Result<DensityMatrix<T>> {
    if rho0.basis != ctx.basis() {
        return Err(PropagationError::DimensionMismatch { expected: ctx.dim(), found: rho0.dim() });
    }
    let entries = propagate_matrix(&rho0.entries, t0, t1, ctx)?;
    Ok(DensityMatrix { basis: rho0.basis, entries })
}

/// One-period propagator acting on column-stacked `vec(ρ)`.
#[derive(Clone, Debug)]
pub struct FloquetMap<T: Real> {
    pub basis: FockBasis,
    /// Dense `d² x d²` matrix, row-major.
    pub entries: Array2<Cplx<T>>,
    pub params: ModelParams<T>,
    pub step: StepControl,
    pub fingerprint: String,
}

/// Parameter block stored in the cache header and hashed into the fingerprint.
fn params_block(params: &ModelParams<f64>, step: &StepControl) -> [f64; 8] {
    [
        params.j,
        params.u,
        params.mu0,
        params.mu1,
        params.omega,
        params.gamma,
        step.steps_per_period as f64,
        0.0,
    ]
}

fn fingerprint_from_block(n: u32, block: &[f64; 8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(n.to_le_bytes());
    for v in block {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the model parameters and step count identifying a Floquet map.
pub fn fingerprint<T: Real>(params: &ModelParams<T>, step: &StepControl) -> String {
    fingerprint_from_block(params.n as u32, &params_block(&params.to_f64(), step))
}

impl<T: Real> FloquetMap<T> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `max |t·P − t|` with `t` the vectorized identity (trace functional).
    pub fn trace_preservation_defect(&self) -> f64 {
        let d = self.dim();
        let d2 = d * d;
        let mut worst = 0.0f64;
        for c in 0..d2 {
            let mut acc = Cplx::<T>::zero();
            for k in 0..d {
                acc = acc + self.entries[(k + d * k, c)];
            }
            let target = if c % (d + 1) == 0 { 1.0 } else { 0.0 };
            worst = worst.max((c_to_f64(acc) - Complex::new(target, 0.0)).norm());
        }
        worst
    }

    /// `max |P(X†) − P(X)†|` for a given `X`.
    pub fn hermiticity_preservation_defect(&self, x: &Array2<Cplx<T>>) -> Result<f64> {
        let px = apply_floquet(self, x)?;
        let pxd = apply_floquet(self, &linalg::adjoint(x))?;
        Ok(to_f64(max_abs_diff(&pxd, &linalg::adjoint(&px))))
    }

    pub fn to_f64(&self) -> FloquetMap<f64> {
        FloquetMap {
            basis: self.basis,
            entries: self.entries.mapv(c_to_f64),
            params: self.params.to_f64(),
            step: self.step,
            fingerprint: self.fingerprint.clone(),
        }
    }
}

impl FloquetMap<f64> {
    pub fn cast<T: Real>(&self) -> FloquetMap<T> {
        let p = &self.params;
        FloquetMap {
            basis: self.basis,
            entries: self.entries.mapv(c_from_f64),
            params: ModelParams {
                n: p.n,
                j: lit(p.j),
                u: lit(p.u),
                mu0: lit(p.mu0),
                mu1: lit(p.mu1),
                omega: lit(p.omega),
                gamma: lit(p.gamma),
            },
            step: self.step,
            fingerprint: self.fingerprint.clone(),
        }
    }
}

/// Integrates dΦ/dt = L(t)Φ over one period from Φ(0) = identity, one matrix
/// unit at a time. Columns for `E_ji` (j > i) follow from `P(E_ij)†` because
/// the generator preserves Hermiticity.
fn integrate_map<T: Real>(ctx: &PropagationContext<T>) -> Array2<Cplx<T>> {
    let d = ctx.dim();
    let d2 = d * d;
    let period = ctx.params.period();
    let n = ctx.step.steps_per_period;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let columns: Vec<Vec<Cplx<T>>> = pairs
        .par_iter()
        .map_init(
            || Rk4::new(&ctx.liouvillian),
            |rk, &(i, j)| {
                let mut x = vec![Cplx::zero(); d2];
                x[i * d + j] = Complex::new(T::one(), T::zero());
                rk.advance(&mut x, T::zero(), period, n);
                x
            },
        )
        .collect();

    let mut entries = Array2::from_elem((d2, d2), Cplx::zero());
    for (&(i, j), x) in pairs.iter().zip(&columns) {
        // x is row-major P(E_ij); column index of E_ij is i + d j.
        let c = i + d * j;
        let ct = j + d * i;
        for a in 0..d {
            for b in 0..d {
                let v = x[a * d + b];
                entries[(a + d * b, c)] = v;
                if i != j {
                    // P(E_ji)[a, b] = conj(P(E_ij)[b, a])
                    entries[(b + d * a, ct)] = v.conj();
                }
            }
        }
    }
    entries
}

pub fn build_floquet_map<T: Real>(ctx: &PropagationContext<T>) -> Result<FloquetMap<T>> {
    ctx.step.validate()?;
    let entries = integrate_map(ctx);
    if ctx.step.convergence_check {
        let fine = integrate_map(&ctx.with_step(ctx.step.doubled()));
        let defect = to_f64(max_abs_diff(&entries, &fine));
        if defect > ctx.step.tolerance {
            return Err(PropagationError::ConvergenceFailure { defect, tolerance: ctx.step.tolerance });
        }
    }
    Ok(FloquetMap {
        basis: ctx.basis(),
        entries,
        params: ctx.params,
        step: ctx.step,
        fingerprint: fingerprint(&ctx.params, &ctx.step),
    })
}

/// `reshape(P · vec(X))`.
pub fn apply_floquet<T: Real>(map: &FloquetMap<T>, x: &Array2<Cplx<T>>) -> Result<Array2<Cplx<T>>> {
    let d = map.dim();
    check_square(x, d)?;
    let v = vectorize(x);
    let d2 = d * d;
    let mut y = vec![Cplx::zero(); d2];
    for (r, yr) in y.iter_mut().enumerate() {
        let row = map.entries.row(r);
        let mut acc = Cplx::zero();
        for (p, vc) in row.iter().zip(&v) {
            acc = acc + *p * *vc;
        }
        *yr = acc;
    }
    Ok(linalg::unvectorize(&y, d))
}

const CACHE_MAGIC: &[u8; 4] = b"FLQM";
pub const CACHE_VERSION: u32 = 1;

/// Writes the map in the binary cache layout: magic, version, N, d, parameter
/// block (8 × f64), then the d⁴ entries as (re, im) f64 pairs, row-major; all
/// little-endian.
pub fn write_cache<T: Real, W: Write>(map: &FloquetMap<T>, mut w: W) -> Result<()> {
    let d = map.dim();
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(map.basis.particles() as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    for v in params_block(&map.params.to_f64(), &map.step) {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(d * d * 16);
    for row in map.entries.rows() {
        buf.clear();
        for z in row {
            let z = c_to_f64(*z);
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a cached map. When `expected` is given, the header must carry the
/// same fingerprint.
pub fn read_cache<R: Read>(mut r: R, expected: Option<(&ModelParams<f64>, &StepControl)>) -> Result<FloquetMap<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(PropagationError::CacheFormat("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(PropagationError::CacheFormat(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)?;
    let d = read_u32(&mut r)? as usize;
    if n == 0 || d != n as usize + 1 {
        return Err(PropagationError::CacheFormat(format!("N = {n} inconsistent with d = {d}")));
    }
    let mut block = [0f64; 8];
    for v in block.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    let found = fingerprint_from_block(n, &block);
    if let Some((params, step)) = expected {
        let want = fingerprint(params, step);
        if want != found {
            return Err(PropagationError::FingerprintMismatch { expected: want, found });
        }
    }
    if block[6].fract() != 0.0 || block[6] < 1.0 {
        return Err(PropagationError::CacheFormat(format!("steps_per_period = {}", block[6])));
    }
    let params = ModelParams::new(n as usize, block[0], block[1], block[2], block[3], block[4], block[5])?;
    let step = StepControl { steps_per_period: block[6] as usize, ..StepControl::default() };
    let d2 = d * d;
    let mut raw = vec![0u8; d2 * 16];
    let mut entries = Array2::from_elem((d2, d2), Complex::new(0.0, 0.0));
    for r_idx in 0..d2 {
        r.read_exact(&mut raw)?;
        for c in 0..d2 {
            let re = f64::from_le_bytes(raw[c * 16..c * 16 + 8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(raw[c * 16 + 8..c * 16 + 16].try_into().expect("8 bytes"));
            entries[(r_idx, c)] = Complex::new(re, im);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(PropagationError::CacheFormat("trailing bytes".into()));
    }
    Ok(FloquetMap {
        basis: crate::model::build_basis(n as usize)?,
        entries,
        params,
        step,
        fingerprint: found,
    })
}
