//! Two-mode fixed-N Fock basis, the driven Bose-Hubbard dimer Hamiltonian,
//! the jump operator and the collective spin operators.
//!
//! Basis states are `|n, N-n>` with `n` the site-1 occupation, ordered by `n`
//! ascending. Every matrix in the crate uses this ordering.

use ndarray::Array2;
use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hermiticity_defect, BandOp};
use crate::scalar::{count, lit, Cplx, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("particle number must be a positive integer, got {0}")]
    InvalidParticleCount(String),
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("basis mismatch: operators built for N = {ops}, parameters have N = {params}")]
    BasisMismatch { ops: usize, params: usize },
}

/// Physical constants of the model in units with ħ = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T: Real> {
    /// Particle number N.
    pub n: usize,
    /// Tunnelling amplitude J.
    pub j: T,
    /// Interaction strength U (per particle pair, not U·N).
    pub u: T,
    /// Static tilt μ0.
    pub mu0: T,
    /// Drive amplitude μ1.
    pub mu1: T,
    /// Drive angular frequency ω.
    pub omega: T,
    /// Dissipative rate γ (not γ·N).
    pub gamma: T,
}

impl<T: Real> ModelParams<T> {
    pub fn new(n: usize, j: T, u: T, mu0: T, mu1: T, omega: T, gamma: T) -> Result<Self, ModelError> {
        let p = Self { n, j, u, mu0, mu1, omega, gamma };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from the composite couplings `U·N` and `γ·N`.
    pub fn from_composite(n: usize, j: T, un: T, mu0: T, mu1: T, omega: T, gamma_n: T) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidParticleCount("0".into()));
        }
        let nn = count::<T>(n);
        Self::new(n, j, un / nn, mu0, mu1, omega, gamma_n / nn)
    }

    /// Period-doubling reference point: μ0 = J, μ1 = 3.4 J, U·N = 0.2 J, γ·N = 0.1 J, ω = J.
    pub fn reference(n: usize) -> Self {
        Self::from_composite(n, T::one(), lit(0.2), T::one(), lit(3.4), T::one(), lit(0.1))
            .expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |name, value: T, reason| ModelError::InvalidParameter {
            name,
            value: value.to_f64().unwrap_or(f64::NAN),
            reason,
        };
        if self.n == 0 {
            return Err(ModelError::InvalidParticleCount("0".into()));
        }
        let all = [
            ("J", self.j),
            ("U", self.u),
            ("mu0", self.mu0),
            ("mu1", self.mu1),
            ("omega", self.omega),
            ("gamma", self.gamma),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(bad(name, v, "must be finite"));
            }
        }
        if self.j <= T::zero() {
            return Err(bad("J", self.j, "must be > 0"));
        }
        if self.omega <= T::zero() {
            return Err(bad("omega", self.omega, "must be > 0"));
        }
        if self.gamma < T::zero() {
            return Err(bad("gamma", self.gamma, "must be >= 0"));
        }
        if self.mu1 < T::zero() {
            return Err(bad("mu1", self.mu1, "must be >= 0"));
        }
        Ok(())
    }

    /// Drive period T = 2π/ω.
    pub fn period(&self) -> T {
        T::TAU() / self.omega
    }

    /// Hilbert-space dimension N + 1.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn un(&self) -> T {
        self.u * count(self.n)
    }

    pub fn gamma_n(&self) -> T {
        self.gamma * count(self.n)
    }

    /// Same parameters with a different particle number, keeping U·N and γ·N fixed.
    pub fn with_particles(&self, n: usize) -> Result<Self, ModelError> {
        Self::from_composite(n, self.j, self.un(), self.mu0, self.mu1, self.omega, self.gamma_n())
    }

    /// Same parameters with a different U·N.
    pub fn with_un(&self, un: T) -> Result<Self, ModelError> {
        Self::from_composite(self.n, self.j, un, self.mu0, self.mu1, self.omega, self.gamma_n())
    }

    /// Lossless conversion to double precision (for caching and spectral analysis).
    pub fn to_f64(&self) -> ModelParams<f64> {
        let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
        ModelParams {
            n: self.n,
            j: f(self.j),
            u: f(self.u),
            mu0: f(self.mu0),
            mu1: f(self.mu1),
            omega: f(self.omega),
            gamma: f(self.gamma),
        }
    }
}

/// `|site1, site2>` occupation labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FockState {
    pub site1: usize,
    pub site2: usize,
}

/// Canonical fixed-N two-mode basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FockBasis {
    n: usize,
}

impl FockBasis {
    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self, index: usize) -> FockState {
        assert!(index <= self.n);
        FockState { site1: index, site2: self.n - index }
    }

    pub fn states(&self) -> Vec<FockState> {
        (0..=self.n).map(|k| self.state(k)).collect()
    }
}

pub fn build_basis(n: usize) -> Result<FockBasis, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidParticleCount("0".into()));
    }
    Ok(FockBasis { n })
}

/// Accepts a particle count arriving as a float (e.g. from JSON) and rejects
/// anything that is not a positive integer.
pub fn build_basis_from_f64(n: f64) -> Result<FockBasis, ModelError> {
    if !(n.is_finite() && n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64) {
        return Err(ModelError::InvalidParticleCount(n.to_string()));
    }
    build_basis(n as usize)
}

/// Dense operator tagged with its basis.
#[derive(Clone, Debug)]
pub struct Operator<T: Real> {
    pub basis: FockBasis,
    pub entries: Array2<Cplx<T>>,
    pub hermitian: bool,
}

impl<T: Real> Operator<T> {
    pub fn from_band(basis: FockBasis, band: &BandOp<T>, hermitian: bool) -> Self {
        Self { basis, entries: band.to_dense(), hermitian }
    }

    pub fn hermiticity_defect(&self) -> T {
        hermiticity_defect(&self.entries)
    }

    /// True when the square shape matches the basis and, if flagged Hermitian,
    /// `max |A − A†| < 1e-12`.
    pub fn check(&self) -> bool {
        let d = self.basis.len();
        self.entries.dim() == (d, d) && (!self.hermitian || self.hermiticity_defect() < lit(1e-12))
    }
}

/// Names of the operators held by [`OperatorSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Hop,
    Interaction,
    Tilt,
    Jump,
    JumpDagJump,
    Sx,
    Sy,
    Sz,
}

/// All model operators, built once per parameter set.
#[derive(Clone, Debug)]
pub struct OperatorSet<T: Real> {
    pub basis: FockBasis,
    /// −J (b1† b2 + b2† b1)
    pub hop: BandOp<T>,
    /// (U/2) Σ_j n_j (n_j − 1)
    pub int: BandOp<T>,
    /// n2 − n1
    pub tilt: BandOp<T>,
    /// G = (b1† + b2†)(b1 − b2)
    pub g: BandOp<T>,
    /// G† G
    pub gdg: BandOp<T>,
    pub sx: BandOp<T>,
    pub sy: BandOp<T>,
    pub sz: BandOp<T>,
    /// Sz eigenvalues s_n = n/N − 1/2 in basis order.
    pub sz_weights: Vec<T>,
}

impl<T: Real> OperatorSet<T> {
    pub fn band(&self, kind: OpKind) -> &BandOp<T> {
        match kind {
            OpKind::Hop => &self.hop,
            OpKind::Interaction => &self.int,
            OpKind::Tilt => &self.tilt,
            OpKind::Jump => &self.g,
            OpKind::JumpDagJump => &self.gdg,
            OpKind::Sx => &self.sx,
            OpKind::Sy => &self.sy,
            OpKind::Sz => &self.sz,
        }
    }

    pub fn dense(&self, kind: OpKind) -> Operator<T> {
        Operator::from_band(self.basis, self.band(kind), kind != OpKind::Jump)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// `<n+1| b1† b2 |n> = sqrt((n+1)(N−n))`, as a banded matrix (subdiagonal).
fn raise_site1<T: Real>(n: usize) -> BandOp<T> {
    let d = n + 1;
    let mut op = BandOp::zeros(d, 1, 0);
    for k in 0..n {
        let amp = (count::<T>(k + 1) * count::<T>(n - k)).sqrt();
        op.set(k + 1, k, Complex::new(amp, T::zero()));
    }
    op
}

pub fn build_operators<T: Real>(params: &ModelParams<T>) -> Result<OperatorSet<T>, ModelError> {
    params.validate()?;
    let n = params.n;
    let basis = build_basis(n)?;
    let re = |x: T| Complex::new(x, T::zero());
    let nn = count::<T>(n);

    let b1d_b2 = raise_site1::<T>(n);
    let b2d_b1 = b1d_b2.adjoint();
    let occ1: Vec<T> = (0..=n).map(count::<T>).collect();
    let occ2: Vec<T> = (0..=n).map(|k| count::<T>(n - k)).collect();

    let hop = b1d_b2.add(&b2d_b1).scale(re(-params.j));
    let half_u = params.u * lit(0.5);
    let int = BandOp::diagonal(
        &occ1
            .iter()
            .zip(&occ2)
            .map(|(&a, &b)| re(half_u * (a * (a - T::one()) + b * (b - T::one()))))
            .collect::<Vec<_>>(),
    );
    let tilt = BandOp::diagonal(&occ1.iter().zip(&occ2).map(|(&a, &b)| re(b - a)).collect::<Vec<_>>());

    // G = n1 − n2 − b1†b2 + b2†b1
    let imbalance = tilt.scale(re(-T::one()));
    let g = imbalance.add(&b1d_b2.scale(re(-T::one()))).add(&b2d_b1);
    let gdg = g.adjoint().matmul(&g);

    let inv2n = T::one() / (nn + nn);
    let sx = b1d_b2.add(&b2d_b1).scale(re(inv2n));
    let sy = b1d_b2.add(&b2d_b1.scale(re(-T::one()))).scale(Complex::new(T::zero(), -inv2n));
    let sz_weights: Vec<T> = (0..=n).map(|k| count::<T>(k) / nn - lit(0.5)).collect();
    let sz = BandOp::diagonal(&sz_weights.iter().map(|&s| re(s)).collect::<Vec<_>>());

    Ok(OperatorSet { basis, hop, int, tilt, g, gdg, sx, sy, sz, sz_weights })
}

/// Drive ε(t) = μ0 + μ1 sin(ωt), with the phase wrapped into one period.
pub fn drive_eps<T: Real>(t: T, params: &ModelParams<T>) -> T {
    let phase = (params.omega * t) % T::TAU();
    params.mu0 + params.mu1 * phase.sin()
}

fn check_basis<T: Real>(ops: &OperatorSet<T>, params: &ModelParams<T>) -> Result<(), ModelError> {
    if ops.basis.particles() != params.n {
        return Err(ModelError::BasisMismatch { ops: ops.basis.particles(), params: params.n });
    }
    Ok(())
}

/// Banded H(t) = hop + int + ε(t)·tilt.
pub fn hamiltonian_band<T: Real>(t: T, ops: &OperatorSet<T>, params: &ModelParams<T>) -> Result<BandOp<T>, ModelError> {
    check_basis(ops, params)?;
    let eps = drive_eps(t, params);
    Ok(ops
        .hop
        .add(&ops.int)
        .add(&ops.tilt.scale(Complex::new(eps, T::zero()))))
}

pub fn hamiltonian_at<T: Real>(t: T, ops: &OperatorSet<T>, params: &ModelParams<T>) -> Result<Operator<T>, ModelError> {
    let h = hamiltonian_band(t, ops, params)?;
    Ok(Operator::from_band(ops.basis, &h, true))
}

/// Amplitudes of the symmetric condensate (b1† + b2†)^N |vac>, normalized:
/// sqrt(C(N, n)) / 2^{N/2}.
pub fn symmetric_condensate<T: Real>(n: usize) -> Vec<Cplx<T>> {
    let mut log_binom = 0.0f64;
    let half_log2 = 0.5 * (n as f64) * std::f64::consts::LN_2;
    (0..=n)
        .map(|k| {
            if k > 0 {
                log_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
            }
            Complex::new(lit((0.5 * log_binom - half_log2).exp()), T::zero())
        })
        .collect()
}

/// Row-major complex identity of size `d`.
pub fn identity<T: Real>(d: usize) -> Array2<Cplx<T>> {
    let mut m = Array2::from_elem((d, d), Cplx::zero());
    for k in 0..d {
        m[(k, k)] = Complex::new(T::one(), T::zero());
    }
    m
}
