//! Independent dense oracles built on nalgebra.
//!
//! Operators are assembled in the full two-mode Fock space from single-mode
//! ladder matrices and projected onto the fixed-N sector; the generator is a
//! Kronecker-product superoperator and the one-period map is a product of
//! matrix exponentials over midpoint slices.

#![allow(dead_code)]

use dimer_floquet::model::ModelParams;
use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::Rng;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn to_nalgebra(a: &Array2<Complex64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn to_ndarray(a: &CMat) -> Array2<Complex64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Fixed-N model operators obtained by projection from the two-mode space.
pub struct OracleOps {
    pub hop: CMat,
    pub interaction: CMat,
    pub tilt: CMat,
    pub jump: CMat,
    pub sz: CMat,
}

/// Single-mode annihilator truncated to occupations `0..=n`.
fn annihilator(n: usize) -> CMat {
    CMat::from_fn(n + 1, n + 1, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) })
}

pub fn oracle_ops(params: &ModelParams<f64>) -> OracleOps {
    let n = params.n;
    let m = n + 1;
    let a = annihilator(n);
    let id = CMat::identity(m, m);
    let b1 = a.kronecker(&id);
    let b2 = id.kronecker(&a);
    let b1d = b1.adjoint();
    let b2d = b2.adjoint();
    let n1 = &b1d * &b1;
    let n2 = &b2d * &b2;
    let full_id = CMat::identity(m * m, m * m);

    // Columns |n, N−n⟩ with product index n1·(N+1) + n2.
    let mut p = CMat::zeros(m * m, m);
    for k in 0..=n {
        p[(k * m + (n - k), k)] = c(1.0);
    }
    let project = |x: &CMat| p.adjoint() * x * &p;

    let hop = (&b1d * &b2 + &b2d * &b1) * c(-params.j);
    let interaction = (&n1 * (&n1 - &full_id) + &n2 * (&n2 - &full_id)) * c(0.5 * params.u);
    let tilt = &n2 - &n1;
    let jump = (&b1d + &b2d) * (&b1 - &b2);
    let sz = (&n1 - &n2) * c(0.5 / n as f64);
    OracleOps {
        hop: project(&hop),
        interaction: project(&interaction),
        tilt: project(&tilt),
        jump: project(&jump),
        sz: project(&sz),
    }
}

pub fn oracle_hamiltonian(ops: &OracleOps, params: &ModelParams<f64>, t: f64) -> CMat {
    let eps = params.mu0 + params.mu1 * (params.omega * t).sin();
    &ops.hop + &ops.interaction + &ops.tilt * c(eps)
}

/// Column-stacked superoperator: `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.
pub fn oracle_superoperator(ops: &OracleOps, params: &ModelParams<f64>, t: f64) -> CMat {
    let h = oracle_hamiltonian(ops, params, t);
    let d = h.nrows();
    let id = CMat::identity(d, d);
    let g = &ops.jump;
    let gdg = g.adjoint() * g;
    let i = Complex64::new(0.0, 1.0);
    let unitary = (id.kronecker(&h) - h.transpose().kronecker(&id)) * (-i);
    let dissipator = (g.conjugate().kronecker(g) * c(2.0) - id.kronecker(&gdg) - gdg.transpose().kronecker(&id))
        * c(params.gamma);
    unitary + dissipator
}

/// `Π exp(L(t_k) Δt)` over `slices` midpoint slices of one period.
pub fn oracle_floquet_map(params: &ModelParams<f64>, slices: usize) -> CMat {
    let ops = oracle_ops(params);
    let period = params.period();
    let dt = period / slices as f64;
    let d2 = (params.n + 1).pow(2);
    let mut map = CMat::identity(d2, d2);
    for k in 0..slices {
        let t = (k as f64 + 0.5) * dt;
        let step = (oracle_superoperator(&ops, params, t) * c(dt)).exp();
        map = step * map;
    }
    map
}

pub fn vec_cols(x: &CMat) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_iterator(x.len(), x.iter().copied())
}

/// Eigenvalues through nalgebra's complex Schur decomposition.
pub fn oracle_eigenvalues(a: &CMat) -> Vec<Complex64> {
    a.clone().schur().eigenvalues().expect("complex Schur form is triangular").iter().copied().collect()
}

/// Largest distance from any element of `a` to its nearest unused partner in
/// `b`, matching greedily in order of decreasing modulus.
pub fn match_spectra(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut order: Vec<Complex64> = a.to_vec();
    order.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for z in order {
        let (k, dist) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, w)| (k, (w - z).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("unused partner");
        used[k] = true;
        worst = worst.max(dist);
    }
    worst
}

/// Random density matrix `A A† / tr(A A†)` from uniformly distributed entries.
pub fn random_density(d: usize, rng: &mut StdRng) -> Array2<Complex64> {
    let a = CMat::from_fn(d, d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    to_ndarray(&(rho / tr))
}

/// Random Hermitian matrix with entries in the unit square.
pub fn random_hermitian(d: usize, rng: &mut StdRng) -> Array2<Complex64> {
    let a = CMat::from_fn(d, d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    to_ndarray(&((&a + a.adjoint()) * c(0.5)))
}
