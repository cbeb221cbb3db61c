//! Classical mean-field limit on the Bloch sphere: equations of motion in the
//! angles (ϑ, φ), stroboscopic Poincaré records, bifurcation scans and a small
//! attractor classifier.
//!
//! The spin vector is `s = ½(cos φ sin ϑ, sin φ sin ϑ, cos ϑ)` and the
//! observable recorded stroboscopically is `s_z = ½ cos ϑ`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{drive_eps, ModelError, ModelParams};
use crate::scalar::{count, lit, to_f64, Real};

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("angle form is singular at theta = {theta} (|sin theta| < 1e-9)")]
    Pole { theta: f64 },
    #[error("step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid interval: t1 = {t1} < t0 = {t0}")]
    InvalidInterval { t0: f64, t1: f64 },
    #[error("{0} must be at least 1")]
    InvalidCount(&'static str),
    #[error("empty {0} grid")]
    EmptyGrid(&'static str),
    #[error("empty record")]
    EmptyRecord,
    #[error("no period-2 orbit from seed ({theta}, {phi}): {kind:?}")]
    NoPeriodTwo { theta: f64, phi: f64, kind: AttractorKind },
}

pub type Result<T, E = MeanFieldError> = std::result::Result<T, E>;

pub const DEFAULT_TRANSIENT: usize = 800;
pub const DEFAULT_RECORD: usize = 200;
pub const DEFAULT_STEPS_PER_PERIOD: usize = 2000;
/// Below this `|sin ϑ|` a step is taken in Cartesian coordinates.
pub const POLE_SWITCH: f64 = 0.1;
const POLE_GUARD: f64 = 1e-9;

/// Point on the Bloch sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState<T: Real> {
    pub theta: T,
    pub phi: T,
}

impl<T: Real> ClassicalState<T> {
    pub fn new(theta: T, phi: T) -> Self {
        Self { theta, phi }
    }

    /// Maps to `ϑ ∈ [0, π]`, `φ ∈ [0, 2π)`; `(−ϑ, φ)` becomes `(ϑ, φ + π)`.
    pub fn canonical(&self) -> Self {
        let tau = T::TAU();
        let pi = T::PI();
        let mut theta = self.theta - tau * (self.theta / tau).round();
        let mut phi = self.phi;
        if theta < T::zero() {
            theta = -theta;
            phi = phi + pi;
        }
        phi = phi - tau * (phi / tau).floor();
        if phi >= tau {
            phi = phi - tau;
        }
        Self { theta, phi }
    }

    /// `½ cos ϑ`.
    pub fn sz(&self) -> T {
        self.theta.cos() * lit(0.5)
    }

    /// `(s_x, s_y, s_z)` on the sphere of radius ½.
    pub fn to_cartesian(&self) -> [T; 3] {
        let half: T = lit(0.5);
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [half * cp * st, half * sp * st, half * ct]
    }

    /// Inverse of [`Self::to_cartesian`]; the radius is ignored.
    pub fn from_cartesian(s: [T; 3]) -> Self {
        let rho = (s[0] * s[0] + s[1] * s[1]).sqrt();
        Self { theta: rho.atan2(s[2]), phi: s[1].atan2(s[0]) }.canonical()
    }

    pub fn to_f64(&self) -> ClassicalState<f64> {
        ClassicalState { theta: to_f64(self.theta), phi: to_f64(self.phi) }
    }

    /// Great-circle distance (chord form, accurate for nearby points).
    pub fn distance(&self, other: &Self) -> T {
        let a = self.to_cartesian();
        let b = other.to_cartesian();
        let chord = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        let two: T = lit(2.0);
        two * chord.min(T::one()).asin()
    }
}

/// `(ϑ̇, φ̇)` of the angle form.
pub fn mf_rhs<T: Real>(state: &ClassicalState<T>, t: T, params: &ModelParams<T>) -> Result<(T, T)> {
    let (st, ct) = state.theta.sin_cos();
    if st.abs() < lit(POLE_GUARD) {
        return Err(MeanFieldError::Pole { theta: to_f64(state.theta) });
    }
    let (sp, cp) = state.phi.sin_cos();
    let two: T = lit(2.0);
    let four: T = lit(4.0);
    let (j, un, gn) = (params.j, params.un(), params.gamma_n());
    let eps = drive_eps(t, params);
    let theta_dot = two * j * sp + four * gn * cp * ct;
    let phi_dot = two * j * ct / st * cp - two * eps + un * ct - four * gn * sp / st;
    Ok((theta_dot, phi_dot))
}

/// `ṡ` of the equivalent Cartesian form; conserves `|s|²` exactly.
pub fn cartesian_rhs<T: Real>(s: &[T; 3], t: T, params: &ModelParams<T>) -> [T; 3] {
    let [sx, sy, sz] = *s;
    let two: T = lit(2.0);
    let eight: T = lit(8.0);
    let (j, un, gn) = (params.j, params.un(), params.gamma_n());
    let eps = drive_eps(t, params);
    [
        two * eps * sy - two * un * sz * sy + eight * gn * (sy * sy + sz * sz),
        -two * eps * sx + two * un * sz * sx + two * j * sz - eight * gn * sx * sy,
        -two * j * sy - eight * gn * sx * sz,
    ]
}

fn rk4_cartesian<T: Real>(s: [T; 3], t: T, h: T, params: &ModelParams<T>) -> [T; 3] {
    let half = h * lit(0.5);
    let add = |x: [T; 3], k: [T; 3], c: T| [x[0] + c * k[0], x[1] + c * k[1], x[2] + c * k[2]];
    let k1 = cartesian_rhs(&s, t, params);
    let k2 = cartesian_rhs(&add(s, k1, half), t + half, params);
    let k3 = cartesian_rhs(&add(s, k2, half), t + half, params);
    let k4 = cartesian_rhs(&add(s, k3, h), t + h, params);
    let sixth = h / lit(6.0);
    let two: T = lit(2.0);
    let mut out = s;
    for i in 0..3 {
        out[i] = s[i] + sixth * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
    }
    out
}

fn rk4_angles<T: Real>(s: ClassicalState<T>, t: T, h: T, params: &ModelParams<T>) -> Result<ClassicalState<T>> {
    let half = h * lit(0.5);
    let at = |dt: T, k: (T, T)| ClassicalState::new(s.theta + dt * k.0, s.phi + dt * k.1);
    let k1 = mf_rhs(&s, t, params)?;
    let k2 = mf_rhs(&at(half, k1), t + half, params)?;
    let k3 = mf_rhs(&at(half, k2), t + half, params)?;
    let k4 = mf_rhs(&at(h, k3), t + h, params)?;
    let sixth = h / lit(6.0);
    let two: T = lit(2.0);
    Ok(ClassicalState::new(
        s.theta + sixth * (k1.0 + two * (k2.0 + k3.0) + k4.0),
        s.phi + sixth * (k1.1 + two * (k2.1 + k3.1) + k4.1),
    ))
}

/// One step of the angle form, or of the Cartesian form when the state is
/// within [`POLE_SWITCH`] of a pole. The result is canonical.
fn mf_step<T: Real>(s: ClassicalState<T>, t: T, h: T, params: &ModelParams<T>) -> Result<ClassicalState<T>> {
    if s.theta.sin().abs() < lit(POLE_SWITCH) {
        Ok(ClassicalState::from_cartesian(rk4_cartesian(s.to_cartesian(), t, h, params)))
    } else {
        rk4_angles(s, t, h, params).map(|x| x.canonical())
    }
}

fn check_interval<T: Real>(t0: T, t1: T) -> Result<()> {
    if t1 < t0 {
        return Err(MeanFieldError::InvalidInterval { t0: to_f64(t0), t1: to_f64(t1) });
    }
    Ok(())
}

/// Advances from `t0` to `t1` in `n` equal steps at absolute times `t0 + k·h`.
pub fn advance_mf<T: Real>(
    state0: ClassicalState<T>,
    t0: T,
    t1: T,
    n: usize,
    params: &ModelParams<T>,
) -> Result<ClassicalState<T>> {
    check_interval(t0, t1)?;
    let mut s = state0.canonical();
    if n == 0 || t1 == t0 {
        return Ok(s);
    }
    let h = (t1 - t0) / count(n);
    for k in 0..n {
        s = mf_step(s, t0 + h * count(k), h, params)?;
    }
    Ok(s)
}

/// Fixed-step RK4 trajectory including both endpoints. The step is shrunk so
/// that it divides `t1 − t0`.
pub fn integrate_mf<T: Real>(
    state0: ClassicalState<T>,
    t0: T,
    t1: T,
    params: &ModelParams<T>,
    step: T,
) -> Result<Vec<(T, ClassicalState<T>)>> {
    if !(step > T::zero()) {
        return Err(MeanFieldError::InvalidStep(to_f64(step)));
    }
    check_interval(t0, t1)?;
    let n = to_f64((t1 - t0) / step).ceil() as usize;
    let mut s = state0.canonical();
    let mut out = Vec::with_capacity(n + 1);
    out.push((t0, s));
    if n == 0 {
        return Ok(out);
    }
    let h = (t1 - t0) / count(n);
    for k in 0..n {
        let t = t0 + h * count(k);
        s = mf_step(s, t, h, params)?;
        out.push((t + h, s));
    }
    Ok(out)
}

/// Cartesian-only integration (no angle form), used as a cross-check. Each
/// step is followed by a radial projection back onto `|s| = ½`.
pub fn integrate_cartesian<T: Real>(s0: [T; 3], t0: T, t1: T, n: usize, params: &ModelParams<T>) -> [T; 3] {
    let mut s = s0;
    if n == 0 {
        return s;
    }
    let h = (t1 - t0) / count(n);
    let half: T = lit(0.5);
    for k in 0..n {
        s = rk4_cartesian(s, t0 + h * count(k), h, params);
        let r = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        if r > T::zero() {
            let c = half / r;
            s = [s[0] * c, s[1] * c, s[2] * c];
        }
    }
    s
}

/// Stroboscopic values after a transient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StroboscopicRecord {
    /// U·N of the run.
    pub un: f64,
    /// `½ cos ϑ` at `t = mT`, `m = m_transient + 1 ..= m_transient + m_record`.
    pub samples: Vec<f64>,
    /// Sphere points at the same times.
    pub points: Vec<ClassicalState<f64>>,
    pub initial_condition: ClassicalState<f64>,
}

/// Runs `m_transient` periods, then records `m_record` period boundaries.
pub fn stroboscopic_map<T: Real>(
    state0: ClassicalState<T>,
    params: &ModelParams<T>,
    m_transient: usize,
    m_record: usize,
) -> Result<StroboscopicRecord> {
    stroboscopic_map_steps(state0, params, m_transient, m_record, DEFAULT_STEPS_PER_PERIOD)
}

pub fn stroboscopic_map_steps<T: Real>(
    state0: ClassicalState<T>,
    params: &ModelParams<T>,
    m_transient: usize,
    m_record: usize,
    steps_per_period: usize,
) -> Result<StroboscopicRecord> {
    if m_transient == 0 {
        return Err(MeanFieldError::InvalidCount("m_transient"));
    }
    if m_record == 0 {
        return Err(MeanFieldError::InvalidCount("m_record"));
    }
    if steps_per_period == 0 {
        return Err(MeanFieldError::InvalidCount("steps_per_period"));
    }
    params.validate()?;
    let period = params.period();
    let mut s = state0.canonical();
    let mut samples = Vec::with_capacity(m_record);
    let mut points = Vec::with_capacity(m_record);
    for m in 0..m_transient + m_record {
        let t0 = period * count(m);
        s = advance_mf(s, t0, t0 + period, steps_per_period, params)?;
        if m + 1 > m_transient {
            samples.push(to_f64(s.sz()));
            points.push(s.to_f64());
        }
    }
    Ok(StroboscopicRecord { un: to_f64(params.un()), samples, points, initial_condition: state0.to_f64() })
}

/// Uniform `n_theta × n_phi` grid over `ϑ ∈ [−π, π]`, `φ ∈ [0, 2π)`, sampled at
/// cell midpoints in ϑ (so no point sits on a pole) and canonicalized.
pub fn default_ic_grid(n_theta: usize, n_phi: usize) -> Vec<ClassicalState<f64>> {
    let pi = std::f64::consts::PI;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for a in 0..n_theta {
        let theta = -pi + (a as f64 + 0.5) * 2.0 * pi / n_theta as f64;
        for b in 0..n_phi {
            let phi = b as f64 * 2.0 * pi / n_phi as f64;
            out.push(ClassicalState::new(theta, phi).canonical());
        }
    }
    out
}

/// Every `(U·N, initial condition)` pair, U-major, each through
/// [`stroboscopic_map`]. Runs in parallel; output order is fixed.
pub fn classical_bifurcation_scan(
    un_grid: &[f64],
    ic_grid: &[ClassicalState<f64>],
    params: &ModelParams<f64>,
    m_transient: usize,
    m_record: usize,
) -> Result<Vec<StroboscopicRecord>> {
    if un_grid.is_empty() {
        return Err(MeanFieldError::EmptyGrid("U"));
    }
    if ic_grid.is_empty() {
        return Err(MeanFieldError::EmptyGrid("initial-condition"));
    }
    let items: Vec<(f64, ClassicalState<f64>)> =
        un_grid.iter().flat_map(|&u| ic_grid.iter().map(move |ic| (u, *ic))).collect();
    items
        .par_iter()
        .map(|(un, ic)| {
            let p = params.with_un(*un)?;
            stroboscopic_map(*ic, &p, m_transient, m_record)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AttractorKind {
    FixedPoint,
    PeriodTwo,
    /// Period `p ∈ {3, 4}`, or `p = 2` visiting fewer than 2 distinct `s_z` values.
    Periodic(usize),
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterReport {
    pub n_clusters: usize,
    /// Cluster means, ascending.
    pub centers: Vec<f64>,
    pub max_diameter: f64,
    /// Smallest gap between neighbouring clusters (infinite for one cluster).
    pub min_separation: f64,
    pub kind: AttractorKind,
}

impl ClusterReport {
    pub fn is_period_two(&self) -> bool {
        self.kind == AttractorKind::PeriodTwo
    }
}

/// Sorted-gap clustering of the record: a new cluster starts wherever two
/// consecutive sorted samples differ by more than `tol_separation`.
pub fn classify_attractor(record: &StroboscopicRecord, tol_diameter: f64, tol_separation: f64) -> Result<ClusterReport> {
    classify_samples(&record.samples, tol_diameter, tol_separation)
}

pub fn classify_samples(samples: &[f64], tol_diameter: f64, tol_separation: f64) -> Result<ClusterReport> {
    if samples.is_empty() {
        return Err(MeanFieldError::EmptyRecord);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
    let mut label = vec![0usize; samples.len()];
    let mut bounds = vec![(samples[order[0]], samples[order[0]])];
    let mut sums = vec![0.0];
    let mut sizes = vec![0usize];
    let mut min_separation = f64::INFINITY;
    for (k, &i) in order.iter().enumerate() {
        let v = samples[i];
        if k > 0 {
            let gap = v - samples[order[k - 1]];
            if gap > tol_separation {
                min_separation = min_separation.min(gap);
                bounds.push((v, v));
                sums.push(0.0);
                sizes.push(0);
            }
        }
        let c = bounds.len() - 1;
        bounds[c].1 = v;
        sums[c] += v;
        sizes[c] += 1;
        label[i] = c;
    }
    let n_clusters = bounds.len();
    let centers: Vec<f64> = sums.iter().zip(&sizes).map(|(s, n)| s / *n as f64).collect();
    let max_diameter = bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);

    let kind = if n_clusters > 4 || max_diameter >= tol_diameter {
        AttractorKind::Unclassified
    } else {
        let period = (1..=4).find(|&p| (p..label.len()).all(|m| label[m] == label[m - p]));
        match (period, n_clusters) {
            (Some(1), 1) => AttractorKind::FixedPoint,
            (Some(2), 2) => AttractorKind::PeriodTwo,
            (Some(p), _) => AttractorKind::Periodic(p),
            (None, _) => AttractorKind::Unclassified,
        }
    };
    Ok(ClusterReport { n_clusters, centers, max_diameter, min_separation, kind })
}

/// The two points of a stroboscopic period-2 orbit, reached from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodTwoOrbit {
    /// `points[0]` is the orbit point closer to the seed.
    pub points: [ClassicalState<f64>; 2],
    pub report: ClusterReport,
}

impl PeriodTwoOrbit {
    pub fn sz(&self) -> [f64; 2] {
        [self.points[0].sz(), self.points[1].sz()]
    }
}

/// Runs the stroboscopic map from `seed` and returns the period-2 orbit it
/// settles on. Fails if the record is not period 2 at tolerances `1e-3` /
/// `1e-1`.
pub fn locate_period_two(
    seed: ClassicalState<f64>,
    params: &ModelParams<f64>,
    m_transient: usize,
) -> Result<PeriodTwoOrbit> {
    let record = stroboscopic_map(seed, params, m_transient, 16)?;
    let report = classify_attractor(&record, 1e-3, 1e-1)?;
    if !report.is_period_two() {
        return Err(MeanFieldError::NoPeriodTwo { theta: seed.theta, phi: seed.phi, kind: report.kind });
    }
    let n = record.points.len();
    let (a, b) = (record.points[n - 2], record.points[n - 1]);
    let seed = seed.canonical();
    let points = if seed.distance(&a) <= seed.distance(&b) { [a, b] } else { [b, a] };
    Ok(PeriodTwoOrbit { points, report })
}

/// CSV with header `U,sample`.
pub fn write_samples_csv<W: Write>(records: &[StroboscopicRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "U,sample")?;
    for r in records {
        for s in &r.samples {
            writeln!(w, "{:.16e},{:.16e}", r.un, s)?;
        }
    }
    Ok(())
}

/// CSV with header `U,n_clusters,center_1,center_2,max_diameter`. Missing
/// centers are left empty.
pub fn write_clusters_csv<W: Write>(rows: &[(f64, ClusterReport)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "U,n_clusters,center_1,center_2,max_diameter")?;
    for (un, r) in rows {
        let c = |k: usize| r.centers.get(k).map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(w, "{un:.16e},{},{},{},{:.16e}", r.n_clusters, c(0), c(1), r.max_diameter)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn params(j: f64, un: f64, mu0: f64, mu1: f64, gn: f64) -> ModelParams<f64> {
        ModelParams::from_composite(10, j, un, mu0, mu1, 1.0, gn).unwrap()
    }

    #[test]
    fn hand_evaluated_rhs() {
        let p = params(1.0, 0.2, 1.0, 0.0, 0.1);
        let (td, pd) = mf_rhs(&ClassicalState::new(FRAC_PI_2, FRAC_PI_2), 0.0, &p).unwrap();
        assert_abs_diff_eq!(td, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pd, -2.4, epsilon = 1e-14);
    }

    #[test]
    fn rhs_special_cases() {
        // J → 0 is not a valid parameter; J = 1e-300 makes its terms vanish.
        let p = params(1e-300, 0.0, 0.7, 1.1, 0.0);
        let t = 0.4;
        let (td, pd) = mf_rhs(&ClassicalState::new(1.1, 2.3), t, &p).unwrap();
        assert!(td.abs() < 1e-290);
        assert_abs_diff_eq!(pd, -2.0 * drive_eps(t, &p), epsilon = 1e-14);
        let p = params(1.0, 0.3, 1.0, 3.4, 0.0);
        assert_eq!(mf_rhs(&ClassicalState::new(0.8, 0.0), 1.0, &p).unwrap().0, 0.0);
        assert!(matches!(mf_rhs(&ClassicalState::new(0.0, 0.0), 0.0, &p), Err(MeanFieldError::Pole { .. })));
    }

    #[test]
    fn cartesian_form_is_the_chain_rule_of_the_angle_form() {
        let p = ModelParams::<f64>::reference(20);
        for (k, (th, ph)) in [(0.4, 0.3), (1.3, -2.0), (2.7, 4.0), (2.0, -3.0)].into_iter().enumerate() {
            let s = ClassicalState::new(th, ph);
            let t = 0.37 * k as f64;
            let (td, pd) = mf_rhs(&s, t, &p).unwrap();
            let c = cartesian_rhs(&s.to_cartesian(), t, &p);
            let expected = [
                0.5 * (-ph.sin() * th.sin() * pd + ph.cos() * th.cos() * td),
                0.5 * (ph.cos() * th.sin() * pd + ph.sin() * th.cos() * td),
                -0.5 * th.sin() * td,
            ];
            for i in 0..3 {
                assert_abs_diff_eq!(c[i], expected[i], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn canonicalization() {
        let s = ClassicalState::new(-1.0, 0.5).canonical();
        assert_abs_diff_eq!(s.theta, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.phi, 0.5 + PI, epsilon = 1e-15);
        let s = ClassicalState::new(2.0 + TAU, -3.0).canonical();
        assert_abs_diff_eq!(s.theta, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi, TAU - 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ClassicalState::new(-1.0, 0.5).sz(), ClassicalState::new(-1.0, 0.5).canonical().sz());
        let back = ClassicalState::from_cartesian(ClassicalState::new(2.0, 4.0).to_cartesian());
        assert_abs_diff_eq!(back.theta, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(back.phi, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn free_precession_closed_form() {
        let (mu0, phi0, theta0) = (0.8, 0.3, 1.2);
        let p = params(1e-300, 0.0, mu0, 0.0, 0.0);
        let traj = integrate_mf(ClassicalState::new(theta0, phi0), 0.0, 5.0, &p, 0.01).unwrap();
        for (t, s) in traj {
            assert_abs_diff_eq!(s.theta, theta0, epsilon = 1e-9);
            let expected = ClassicalState::new(theta0, phi0 - 2.0 * mu0 * t).canonical().phi;
            let d = (s.phi - expected).rem_euclid(TAU);
            assert!(d.min(TAU - d) < 1e-9, "t={t}");
        }
    }

    #[test]
    fn step_halving_converges() {
        let p = ModelParams::<f64>::reference(10);
        let period = p.period();
        let s0 = ClassicalState::new(2.0, -3.0);
        let coarse = advance_mf(s0, 0.0, 10.0 * period, 10 * 2000, &p).unwrap();
        let fine = advance_mf(s0, 0.0, 10.0 * period, 10 * 4000, &p).unwrap();
        assert!(coarse.distance(&fine) < 1e-8);
    }

    #[test]
    fn angle_and_cartesian_forms_agree() {
        // The Cartesian form carries a larger RK4 error constant, so both are
        // run at a step where each is converged well below the tolerance.
        let p = ModelParams::<f64>::reference(10);
        let period = p.period();
        let s0 = ClassicalState::new(2.0, -3.0);
        let a = advance_mf(s0, 0.0, period, 8000, &p).unwrap();
        let c = integrate_cartesian(s0.to_cartesian(), 0.0, period, 8000, &p);
        let radius = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        assert!((radius - 0.5).abs() < 1e-9);
        assert!(a.distance(&ClassicalState::from_cartesian(c)) < 1e-8);
    }

    #[test]
    fn trajectory_through_pole_matches_cartesian() {
        // Starts next to the north pole, crosses the switch region.
        let p = ModelParams::<f64>::reference(10);
        let s0 = ClassicalState::new(0.02, 1.0);
        let a = advance_mf(s0, 0.0, 3.0 * p.period(), 24000, &p).unwrap();
        let c = integrate_cartesian(s0.to_cartesian(), 0.0, 3.0 * p.period(), 24000, &p);
        assert!(a.distance(&ClassicalState::from_cartesian(c)) < 3e-8);
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let p = ModelParams::<f64>::reference(4);
        let s = ClassicalState::new(1.0, 1.0);
        assert!(matches!(integrate_mf(s, 0.0, 1.0, &p, 0.0), Err(MeanFieldError::InvalidStep(_))));
        assert!(matches!(integrate_mf(s, 1.0, 0.0, &p, 0.1), Err(MeanFieldError::InvalidInterval { .. })));
        assert_eq!(integrate_mf(s, 1.0, 1.0, &p, 0.1).unwrap().len(), 1);
        assert!(stroboscopic_map(s, &p, 0, 5).is_err());
        assert!(stroboscopic_map(s, &p, 5, 0).is_err());
    }

    #[test]
    fn classifier_synthetic_inputs() {
        let r = classify_samples(&[0.1; 20], 1e-3, 1e-1).unwrap();
        assert_eq!((r.n_clusters, r.max_diameter, r.kind), (1, 0.0, AttractorKind::FixedPoint));
        let alt: Vec<f64> = (0..20).map(|m| if m % 2 == 0 { 0.03 } else { -0.29 }).collect();
        let r = classify_samples(&alt, 1e-3, 1e-1).unwrap();
        assert_eq!(r.kind, AttractorKind::PeriodTwo);
        assert_eq!(r.n_clusters, 2);
        assert_abs_diff_eq!(r.centers[0], -0.29);
        // Two values but not alternating: aabb repeats with period 4.
        let p4: Vec<f64> = (0..20).map(|m| if m % 4 < 2 { 0.2 } else { -0.2 }).collect();
        assert_eq!(classify_samples(&p4, 1e-3, 1e-1).unwrap().kind, AttractorKind::Periodic(4));
        let broad: Vec<f64> = (0..50).map(|m| ((m * 37) % 50) as f64 / 100.0).collect();
        let r = classify_samples(&broad, 1e-3, 1e-3).unwrap();
        assert_eq!(r.kind, AttractorKind::Unclassified);
        assert!(r.n_clusters > 4);
        assert!(classify_samples(&[], 1e-3, 1e-1).is_err());
    }

    #[test]
    fn scan_is_ordered_and_deterministic() {
        let p = ModelParams::<f64>::reference(10);
        let ics = vec![ClassicalState::new(2.0, -3.0), ClassicalState::new(2.0, -3.0), ClassicalState::new(1.0, 1.0)];
        let recs = classical_bifurcation_scan(&[0.0, 0.2], &ics, &p, 5, 4).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(recs[0], recs[1]);
        assert_eq!(recs[0].un, 0.0);
        assert_eq!(recs[3].un, 0.2);
        let single = stroboscopic_map(ics[2], &p.with_un(0.2).unwrap(), 5, 4).unwrap();
        assert_eq!(recs[5], single);
        assert!(classical_bifurcation_scan(&[], &ics, &p, 5, 4).is_err());
        let mut buf = Vec::new();
        write_samples_csv(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 6 * 4);
    }

    #[test]
    fn default_grid_avoids_poles() {
        let g = default_ic_grid(16, 16);
        assert_eq!(g.len(), 256);
        assert!(g.iter().all(|s| s.theta > 0.0 && s.theta < PI && s.phi >= 0.0 && s.phi < TAU));
    }

    #[test]
    fn single_precision_rhs() {
        let p = ModelParams::<f32>::reference(10);
        let (td, pd) = mf_rhs(&ClassicalState::new(2.0f32, -3.0), 0.3, &p).unwrap();
        let (td64, pd64) = mf_rhs(&ClassicalState::new(2.0, -3.0), 0.3, &ModelParams::<f64>::reference(10)).unwrap();
        assert!((td as f64 - td64).abs() < 1e-5 && (pd as f64 - pd64).abs() < 1e-5);
    }
}
