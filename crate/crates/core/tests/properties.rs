mod common;

use approx::assert_abs_diff_eq;
use dimer_floquet::linalg::{self, trace};
use dimer_floquet::meanfield::{advance_mf, classify_samples, integrate_cartesian, AttractorKind, ClassicalState};
use dimer_floquet::model::{build_operators, ModelParams, OpKind};
use dimer_floquet::phase_space::{alternation_length, coherent_state, husimi};
use dimer_floquet::propagation::{
    apply_liouvillian, build_floquet_map, read_cache, write_cache, DensityMatrix, PropagationContext, StepControl,
};
use dimer_floquet::runner::config::{apply_override, RangeConfig};
use dimer_floquet::runner::RunConfig;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn arb_params(max_n: usize) -> impl Strategy<Value = ModelParams<f64>> {
    (1..=max_n, 0.2..2.0f64, -1.0..1.0f64, -2.0..2.0f64, 0.0..4.0f64, 0.3..3.0f64, 0.0..0.5f64).prop_map(
        |(n, j, un, mu0, mu1, omega, gn)| ModelParams::from_composite(n, j, un, mu0, mu1, omega, gn).unwrap(),
    )
}

/// The region covered by the classical scans: J = 1, ω on the calibration grid.
fn arb_scan_params() -> impl Strategy<Value = ModelParams<f64>> {
    (0.0..0.5f64, 0.0..2.0f64, 0.0..3.4f64, 0.5..5.0f64, 0.0..0.2f64).prop_map(|(un, mu0, mu1, omega, gn)| {
        ModelParams::from_composite(1, 1.0, un, mu0, mu1, omega, gn).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_annihilates_trace(p in arb_params(12), seed in any::<u64>(), t in 0.0..20.0f64) {
        let ops = build_operators(&p).unwrap();
        let rho = common::random_hermitian(p.dim(), &mut StdRng::seed_from_u64(seed));
        let l = apply_liouvillian(&rho, t, &ops, &p).unwrap();
        prop_assert!(trace(&l).norm() < 1e-12);
    }

    #[test]
    fn generator_is_linear_and_hermiticity_preserving(p in arb_params(8), seed in any::<u64>(), t in 0.0..20.0f64,
                                                      a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let ops = build_operators(&p).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let x = common::random_density(p.dim(), &mut rng);
        let y = common::random_hermitian(p.dim(), &mut rng);
        let (ca, cb) = (Complex64::new(a, 0.3), Complex64::new(b, -0.7));
        let combo = x.mapv(|z| z * ca) + y.mapv(|z| z * cb);
        let lhs = apply_liouvillian(&combo, t, &ops, &p).unwrap();
        let rhs = apply_liouvillian(&x, t, &ops, &p).unwrap().mapv(|z| z * ca)
            + apply_liouvillian(&y, t, &ops, &p).unwrap().mapv(|z| z * cb);
        let scale = 1.0 + linalg::max_abs(&lhs);
        prop_assert!(linalg::max_abs_diff(&lhs, &rhs) < 1e-12 * scale);
        let ly = apply_liouvillian(&y, t, &ops, &p).unwrap();
        prop_assert!(linalg::hermiticity_defect(&ly) < 1e-12 * (1.0 + linalg::max_abs(&ly)));
    }

    #[test]
    fn spin_operators_close_the_algebra(n in 1usize..=30) {
        let ops = build_operators(&ModelParams::<f64>::reference(n)).unwrap();
        let m = |k| ops.dense(k).entries;
        let (sx, sy, sz) = (m(OpKind::Sx), m(OpKind::Sy), m(OpKind::Sz));
        let i_over_n = Complex64::new(0.0, 1.0 / n as f64);
        let comm = |a: &ndarray::Array2<Complex64>, b: &ndarray::Array2<Complex64>| {
            linalg::matmul(a, b) - linalg::matmul(b, a)
        };
        for (a, b, c) in [(&sx, &sy, &sz), (&sy, &sz, &sx), (&sz, &sx, &sy)] {
            let defect = linalg::max_abs_diff(&comm(a, b), &c.mapv(|z| z * i_over_n));
            prop_assert!(defect < 1e-12);
        }
        for k in [OpKind::Hop, OpKind::Interaction, OpKind::Tilt, OpKind::Sx, OpKind::Sy, OpKind::Sz] {
            prop_assert!(ops.dense(k).hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn floquet_map_preserves_trace(p in arb_params(3)) {
        let ctx = PropagationContext::new(p, StepControl::with_steps(400)).unwrap();
        let map = build_floquet_map(&ctx).unwrap();
        prop_assert!(map.trace_preservation_defect() < 1e-10);
    }

    #[test]
    fn cache_round_trip_is_bit_exact(p in arb_params(3)) {
        let ctx = PropagationContext::new(p, StepControl::with_steps(100)).unwrap();
        let map = build_floquet_map(&ctx).unwrap();
        let mut bytes = Vec::new();
        write_cache(&map, &mut bytes).unwrap();
        let back = read_cache(bytes.as_slice(), Some((&p, &ctx.step))).unwrap();
        prop_assert_eq!(back.fingerprint, map.fingerprint);
        for (a, b) in back.entries.iter().zip(map.entries.iter()) {
            prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
            prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn mean_field_conserves_spin_length(theta in 0.05..3.09f64, phi in 0.0..6.28f64, p in arb_scan_params()) {
        let s0 = ClassicalState::new(theta, phi).to_cartesian();
        let s = integrate_cartesian(s0, 0.0, p.period(), 2000, &p);
        let r2 = s.iter().map(|x| x * x).sum::<f64>();
        prop_assert!((r2 - 0.25).abs() < 1e-9, "drift {:e}", r2 - 0.25);
    }

    #[test]
    fn canonicalization_reflects_and_preserves_sz(theta in -9.0..9.0f64, phi in -9.0..9.0f64) {
        let s = ClassicalState::new(theta, phi);
        let c = s.canonical();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&c.theta));
        prop_assert!((0.0..std::f64::consts::TAU).contains(&c.phi));
        prop_assert!((c.sz() - s.sz()).abs() < 1e-12);
        prop_assert!(c.distance(&ClassicalState::new(-theta, phi + std::f64::consts::PI).canonical()) < 1e-9);
        prop_assert!(c.canonical().distance(&c) < 1e-12);
    }

    #[test]
    fn angle_step_is_time_translation_consistent(theta in 0.3..2.8f64, phi in 0.0..6.28f64, p in arb_params(1)) {
        let s0 = ClassicalState::new(theta, phi);
        let half = 0.5 * p.period();
        let direct = advance_mf(s0, 0.0, p.period(), 2000, &p).unwrap();
        let split = advance_mf(advance_mf(s0, 0.0, half, 1000, &p).unwrap(), half, p.period(), 1000, &p).unwrap();
        prop_assert!(direct.distance(&split) < 1e-12);
    }

    #[test]
    fn coherent_state_is_normalized_with_bloch_expectations(n in 1usize..=200, theta in 0.0..3.14f64, phi in 0.0..6.28f64) {
        let cs = coherent_state(theta, phi, n).unwrap();
        let norm: f64 = cs.amplitudes.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        if n <= 60 {
            let rho: DensityMatrix<f64> = cs.density().unwrap();
            let ops = build_operators(&ModelParams::<f64>::reference(n)).unwrap();
            let ex = |k| rho.expectation(ops.band(k)).re;
            prop_assert!((ex(OpKind::Sx) - 0.5 * phi.cos() * theta.sin()).abs() < 1e-10);
            prop_assert!((ex(OpKind::Sy) - 0.5 * phi.sin() * theta.sin()).abs() < 1e-10);
            prop_assert!((ex(OpKind::Sz) - 0.5 * theta.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn husimi_is_non_negative(n in 1usize..=12, seed in any::<u64>()) {
        let basis = dimer_floquet::build_basis(n).unwrap();
        let rho = DensityMatrix::new(basis, common::random_density(n + 1, &mut StdRng::seed_from_u64(seed))).unwrap();
        let q = husimi(&rho, (19, 24)).unwrap();
        prop_assert!(q.min() > -1e-10);
    }

    #[test]
    fn alternation_length_is_bounded(series in prop::collection::vec(-0.5..0.5f64, 0..40)) {
        let len = alternation_length(&series);
        prop_assert!(len <= series.len().saturating_sub(1));
    }

    #[test]
    fn two_valued_records_are_period_two(a in -0.5..0.0f64, gap in 0.15..0.5f64, len in 4usize..50) {
        let b = (a + gap).min(0.5);
        prop_assume!(b - a > 0.11);
        let samples: Vec<f64> = (0..len).map(|k| if k % 2 == 0 { a } else { b }).collect();
        let report = classify_samples(&samples, 1e-3, 1e-1).unwrap();
        prop_assert_eq!(report.kind, AttractorKind::PeriodTwo);
        prop_assert_eq!(report.n_clusters, 2);
    }

    #[test]
    fn range_values_stay_inside(start in -2.0..2.0f64, len in 0.0..3.0f64, step in 0.01..0.5f64) {
        let r = RangeConfig { start, stop: start + len, step };
        let v = r.values();
        prop_assert!(!v.is_empty());
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(v.iter().all(|x| *x >= start - 1e-12 && *x <= start + len + 1e-9));
    }

    #[test]
    fn overrides_reach_the_config(un in -1.0..1.0f64, n in 1usize..40) {
        let mut value = serde_json::to_value(RunConfig::default()).unwrap();
        apply_override(&mut value, &format!("model.un={un}")).unwrap();
        apply_override(&mut value, &format!("model.n={n}")).unwrap();
        let cfg: RunConfig = serde_json::from_value(value).unwrap();
        prop_assert_eq!(cfg.model.un, un);
        prop_assert_eq!(cfg.model.n, n);
        let p = cfg.params().unwrap();
        assert_abs_diff_eq!(p.un(), un, epsilon = 1e-12);
    }
}
