use kerrflow::hilbert::{liouvillian, FockSpace};
use kerrflow::model::{to_physical, to_scaled};
use kerrflow::semiclassics::{fixed_points, gpe_rhs, FpClass};
use kerrflow::spectra::lag_correlator;
use kerrflow::trajectories::TrajectoryRecord;
use kerrflow::{ModelParams, ScaledParams};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (-3.0..8.0f64, 0.05..3.0f64, 0.0..1.5f64, 0.0..3.0f64, 0.0..6.28f64, 0.01..1.0f64)
        .prop_map(|(d, u, g, f, phi, k)| ModelParams::new(d, u, g, f, phi, k).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scaling_round_trip(p in params(), aleph in 0.1..100.0f64) {
        let q = to_physical(&to_scaled(&p, aleph).unwrap()).unwrap();
        for (a, b) in [(p.delta, q.delta), (p.u, q.u), (p.g, q.g), (p.f, q.f), (p.phi, q.phi), (p.kappa, q.kappa)] {
            prop_assert!(close(a, b, 1e-12), "{p:?} -> {q:?}");
        }
    }

    #[test]
    fn mean_field_flow_is_aleph_invariant(
        d in -3.0..8.0f64, u in 0.1..3.0f64, g in 0.0..1.0f64, f in 0.0..3.0f64,
        aleph in 0.5..50.0f64, x in -3.0..3.0f64, y in -3.0..3.0f64,
    ) {
        let s = ScaledParams { tilde_u: u, tilde_f: f, aleph, delta: d, g, phi: 0.3, kappa: 0.1 };
        let b = C64::new(x, y);
        let lhs = gpe_rhs(b * aleph.sqrt(), &s.to_physical().unwrap()) / aleph.sqrt();
        let rhs = gpe_rhs(b, &s.classical().unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
    }

    #[test]
    fn poincare_index_is_one(p in params()) {
        let fps = fixed_points(&p).unwrap();
        prop_assume!(fps.iter().all(|f| f.fp_class != FpClass::MarginalOrDegenerate));
        let attractors = fps.iter().filter(|f| f.is_attractor()).count() as i64;
        let saddles = fps.iter().filter(|f| f.is_saddle()).count() as i64;
        prop_assert_eq!(attractors - saddles, 1);
        // no repellors in a uniformly damped planar flow
        prop_assert_eq!(attractors + saddles, fps.len() as i64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_preserves_trace_and_hermiticity(
        p in params(),
        n in 2usize..9,
        seed in proptest::collection::vec(-1.0..1.0f64, 2 * 81),
    ) {
        let l = liouvillian(&p, FockSpace::new(n).unwrap());
        let a = Array2::from_shape_fn((n, n), |(i, j)| C64::new(seed[i * 9 + j], seed[81 + i * 9 + j]));
        let rho = &a + &a.t().mapv(|z| z.conj());
        let out = l.apply(&rho);
        let tr: C64 = out.diag().sum();
        let scale = out.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
        prop_assert!(tr.norm() <= 1e-12 * scale);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((out[(i, j)] - out[(j, i)].conj()).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn zero_lag_correlator_vanishes(xs in proptest::collection::vec(-5.0..5.0f64, 40..200), shift in 0usize..40) {
        let m = xs.len();
        let ys: Vec<f64> = (0..m).map(|k| xs[(k + shift) % m] * 0.7 - 0.2).collect();
        let rec = TrajectoryRecord {
            seed: 0,
            dt_s: 0.1,
            times: (0..m).map(|k| k as f64 * 0.1).collect(),
            x: xs,
            y: ys,
            n: vec![],
            b2: vec![],
            jump_times: vec![],
            final_norm_check: 1.0,
        };
        let g = lag_correlator(&rec, 0.0, 1.0).unwrap();
        prop_assert_eq!(g[0], 0.0);
    }
}
