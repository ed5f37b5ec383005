//! Property-based checks of the numerical kernels and the structural
//! identities the library is built on.

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;
use netlab::energy::{target_control_energy, target_observation_energy};
use netlab::gramian::{duality_report, finite_horizon_gramians, Horizon};
use netlab::numkernel::{
    expm, integrate_lti, orth_basis, parse_matrix, rank_tol, render_matrix, SeededRng,
    ToleranceConfig,
};

fn cfg() -> ToleranceConfig {
    ToleranceConfig::default()
}

/// Square matrix strategy with bounded entries so the exponential stays
/// well scaled.
fn square_matrix(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(-2.0..2.0f64, n * n)
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn expm_semigroup(a in square_matrix(5), s in 0.05..1.0f64, t in 0.05..1.0f64) {
        let whole = expm(&a, s + t).unwrap();
        let split = expm(&a, s).unwrap() * expm(&a, t).unwrap();
        let scale = whole.norm().max(1.0);
        prop_assert!((whole - split).norm() <= 1e-8 * scale);
    }

    #[test]
    fn expm_inverse(a in square_matrix(4), t in 0.05..1.0f64) {
        let forward = expm(&a, t).unwrap();
        let backward = expm(&a, -t).unwrap();
        let n = a.nrows();
        prop_assert!((forward * backward - DMatrix::identity(n, n)).norm() <= 1e-8);
    }

    #[test]
    fn free_response_matches_exponential(a in square_matrix(4), seed in 0u64..1000) {
        let n = a.nrows();
        let mut rng = SeededRng::new(seed);
        let x0 = random_vector(n, &mut rng);
        let b = DMatrix::zeros(n, 1);
        let traj = integrate_lti(&a, &b, |_| DVector::zeros(1), &x0, 1.0, 1e-3).unwrap();
        let exact = expm(&a, 1.0).unwrap() * &x0;
        prop_assert!((traj.final_state() - &exact).norm() <= 1e-6 * (1.0 + exact.norm()));
    }

    #[test]
    fn rank_is_orthogonally_invariant(m in square_matrix(5), seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let q = random_orthogonal(m.nrows(), &mut rng);
        prop_assert_eq!(rank_tol(&m, &cfg()).unwrap(), rank_tol(&(&q * &m), &cfg()).unwrap());
    }

    #[test]
    fn orth_basis_spans_and_is_orthonormal(m in square_matrix(5)) {
        let basis = orth_basis(&m, &cfg()).unwrap();
        let k = basis.ncols();
        prop_assert_eq!(k, rank_tol(&m, &cfg()).unwrap());
        prop_assert!((basis.transpose() * &basis - DMatrix::identity(k, k)).norm() <= 1e-10);
        // Every column of m lies in the span of the basis.
        let residual = (&m - &basis * basis.transpose() * &m).norm();
        prop_assert!(residual <= 1e-8 * m.norm().max(1.0));
    }

    #[test]
    fn matrix_text_roundtrip(m in square_matrix(5)) {
        let parsed = parse_matrix(&render_matrix(&m)).unwrap();
        prop_assert_eq!(parsed, m);
    }
}

/// Transposing the system swaps the two Gramians exactly.
#[test]
fn gramians_of_the_transposed_system_swap() {
    let mut rng = SeededRng::new(7);
    for trial in 0..20 {
        let n = 3 + trial % 5;
        let a = random_hurwitz(n, 0.4, &mut rng);
        let b = random_matrix(n, 2, &mut rng);
        let c = random_matrix(2, n, &mut rng);
        let (w_c, w_o) = finite_horizon_gramians(&a, &b, &c, 2.0, 64).unwrap();
        let (w_c_dual, w_o_dual) =
            finite_horizon_gramians(&a.transpose(), &c.transpose(), &b.transpose(), 2.0, 64).unwrap();
        let scale = w_c.norm().max(w_o.norm()).max(1.0);
        assert!((&w_c - &w_o_dual).norm() <= 1e-10 * scale, "trial {trial}");
        assert!((&w_o - &w_c_dual).norm() <= 1e-10 * scale, "trial {trial}");
    }
}

/// Adding actuators can only cheapen the worst-case steering cost.
#[test]
fn control_energy_is_monotone_in_the_actuator_set() {
    let mut rng = SeededRng::new(8);
    for trial in 0..20 {
        let n = 4 + trial % 5;
        let a = random_hurwitz(n, 0.4, &mut rng);
        let b1 = random_matrix(n, 2, &mut rng);
        let extra = random_matrix(n, 1, &mut rng);
        let mut b2 = DMatrix::zeros(n, 3);
        b2.view_mut((0, 0), (n, 2)).copy_from(&b1);
        b2.view_mut((0, 2), (n, 1)).copy_from(&extra);
        let f = random_matrix(2, n, &mut rng);
        let c = DMatrix::identity(n, n);
        let (w1, _) = finite_horizon_gramians(&a, &b1, &c, 2.0, 64).unwrap();
        let (w2, _) = finite_horizon_gramians(&a, &b2, &c, 2.0, 64).unwrap();
        let e1 = target_control_energy(&w1, &f, &cfg()).unwrap();
        let e2 = target_control_energy(&w2, &f, &cfg()).unwrap();
        assert!(
            e2 <= e1 * (1.0 + 1e-10),
            "trial {trial}: energy rose from {e1} to {e2} after adding an actuator"
        );
    }
}

/// Scaling the target map by `alpha` scales both worst-case energies by
/// `1/alpha^2`: a unit target deviation corresponds to a state smaller
/// by `1/alpha`.
#[test]
fn energies_scale_quadratically_with_the_target_map() {
    let mut rng = SeededRng::new(9);
    for trial in 0..20 {
        let n = 4 + trial % 4;
        let alpha = 0.5 + 0.25 * (trial as f64);
        let a = random_hurwitz(n, 0.4, &mut rng);
        let b = random_matrix(n, 2, &mut rng);
        let c = random_matrix(2, n, &mut rng);
        let f = random_matrix(2, n, &mut rng);
        let (w_c, w_o) = finite_horizon_gramians(&a, &b, &c, 2.0, 64).unwrap();
        let e_tc = target_control_energy(&w_c, &f, &cfg()).unwrap();
        let e_tc_scaled = target_control_energy(&w_c, &(&f * alpha), &cfg()).unwrap();
        assert!(
            (e_tc_scaled * alpha * alpha / e_tc - 1.0).abs() <= 1e-6,
            "trial {trial}: control energy scaling violated"
        );
        if let (Ok((e_to, _)), Ok((e_to_scaled, _))) = (
            target_observation_energy(&w_o, &f, &cfg()),
            target_observation_energy(&w_o, &(&f * alpha), &cfg()),
        ) {
            assert!(
                (e_to_scaled * alpha * alpha / e_to - 1.0).abs() <= 1e-6,
                "trial {trial}: observation energy scaling violated"
            );
        }
    }
}

/// The duality gap is invariant under orthogonal re-coordinatization of
/// the target rows.
#[test]
fn duality_gap_is_invariant_under_target_row_rotation() {
    let mut rng = SeededRng::new(10);
    for trial in 0..20 {
        let n = 4 + trial % 4;
        let a = random_hurwitz(n, 0.4, &mut rng);
        let c = random_matrix(1, n, &mut rng);
        let f = random_matrix(2, n, &mut rng);
        let q = random_orthogonal(2, &mut rng);
        let before = duality_report(&c, &a, &f, Horizon::Finite(3.0), &cfg()).unwrap();
        let after = duality_report(&c, &a, &(&q * &f), Horizon::Finite(3.0), &cfg()).unwrap();
        assert_eq!(before.gap, after.gap, "trial {trial}");
        assert_eq!(before.strong, after.strong, "trial {trial}");
    }
}

/// Pole placement on the design plant tracks arbitrary stable requests
/// and leaves the untouchable pair at -3 alone.
#[test]
fn placement_tracks_random_stable_requests() {
    use nalgebra::Complex;
    use netlab::target_control::place_target_poles;
    let mut rng = SeededRng::new(11);
    for trial in 0..10 {
        let shift = 0.3 * (trial as f64);
        let desired: Vec<Complex<f64>> = [-2.5, -4.0, -6.5]
            .iter()
            .map(|&x| Complex::new(x - shift, 0.0))
            .collect();
        let design = place_target_poles(&design_a(), &design_b(), &design_f(), &desired, &cfg()).unwrap();
        let mut expected = desired.clone();
        expected.push(Complex::new(-3.0, 0.0));
        expected.push(Complex::new(-3.0, 0.0));
        let dist = spectrum_distance(&design.achieved_spectrum, &expected);
        assert!(dist <= 1e-6, "trial {trial}: spectrum off by {dist:.2e}");
        let _ = &mut rng;
    }
}
