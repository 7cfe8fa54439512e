use std::f64::consts::{FRAC_PI_2, PI, TAU};

use proptest::prelude::*;

use secular3bp::averaging::{double_average, QuadratureGrid};
use secular3bp::dynamics::{linearized_normal_flow, PlanarState, PlanarSystem};
use secular3bp::elements::{
    circular_distance, shell_p3q3, solve_kepler, DelaunayState, Normalization, OrbitalElements, PoincareState,
};
use secular3bp::secular::{
    coeffs_apsidal, coeffs_small_inclination_amended, det_general, parts_apsidal, parts_general, rbar_series,
    rbar_series_de, stability_verdict, QuadraticForm2, Regime, SecularParams,
};

fn params() -> impl Strategy<Value = SecularParams> {
    (1e-3..0.1f64, 0.0..0.6f64, 1e-3..0.9f64, 0.0..TAU, 1e-3..FRAC_PI_2 - 1e-3)
        .prop_map(|(a, e_j, e, theta, inc)| SecularParams::new(a, e, e_j, theta, inc).unwrap())
}

fn positive_definite_form() -> impl Strategy<Value = QuadraticForm2> {
    (1e-3..1.0f64, 1e-3..1.0f64, -0.99..0.99f64).prop_map(|(a, c, r)| {
        QuadraticForm2::new(a, r * (a * c).sqrt(), c, Regime::General, Normalization::Paper)
    })
}

proptest! {
    #[test]
    fn kepler_residual(l in -10.0..10.0f64, e in 0.0..0.99f64) {
        let big_e = solve_kepler(l, e).unwrap();
        let r = big_e - e * big_e.sin() - l;
        prop_assert!((r - TAU * (r / TAU).round()).abs() < 1e-12);
    }

    #[test]
    fn poincare_round_trip(
        a in 0.01..1.0f64,
        e in 0.01..0.9f64,
        inc in 0.01..3.1f64,
        omega in 0.0..TAU,
        node in 0.0..TAU,
        l in 0.0..TAU,
    ) {
        let el = OrbitalElements::new(a, e, inc, omega, node, l).unwrap();
        let d = DelaunayState::from_elements(&el).unwrap();
        let back = PoincareState::from_delaunay(&d).unwrap().to_delaunay().to_elements().unwrap();
        prop_assert!((back.a - a).abs() < 1e-12);
        prop_assert!((back.e - e).abs() < 1e-9);
        prop_assert!((back.inc - inc).abs() < 1e-7);
        prop_assert!(circular_distance(back.omega, omega) < 1e-9);
        prop_assert!(circular_distance(back.node, node) < 1e-9);
        prop_assert!(circular_distance(back.mean_anomaly, l) < 1e-9);
    }

    #[test]
    fn average_is_linear(e in 0.0..0.9f64, e_j in 0.0..0.6f64, alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let grid = QuadratureGrid::square(16).unwrap();
        let f = |x: &secular3bp::averaging::AnomalyNode, y: &secular3bp::averaging::AnomalyNode| x.cos * y.sin + 1.0;
        let g = |x: &secular3bp::averaging::AnomalyNode, y: &secular3bp::averaging::AnomalyNode| (x.angle + y.cos).sin();
        let lhs = double_average(|x, y| alpha * f(x, y) + beta * g(x, y), e, e_j, grid).unwrap().value;
        let rhs = alpha * double_average(f, e, e_j, grid).unwrap().value
            + beta * double_average(g, e, e_j, grid).unwrap().value;
        prop_assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn general_reduces_to_apsidal(p in params()) {
        let p = p.with_theta(0.0);
        let ap = parts_apsidal(&p).unwrap();
        let (g, a) = (parts_general(&p).unwrap().combine(), ap.combine());
        let scale = ap.term_scale();
        prop_assert!((g.abar - a.abar).abs() <= 1e-14 * scale[0]);
        prop_assert!((g.cbar - a.cbar).abs() <= 1e-14 * scale[2]);
        prop_assert!(g.bbar.abs() <= 1e-14 * scale[0].max(scale[2]));
    }

    #[test]
    fn apsidal_has_no_cross_term(p in params()) {
        prop_assert_eq!(coeffs_apsidal(&p).unwrap().bbar, 0.0);
    }

    #[test]
    fn verdict_is_sylvester(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64) {
        let v = stability_verdict(&QuadraticForm2::new(a, b, c, Regime::General, Normalization::Paper));
        prop_assert_eq!(v.positive_definite, a > 0.0 && a * c - b * b > 0.0);
        prop_assert_eq!(v.a_positive, a > 0.0);
        prop_assert_eq!(v.c_positive, c > 0.0);
        if v.positive_definite {
            prop_assert!(v.c_positive);
        }
    }

    #[test]
    fn shell_value_independent_of_normalization(
        qf in positive_definite_form(),
        inc in 0.01..1.5f64,
        node in 0.0..TAU,
        big_g in 0.05..1.0f64,
    ) {
        let (x, y) = shell_p3q3(inc, node, big_g, Normalization::Paper).unwrap();
        let (u, v) = shell_p3q3(inc, node, big_g, Normalization::Delaunay).unwrap();
        let w = qf.value(x, y);
        let w2 = qf.rescaled(Normalization::Delaunay).value(u, v);
        prop_assert!((w - w2).abs() <= 1e-13 * w.abs());
    }

    #[test]
    fn leading_determinant_ignores_theta(p in params(), theta in 0.0..TAU) {
        let a4 = det_general(&p).unwrap().a4;
        let b4 = det_general(&p.with_theta(theta)).unwrap().a4;
        prop_assert!((a4 - b4).abs() <= 1e-14 * a4.abs());
    }

    #[test]
    fn series_derivative_matches_differences(
        a in 0.01..0.2f64,
        e in 0.05..0.8f64,
        e_j in 0.0..0.6f64,
        theta in 0.0..TAU,
    ) {
        let h = 1e-5;
        let fd = (rbar_series(a, e + h, e_j, theta) - rbar_series(a, e - h, e_j, theta)) / (2.0 * h);
        let d = rbar_series_de(a, e, e_j, theta);
        // Central differences of a value near −1 carry ~1e−11 rounding.
        prop_assert!((fd - d).abs() <= 5e-11 + 1e-7 * d.abs());
    }

    #[test]
    fn normal_flow_conserves_form(qf in positive_definite_form(), rho in 0.01..1.0f64) {
        let period = TAU / qf.det().sqrt();
        let c = linearized_normal_flow(&qf, (rho, 0.0), period / 1e4, 10_000).unwrap();
        prop_assert!(c.w_drift <= 1e-9 * c.w_level.abs());
        prop_assert!(c.closure <= 1e-6 * rho);
    }

    #[test]
    fn amended_small_inclination_is_positive_definite(p in params()) {
        prop_assert!(stability_verdict(&coeffs_small_inclination_amended(&p)).positive_definite);
    }

    #[test]
    fn planar_flow_conserves_level(
        a in 0.02..0.2f64,
        e_j in 0.0..0.6f64,
        e in 0.0..0.5f64,
        theta in -PI..PI,
    ) {
        let sys = PlanarSystem::new(a, e_j).unwrap();
        let s0 = PlanarState::from_theta_e(theta, e, sys.big_l).unwrap();
        let dt = sys.equilibrium_period().unwrap() / 1e3;
        let t = sys.integrate_trajectory(s0, dt, 2000).unwrap();
        prop_assert!(t.drift <= 1e-9 * t.level.abs());
    }

    #[test]
    fn planar_level_is_mirror_symmetric(
        a in 0.02..0.2f64,
        e_j in 0.0..0.6f64,
        e in 0.0..0.9f64,
        theta in -PI..PI,
    ) {
        let sys = PlanarSystem::new(a, e_j).unwrap();
        let l = sys.level(&PlanarState::from_theta_e(theta, e, sys.big_l).unwrap());
        let m = sys.level(&PlanarState::from_theta_e(-theta, e, sys.big_l).unwrap());
        prop_assert!((l - m).abs() <= 4.0 * f64::EPSILON);
    }
}
