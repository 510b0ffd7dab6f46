//! Randomized invariants of the exponent algebra and the interface tools.

use fblab::free_boundary::{extract_interface, flatness_certificate, FlatnessMode};
use fblab::{GammaParams, Grid, Hodograph, ScalarField};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #[test]
    fn exponent_identities(gamma in 0.01f64..1.99) {
        let p = GammaParams::new(gamma).unwrap();
        prop_assert!(rel(p.alpha, 2.0 / (2.0 + gamma)) < 1e-12);
        prop_assert!(p.alpha > 0.5 && p.alpha < 1.0);
        prop_assert!(rel(p.c_alpha, p.alpha.powf(-p.alpha)) < 1e-12);
        let coeff = p.c_alpha.powf(gamma + 2.0) * p.alpha * (1.0 - p.alpha);
        prop_assert!(rel(coeff, gamma / 2.0) < 1e-12);
        prop_assert!((p.s - 2.0 * (p.alpha - 1.0)).abs() < 1e-15);
        prop_assert!(p.s > -1.0 && p.s < 0.0);
        prop_assert!(rel(p.c_gamma, (2.0 - gamma).powi(2) / 16.0) < 1e-12);
    }

    #[test]
    fn equipartition_and_hodograph_roundtrip(gamma in 0.01f64..1.99, t in 1e-3f64..10.0) {
        let p = GammaParams::new(gamma).unwrap();
        let u = p.u0(t);
        let du = p.profile(t, 1).unwrap();
        prop_assert!(rel(du * du, u.powf(-gamma)) < 1e-12);
        let w = p.hodograph(u, Hodograph::Forward).unwrap();
        prop_assert!(rel(w, t) < 1e-12);
        prop_assert!(rel(p.hodograph(w, Hodograph::Backward).unwrap(), u) < 1e-12);
        prop_assert!(rel(p.profile_inverse(u).unwrap(), t) < 1e-12);
    }

    #[test]
    fn profile_vanishes_on_negative_axis(gamma in 0.01f64..1.99, t in -10.0f64..=0.0) {
        prop_assert_eq!(GammaParams::new(gamma).unwrap().u0(t), 0.0);
    }

    #[test]
    fn interface_is_scale_covariant(k in 0.1f64..10.0, tau in 0.0f64..0.05, shift in -0.3f64..0.3) {
        let g = Grid::square([0.0, 0.0], 1.0, 1.0 / 32.0).unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] - shift + 0.3 * x[1] * x[1]).max(0.0)).unwrap();
        let a = extract_interface(&u, tau).unwrap();
        let b = extract_interface(&u.map(|v| k * v).unwrap(), k * tau).unwrap();
        prop_assert_eq!(&a.cells, &b.cells);
        for (p, q) in a.vertices().zip(b.vertices()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        }
        prop_assert!((a.length() - b.length()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flatness_direction_follows_rotation(theta in 0.0f64..std::f64::consts::TAU, gamma in 0.3f64..1.7) {
        let p = GammaParams::new(gamma).unwrap();
        let h = 1.0 / 64.0;
        let nu = [theta.cos(), theta.sin()];
        let u = ScalarField::from_fn(Grid::square([0.0, 0.0], 1.0, h).unwrap(), |x| p.u0(x[0] * nu[0] + x[1] * nu[1]))
            .unwrap();
        let c = flatness_certificate(&u, [0.0, 0.0], 0.5, &p, FlatnessMode::UProfile).unwrap();
        let cos = (c.nu[0] * nu[0] + c.nu[1] * nu[1]).clamp(-1.0, 1.0);
        prop_assert!(cos.acos().to_degrees() < 1.0, "nu {:?} vs {:?}", c.nu, nu);
        prop_assert!(c.epsilon <= 2.0 * h / 0.5, "epsilon {}", c.epsilon);
    }
}
