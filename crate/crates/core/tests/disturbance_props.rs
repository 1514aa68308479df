use proptest::prelude::*;

use coalflow::disturbance::{family_bounds, BoundsGrid, ExplicitDisturbance, Family};
use coalflow::dsl::CoefficientField;
use coalflow::Side;

fn field() -> CoefficientField {
    CoefficientField::parse("1 + 0.3*sin(2*pi*(x - t))", "0.5*cos(2*pi*x)", (0.0, 1.0)).unwrap()
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Full), Just(Family::CollapseOnly)]
}

/// Circular distance from `u` to the arc `[lo, hi)` measured from `θ`.
fn outside(u: f64, lo: f64, hi: f64, margin: f64) -> bool {
    u < lo - margin || u >= hi + margin
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn in_regime_maps_are_monotone(
        fam in family(), lh in -4.0f64..-2.2, t in 0.0f64..1.0, theta in 0.0f64..1.0,
    ) {
        let d = ExplicitDisturbance::new(&field(), fam, 10f64.powf(lh), t, theta).unwrap();
        let m = d.to_circle_map();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=400 {
            let x = theta - 0.5 + i as f64 / 400.0;
            let y = m.evaluate(x, Side::Right);
            prop_assert!(y >= prev);
            prop_assert!((y - x - d.displacement(x)).abs() <= 1e-12);
            prev = y;
        }
    }

    #[test]
    fn displacement_is_localized(
        fam in family(), lh in -4.0f64..-2.2, t in 0.0f64..1.0, theta in 0.0f64..1.0, x in 0.0f64..1.0,
    ) {
        let d = ExplicitDisturbance::new(&field(), fam, 10f64.powf(lh), t, theta).unwrap();
        let u = (x - theta).rem_euclid(1.0);
        let s = if u >= 0.5 { u - 1.0 } else { u };
        let band_lo = 0.5 - d.band + d.r.min(0.0);
        let band_hi = 0.5 + d.band + d.r.max(0.0);
        let m = 1e-12;
        if s.abs() > d.w + m && outside(u, band_lo, band_hi, m) {
            prop_assert_eq!(d.displacement(x), 0.0);
            prop_assert_eq!(d.inverse_displacement(x), 0.0);
        }
    }

    #[test]
    fn displacement_is_bounded(
        fam in family(), lh in -4.0f64..-2.2, t in 0.0f64..1.0, theta in 0.0f64..1.0, x in -1.0f64..2.0,
    ) {
        let d = ExplicitDisturbance::new(&field(), fam, 10f64.powf(lh), t, theta).unwrap();
        let bound = d.w.max(d.r.abs()) + 1e-12;
        prop_assert!(d.displacement(x).abs() <= bound);
        prop_assert!(d.inverse_displacement(x).abs() <= bound);
    }

    #[test]
    fn direct_inverse_matches_generic_inverse(
        fam in family(), lh in -4.0f64..-2.2, t in 0.0f64..1.0, theta in 0.0f64..1.0,
    ) {
        let d = ExplicitDisturbance::new(&field(), fam, 10f64.powf(lh), t, theta).unwrap();
        prop_assert!(d.inverse_map().approx_eq(&d.to_circle_map().inverse(), 1e-12));
    }

    #[test]
    fn inverse_displacement_agrees_with_inverse_map(
        fam in family(), lh in -4.0f64..-2.2, t in 0.0f64..1.0, theta in 0.0f64..1.0, x in 0.0f64..1.0,
    ) {
        let d = ExplicitDisturbance::new(&field(), fam, 10f64.powf(lh), t, theta).unwrap();
        let y = d.inverse_map().evaluate(x, Side::Right);
        prop_assert!((y - x - d.inverse_displacement(x)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn family_bounds_dominate_parameters(fam in family(), lh in -4.0f64..-2.5) {
        let h = 10f64.powf(lh);
        let f = field();
        let grid = BoundsGrid { n_t: 3, n_x: 8, n_theta: 64, n_lambda: 64 };
        let b = family_bounds(&f, fam, h, &grid, false).unwrap();
        let mut sup_w: f64 = 0.0;
        let mut sup_r: f64 = 0.0;
        for i in 0..3 {
            let t = i as f64 / 2.0;
            for j in 0..64 {
                let d = ExplicitDisturbance::new(&f, fam, h, t, (j as f64 + 0.5) / 64.0).unwrap();
                sup_w = sup_w.max(d.w);
                sup_r = sup_r.max(d.r.abs());
            }
        }
        prop_assert!(b.m_h <= sup_w + sup_r + 1e-12);
        prop_assert!(b.m_h >= sup_w - 1e-12);
        prop_assert!((0.0..=0.5).contains(&b.lambda_h));
    }
}
