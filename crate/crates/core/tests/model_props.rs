mod common;

use chemostat::model::{GrowthLaw, InitialState, Scenario, Species, YieldLaw};
use common::*;
use proptest::prelude::*;

fn fd(f: impl Fn(f64) -> f64, s: f64) -> f64 {
    let h = 1e-6 * s.max(1.0);
    if s >= h {
        (f(s + h) - f(s - h)) / (2.0 * h)
    } else {
        (-3.0 * f(s) + 4.0 * f(s + h) - f(s + 2.0 * h)) / (2.0 * h)
    }
}

proptest! {
    #[test]
    fn growth_derivative_matches_finite_difference(law in smooth_growth(), s in 0.0f64..10.0) {
        let analytic = law.eval_growth_derivative(s).unwrap();
        let numeric = fd(|v| law.eval_growth(v).unwrap(), s);
        prop_assert!((analytic - numeric).abs() <= 1e-6 * (1.0 + analytic.abs()), "{analytic} vs {numeric}");
    }

    #[test]
    fn uptake_derivative_matches_finite_difference(law in smooth_growth(), y in yield_law(), s in 0.0f64..10.0) {
        let sp = Species::new("s", law, y, 1.0);
        let analytic = sp.eval_uptake_derivative(s).unwrap();
        let numeric = fd(|v| sp.eval_uptake(v).unwrap(), s);
        prop_assert!((analytic - numeric).abs() <= 1e-6 * (1.0 + analytic.abs()), "{analytic} vs {numeric}");
    }

    #[test]
    fn piecewise_derivative_away_from_knots(ys in prop::collection::vec(0.0f64..3.0, 3..6), s in 0.0f64..6.0) {
        let knots: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
            .chain(ys.iter().enumerate().map(|(k, y)| (k as f64 + 1.0, *y)))
            .collect();
        let law = GrowthLaw::PiecewiseLinear { knots: knots.clone() };
        prop_assume!(knots.iter().all(|(k, _)| (s - k).abs() > 1e-3));
        let analytic = law.eval_growth_derivative(s).unwrap();
        let numeric = fd(|v| law.eval_growth(v).unwrap(), s);
        prop_assert!((analytic - numeric).abs() <= 1e-6 * (1.0 + analytic.abs()));
    }

    #[test]
    fn uptake_times_yield_is_growth(law in smooth_growth(), y in yield_law(), s in 1e-6f64..10.0) {
        let sp = Species::new("s", law, y, 1.0);
        let p = sp.growth(s);
        let back = sp.eval_uptake(s).unwrap() * sp.yield_at(s);
        prop_assert!(rel_err(back, p) <= 1e-14, "{back} vs {p}");
    }

    #[test]
    fn monod_is_strictly_increasing(law in monod(), s1 in 0.0f64..10.0, ds in 1e-6f64..5.0) {
        prop_assert!(law.eval_growth(s1).unwrap() < law.eval_growth(s1 + ds).unwrap());
    }

    #[test]
    fn haldane_has_one_interior_maximum(a in 0.5f64..6.0, b in 0.1f64..4.0, c in 0.5f64..10.0) {
        let law = GrowthLaw::Haldane { a, b, c };
        let peak = (b * c).sqrt();
        let top = 10.0 * peak;
        let signs: Vec<bool> = (1..=2000)
            .map(|k| top * k as f64 / 2000.0)
            .filter(|s| (s - peak).abs() > 1e-9 * peak)
            .map(|s| law.eval_growth_derivative(s).unwrap() > 0.0)
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(changes, 1);
        prop_assert!(law.eval_growth_derivative(0.999 * peak).unwrap() > 0.0);
        prop_assert!(law.eval_growth_derivative(1.001 * peak).unwrap() < 0.0);
    }

    #[test]
    fn scenario_json_round_trip(law in smooth_growth(), y in yield_law(), s0 in 0.5f64..8.0) {
        let sc = Scenario {
            s0,
            d: 1.0,
            species: vec![Species::new("s", law, y, 0.7)],
            initial: InitialState { s: s0, x: vec![0.3] },
        };
        let text = serde_json::to_string(&sc).unwrap();
        prop_assert_eq!(serde_json::from_str::<Scenario>(&text).unwrap(), sc);
    }
}

#[test]
fn invalid_parameters_are_all_reported() {
    let sc = Scenario {
        s0: -1.0,
        d: 0.0,
        species: vec![
            Species::new("bad-monod", GrowthLaw::Monod { a: -2.0, b: 1.0 }, YieldLaw::Constant { y: 0.0 }, 1.0),
            Species::new("bad-removal", GrowthLaw::Monod { a: 2.0, b: 1.0 }, YieldLaw::Constant { y: 1.0 }, -1.0),
        ],
        initial: InitialState { s: 1.0, x: vec![0.1] },
    };
    let err = sc.validate().unwrap_err();
    assert!(err.0.len() >= 6, "{err}");
    let fields: Vec<&str> = err.0.iter().map(|v| v.field.as_str()).collect();
    assert!(fields.iter().any(|f| f.contains("s0")));
    assert!(fields.iter().any(|f| f.contains("initial")));
}
