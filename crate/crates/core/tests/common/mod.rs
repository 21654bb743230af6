#![allow(dead_code)]

use chemostat::conditions::{self, CheckerOptions};
use chemostat::model::{GrowthLaw, InitialState, Scenario, Species, YieldLaw};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn monod() -> impl Strategy<Value = GrowthLaw> {
    (0.5f64..5.0, 0.1f64..5.0).prop_map(|(a, b)| GrowthLaw::Monod { a, b })
}

pub fn haldane() -> impl Strategy<Value = GrowthLaw> {
    (0.5f64..6.0, 0.1f64..4.0, 0.5f64..10.0).prop_map(|(a, b, c)| GrowthLaw::Haldane { a, b, c })
}

pub fn smooth_growth() -> impl Strategy<Value = GrowthLaw> {
    prop_oneof![monod(), haldane()]
}

pub fn yield_law() -> impl Strategy<Value = YieldLaw> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|y| YieldLaw::Constant { y }),
        (0.2f64..3.0, 0.0f64..2.0).prop_map(|(a, b)| YieldLaw::Linear { a, b }),
        (0.2f64..3.0, 0.0f64..2.0).prop_map(|(a, b)| YieldLaw::Quadratic { a, b }),
    ]
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_growth(rng: &mut ChaCha8Rng) -> GrowthLaw {
    if rng.random_bool(0.5) {
        GrowthLaw::Monod { a: rng.random_range(0.8..4.0), b: rng.random_range(0.2..3.0) }
    } else {
        GrowthLaw::Haldane { a: rng.random_range(1.0..5.0), b: rng.random_range(0.2..3.0), c: rng.random_range(1.0..10.0) }
    }
}

pub fn random_yield(rng: &mut ChaCha8Rng, constant: bool) -> YieldLaw {
    let a = rng.random_range(0.3..2.5);
    if constant {
        return YieldLaw::Constant { y: a };
    }
    match rng.random_range(0..3) {
        0 => YieldLaw::Constant { y: a },
        1 => YieldLaw::Linear { a, b: rng.random_range(0.0..0.6) },
        _ => YieldLaw::Quadratic { a, b: rng.random_range(0.0..0.3) },
    }
}

/// Random scenario with `n` species; removal rates equal `D` when
/// `equal_removal`.
pub fn random_scenario(rng: &mut ChaCha8Rng, n: usize, constant_yields: bool, equal_removal: bool) -> Scenario {
    let s0 = rng.random_range(1.0..6.0);
    let d = rng.random_range(0.4..1.5);
    let species = (0..n)
        .map(|k| {
            let removal = if equal_removal { d } else { rng.random_range(0.4..1.5) };
            Species::new(format!("s{k}"), random_growth(rng), random_yield(rng, constant_yields), removal)
        })
        .collect();
    let x = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    Scenario { s0, d, species, initial: InitialState { s: rng.random_range(0.1..1.5) * s0, x } }
}

/// Draws scenarios until `count` pass the theorem check.
pub fn theorem_passing(seed: u64, count: usize, constant_yields: bool) -> Vec<Scenario> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let opts = CheckerOptions::default();
    while out.len() < count {
        let n = r.random_range(1..=3);
        let sc = random_scenario(&mut r, n, constant_yields, false);
        let Ok(sc) = sc.validate() else { continue };
        if conditions::check_theorem(&sc, &opts).is_ok_and(|rep| rep.verdict) {
            out.push(sc);
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
