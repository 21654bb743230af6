//! Named scenarios used in documentation, tests and the CLI.

use crate::model::{GrowthLaw, InitialState, Scenario, Species, YieldLaw};

/// Three competitors on `S⁰ = 3`, `D = 1`: Monod `{2, 1}`, Haldane
/// `{3, 2, 4}` and Monod `{3, 3}`, all with unit yield and unit removal.
/// Break-evens are `1`, `4 - 2√2` and `1.5`; the first species wins.
pub fn reference() -> Scenario {
    Scenario {
        s0: 3.0,
        d: 1.0,
        species: vec![
            Species::new("monod-2-1", GrowthLaw::Monod { a: 2.0, b: 1.0 }, YieldLaw::Constant { y: 1.0 }, 1.0),
            Species::new(
                "haldane-3-2-4",
                GrowthLaw::Haldane { a: 3.0, b: 2.0, c: 4.0 },
                YieldLaw::Constant { y: 1.0 },
                1.0,
            ),
            Species::new("monod-3-3", GrowthLaw::Monod { a: 3.0, b: 3.0 }, YieldLaw::Constant { y: 1.0 }, 1.0),
        ],
        initial: InitialState { s: 3.0, x: vec![0.1, 0.1, 0.1] },
    }
}

/// One Monod `{2, 1}` species whose yield `1 + 5 S²` rises steeply, on
/// `S⁰ = 3`, `D = 1`. `E_1*` at `S = 1` is unstable and trajectories settle
/// on a limit cycle with `S` between about 0.06 and 2.37.
pub fn cycling() -> Scenario {
    Scenario {
        s0: 3.0,
        d: 1.0,
        species: vec![Species::new(
            "monod-2-1-steep-yield",
            GrowthLaw::Monod { a: 2.0, b: 1.0 },
            YieldLaw::Quadratic { a: 1.0, b: 5.0 },
            1.0,
        )],
        initial: InitialState { s: 1.0, x: vec![1.0] },
    }
}
