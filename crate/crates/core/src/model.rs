//! Growth laws, yield laws, species and scenarios.
//!
//! Every other module evaluates the per-capita growth rate `p`, the yield
//! `y` and the substrate uptake rate `f = p / y` through the types defined
//! here.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("concentration must be non-negative, got {0}")]
    NegativeConcentration(f64),
    #[error("yield must be positive, got y({s}) = {value}")]
    InvalidYield { s: f64, value: f64 },
}

/// Per-capita growth rate as a function of substrate concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum GrowthLaw {
    /// `a S / (b + S)`
    Monod { a: f64, b: f64 },
    /// `a S / (b + S + S^2 / c)`, substrate-inhibited.
    Haldane { a: f64, b: f64, c: f64 },
    /// Linear interpolation between knots starting at `(0, 0)`; constant
    /// beyond the last knot.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl GrowthLaw {
    /// Growth rate at `s`, checking the domain.
    pub fn eval_growth(&self, s: f64) -> Result<f64, ModelError> {
        if s < 0.0 || s.is_nan() {
            return Err(ModelError::NegativeConcentration(s));
        }
        Ok(self.rate(s))
    }

    /// Analytic derivative at `s`, checking the domain. For the
    /// piecewise-linear family the right-hand slope is returned at knots.
    pub fn eval_growth_derivative(&self, s: f64) -> Result<f64, ModelError> {
        if s < 0.0 || s.is_nan() {
            return Err(ModelError::NegativeConcentration(s));
        }
        Ok(self.slope(s))
    }

    /// Unchecked evaluation; `s` must be non-negative.
    pub fn rate(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0, "negative concentration {s}");
        match *self {
            GrowthLaw::Monod { a, b } => {
                if s == 0.0 {
                    0.0
                } else {
                    a * s / (b + s)
                }
            }
            GrowthLaw::Haldane { a, b, c } => {
                if s == 0.0 {
                    0.0
                } else {
                    a * s / (b + s + s * s / c)
                }
            }
            GrowthLaw::PiecewiseLinear { ref knots } => piecewise(knots, s).0,
        }
    }

    pub fn slope(&self, s: f64) -> f64 {
        match *self {
            GrowthLaw::Monod { a, b } => a * b / ((b + s) * (b + s)),
            GrowthLaw::Haldane { a, b, c } => {
                let den = b + s + s * s / c;
                a * (b - s * s / c) / (den * den)
            }
            GrowthLaw::PiecewiseLinear { ref knots } => piecewise(knots, s).1,
        }
    }

    /// Upper bound of the rate on `[0, ∞)`.
    pub fn sup(&self) -> f64 {
        match *self {
            GrowthLaw::Monod { a, .. } => a,
            GrowthLaw::Haldane { a, b, c } => {
                let s = (b * c).sqrt();
                a * s / (b + s + s * s / c)
            }
            GrowthLaw::PiecewiseLinear { ref knots } => knots.iter().map(|k| k.1).fold(0.0, f64::max),
        }
    }

    fn violations(&self, field: &str, out: &mut Vec<Violation>) {
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(Violation::new(format!("{field}.{name}"), format!("must be strictly positive and finite, got {v}")));
            }
        };
        match *self {
            GrowthLaw::Monod { a, b } => {
                positive("a", a);
                positive("b", b);
            }
            GrowthLaw::Haldane { a, b, c } => {
                positive("a", a);
                positive("b", b);
                positive("c", c);
            }
            GrowthLaw::PiecewiseLinear { ref knots } => {
                if knots.len() < 2 {
                    out.push(Violation::new(format!("{field}.knots"), "needs at least two knots".into()));
                    return;
                }
                if knots[0] != (0.0, 0.0) {
                    out.push(Violation::new(format!("{field}.knots[0]"), format!("first knot must be (0, 0), got {:?}", knots[0])));
                }
                for (k, w) in knots.windows(2).enumerate() {
                    if !(w[1].0 > w[0].0 && w[1].0.is_finite()) {
                        out.push(Violation::new(format!("{field}.knots[{}]", k + 1), "abscissas must be strictly increasing".into()));
                    }
                    if !(w[1].1 > 0.0 && w[1].1.is_finite()) {
                        out.push(Violation::new(format!("{field}.knots[{}]", k + 1), format!("ordinate must be strictly positive, got {}", w[1].1)));
                    }
                }
            }
        }
    }
}

/// Value and right-hand slope of the interpolant at `s`.
fn piecewise(knots: &[(f64, f64)], s: f64) -> (f64, f64) {
    let last = knots[knots.len() - 1];
    if s >= last.0 {
        return (last.1, 0.0);
    }
    // First knot strictly to the right of s.
    let k = knots.partition_point(|kn| kn.0 <= s).max(1);
    let (x0, y0) = knots[k - 1];
    let (x1, y1) = knots[k];
    let m = (y1 - y0) / (x1 - x0);
    (y0 + m * (s - x0), m)
}

/// Growth yield (biomass produced per unit substrate consumed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum YieldLaw {
    Constant { y: f64 },
    /// `a + b S`
    Linear { a: f64, b: f64 },
    /// `a + b S^2`
    Quadratic { a: f64, b: f64 },
}

impl YieldLaw {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            YieldLaw::Constant { y } => y,
            YieldLaw::Linear { a, b } => a + b * s,
            YieldLaw::Quadratic { a, b } => a + b * s * s,
        }
    }

    pub fn slope(&self, s: f64) -> f64 {
        match *self {
            YieldLaw::Constant { .. } => 0.0,
            YieldLaw::Linear { b, .. } => b,
            YieldLaw::Quadratic { b, .. } => 2.0 * b * s,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, YieldLaw::Constant { .. })
    }

    /// Largest value on `[0, s_max]`. All families are monotone on `S >= 0`.
    pub fn max_on(&self, s_max: f64) -> f64 {
        self.value(0.0).max(self.value(s_max))
    }

    /// First concentration in `[0, s_max]` where the yield is not positive.
    fn first_nonpositive(&self, s_max: f64) -> Option<f64> {
        let root = match *self {
            YieldLaw::Constant { y } => return (y <= 0.0 || !y.is_finite()).then_some(0.0),
            YieldLaw::Linear { a, b } => {
                if a <= 0.0 {
                    return Some(0.0);
                }
                if b >= 0.0 {
                    return None;
                }
                -a / b
            }
            YieldLaw::Quadratic { a, b } => {
                if a <= 0.0 {
                    return Some(0.0);
                }
                if b >= 0.0 {
                    return None;
                }
                (-a / b).sqrt()
            }
        };
        (root <= s_max).then_some(root)
    }
}

/// One competitor in the chemostat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub label: String,
    pub growth: GrowthLaw,
    #[serde(rename = "yield")]
    pub yield_law: YieldLaw,
    /// Removal rate `D_i`.
    pub removal: f64,
}

impl Species {
    pub fn new(label: impl Into<String>, growth: GrowthLaw, yield_law: YieldLaw, removal: f64) -> Self {
        Self { label: label.into(), growth, yield_law, removal }
    }

    pub fn growth(&self, s: f64) -> f64 {
        self.growth.rate(s)
    }

    pub fn yield_at(&self, s: f64) -> f64 {
        self.yield_law.value(s)
    }

    /// Substrate uptake `p(S) / y(S)`, extended by continuity to 0 at `S = 0`.
    pub fn uptake(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        self.growth.rate(s) / self.yield_law.value(s)
    }

    pub fn uptake_slope(&self, s: f64) -> f64 {
        let y = self.yield_law.value(s);
        let p = self.growth.rate(s);
        (self.growth.slope(s) * y - p * self.yield_law.slope(s)) / (y * y)
    }

    /// Checked uptake evaluation.
    pub fn eval_uptake(&self, s: f64) -> Result<f64, ModelError> {
        self.check_point(s)?;
        Ok(self.uptake(s))
    }

    /// Checked uptake derivative, by the quotient rule.
    pub fn eval_uptake_derivative(&self, s: f64) -> Result<f64, ModelError> {
        self.check_point(s)?;
        Ok(self.uptake_slope(s))
    }

    fn check_point(&self, s: f64) -> Result<(), ModelError> {
        if s < 0.0 || s.is_nan() {
            return Err(ModelError::NegativeConcentration(s));
        }
        let y = self.yield_law.value(s);
        if !(y > 0.0) {
            return Err(ModelError::InvalidYield { s, value: y });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub s: f64,
    pub x: Vec<f64>,
}

/// A full instance of the competition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Feed concentration `S⁰`.
    pub s0: f64,
    /// Dilution rate `D`.
    pub d: f64,
    pub species: Vec<Species>,
    pub initial: InitialState,
}

/// One violated invariant found by [`Scenario::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: String, message: String) -> Self {
        Self { field, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scenario: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<Violation>);

impl Scenario {
    pub fn n(&self) -> usize {
        self.species.len()
    }

    /// Checks every invariant and returns the scenario unchanged if all hold,
    /// otherwise the complete list of violations.
    pub fn validate(self) -> Result<Scenario, ValidationErrors> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ValidationErrors(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            out.push(Violation::new("s0".into(), format!("inflow concentration must be strictly positive, got {}", self.s0)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            out.push(Violation::new("d".into(), format!("dilution rate must be strictly positive, got {}", self.d)));
        }
        if self.species.is_empty() {
            out.push(Violation::new("species".into(), "at least one species is required".into()));
        }
        if !(self.initial.s >= 0.0 && self.initial.s.is_finite()) {
            out.push(Violation::new("initial.s".into(), format!("initial substrate must be non-negative, got {}", self.initial.s)));
        }
        let s_range = self.s0.max(self.initial.s);
        for (i, sp) in self.species.iter().enumerate() {
            let field = format!("species[{i}]");
            if !(sp.removal > 0.0 && sp.removal.is_finite()) {
                out.push(Violation::new(format!("{field}.removal"), format!("removal rate must be strictly positive, got {}", sp.removal)));
            }
            sp.growth.violations(&format!("{field}.growth"), &mut out);
            if let Some(s) = sp.yield_law.first_nonpositive(s_range) {
                out.push(Violation::new(
                    format!("{field}.yield"),
                    format!("yield must be positive on [0, {s_range}], but y({s}) = {}", sp.yield_law.value(s)),
                ));
            }
        }
        if self.initial.x.len() != self.species.len() {
            out.push(Violation::new(
                "initial.x".into(),
                format!("expected {} initial biomasses, got {}", self.species.len(), self.initial.x.len()),
            ));
        }
        for (i, &x) in self.initial.x.iter().enumerate() {
            if !(x > 0.0 && x.is_finite()) {
                out.push(Violation::new(format!("initial.x[{i}]"), format!("initial biomass must be strictly positive, got {x}")));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monod(a: f64, b: f64) -> GrowthLaw {
        GrowthLaw::Monod { a, b }
    }

    fn reference() -> Scenario {
        Scenario {
            s0: 3.0,
            d: 1.0,
            species: vec![
                Species::new("s1", monod(2.0, 1.0), YieldLaw::Constant { y: 1.0 }, 1.0),
                Species::new("s2", GrowthLaw::Haldane { a: 3.0, b: 2.0, c: 4.0 }, YieldLaw::Constant { y: 1.0 }, 1.0),
                Species::new("s3", monod(3.0, 3.0), YieldLaw::Constant { y: 1.0 }, 1.0),
            ],
            initial: InitialState { s: 3.0, x: vec![0.1, 0.1, 0.1] },
        }
    }

    #[test]
    fn growth_examples() {
        assert_eq!(monod(2.0, 1.0).eval_growth(1.0).unwrap(), 1.0);
        assert!((GrowthLaw::Haldane { a: 3.0, b: 2.0, c: 4.0 }.eval_growth(4.0).unwrap() - 1.2).abs() < 1e-15);
        let pw = GrowthLaw::PiecewiseLinear { knots: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 1.0)] };
        for law in [monod(2.0, 1.0), GrowthLaw::Haldane { a: 3.0, b: 2.0, c: 4.0 }, pw.clone()] {
            assert_eq!(law.eval_growth(0.0).unwrap(), 0.0);
        }
        assert_eq!(pw.rate(0.5), 1.0);
        assert_eq!(pw.rate(2.0), 1.5);
        assert_eq!(pw.rate(10.0), 1.0);
        assert!(matches!(monod(2.0, 1.0).eval_growth(-1.0), Err(ModelError::NegativeConcentration(_))));
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(monod(2.0, 1.0).eval_growth_derivative(1.0).unwrap(), 0.5);
        assert_eq!(monod(2.0, 4.0).eval_growth_derivative(0.0).unwrap(), 0.5);
        let h = GrowthLaw::Haldane { a: 3.0, b: 2.0, c: 4.0 };
        assert!((h.eval_growth_derivative(2.0).unwrap() - 0.12).abs() < 1e-15);
        assert!(h.eval_growth_derivative(4.0).unwrap() < 0.0);
        // Right-hand slope at a knot.
        let pw = GrowthLaw::PiecewiseLinear { knots: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 1.0)] };
        assert_eq!(pw.slope(1.0), -0.5);
        assert_eq!(pw.slope(0.0), 2.0);
        assert_eq!(pw.slope(3.0), 0.0);
    }

    #[test]
    fn uptake_examples() {
        let sp = |y| Species::new("a", monod(2.0, 1.0), YieldLaw::Constant { y }, 1.0);
        assert_eq!(sp(1.0).eval_uptake(1.0).unwrap(), 1.0);
        assert_eq!(sp(2.0).eval_uptake(1.0).unwrap(), 0.5);
        assert_eq!(sp(2.0).eval_uptake(0.0).unwrap(), 0.0);
        assert_eq!(sp(1.0).eval_uptake_derivative(1.0).unwrap(), 0.5);
        let lin = Species::new("b", monod(2.0, 1.0), YieldLaw::Linear { a: 1.0, b: 1.0 }, 1.0);
        assert_eq!(lin.eval_uptake_derivative(0.0).unwrap(), 2.0);
        // Haldane peak: p'(sqrt(bc)) = 0, constant yield scales it.
        let hal = Species::new("c", GrowthLaw::Haldane { a: 3.0, b: 2.0, c: 4.0 }, YieldLaw::Constant { y: 2.0 }, 1.0);
        assert!(hal.eval_uptake_derivative(8f64.sqrt()).unwrap().abs() < 1e-15);
        let bad = Species::new("d", monod(2.0, 1.0), YieldLaw::Linear { a: 1.0, b: -1.0 }, 1.0);
        assert!(matches!(bad.eval_uptake(2.0), Err(ModelError::InvalidYield { .. })));
    }

    #[test]
    fn validation_accepts_reference() {
        assert!(reference().validate().is_ok());
    }

    #[test]
    fn validation_rejects_zero_biomass() {
        let mut sc = reference();
        sc.initial.x[1] = 0.0;
        let err = sc.validate().unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].field, "initial.x[1]");
        assert!(err.0[0].message.contains("initial biomass must be strictly positive"));
    }

    #[test]
    fn validation_rejects_vanishing_yield() {
        let mut sc = reference();
        sc.species[0].yield_law = YieldLaw::Linear { a: 1.0, b: -0.5 };
        let err = sc.validate().unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].message.contains("y(2) = 0"), "{}", err.0[0].message);
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut sc = reference();
        sc.s0 = -1.0;
        sc.d = 0.0;
        sc.species[1].removal = 0.0;
        sc.species[2].growth = GrowthLaw::PiecewiseLinear { knots: vec![(0.0, 0.0), (1.0, 1.0), (1.0, 2.0)] };
        sc.initial.x.pop();
        let fields: Vec<String> = sc.validate().unwrap_err().0.into_iter().map(|v| v.field).collect();
        assert_eq!(fields, ["s0", "d", "species[1].removal", "species[2].growth.knots[2]", "initial.x"]);
    }

    #[test]
    fn yield_checked_up_to_initial_substrate() {
        let mut sc = reference();
        sc.species[0].yield_law = YieldLaw::Quadratic { a: 1.0, b: -0.04 };
        assert!(sc.clone().validate().is_ok());
        sc.initial.s = 6.0;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn serde_shape() {
        let sp = &reference().species[1];
        let v = serde_json::to_value(sp).unwrap();
        assert_eq!(v["growth"]["family"], "haldane");
        assert_eq!(v["growth"]["params"]["c"], 4.0);
        assert_eq!(v["yield"]["family"], "constant");
        let back: Species = serde_json::from_value(v).unwrap();
        assert_eq!(&back, sp);
    }
}
