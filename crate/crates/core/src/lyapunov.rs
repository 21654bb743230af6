//! Lyapunov function for the single-survivor equilibrium `E_1*`:
//!
//! ```text
//! V = ∫_{λ1}^{S} (p_1(σ) - D_1)(S⁰ - λ1) / (f_1(λ1)(S⁰ - σ)) dσ
//!   + ∫_{x1*}^{x1} (ξ - x1*) / ξ dξ
//!   + Σ_{i>=2} α_i x_i
//! ```
//!
//! its derivative along trajectories, and the older functions it
//! generalizes (used as cross-checks). All states here use the ordered
//! labeling of [`crate::conditions::Ordered`] unless stated otherwise.

use crate::conditions::{self, CheckerOptions, ConditionError, GKind, Ordered, TheoremReport};
use crate::model::{GrowthLaw, Species};
use crate::numerics::{self, NumericError};
use crate::sim::{LyapunovSample, Monitor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("S = {s} is at or above the evaluation ceiling {cap} (the integrand has a pole at S0)")]
    Ceiling { s: f64, cap: f64 },
    #[error("state outside the domain: {0}")]
    Domain(String),
    #[error("inapplicable: {0}")]
    Inapplicable(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
}

/// Relative distance of the evaluation ceiling below `S⁰`.
pub const CEILING_REL: f64 = 1e-9;

/// Parameters of `V`; everything needed to evaluate it and its derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    /// Ordered species; index 0 is the survivor.
    pub species: Vec<Species>,
    pub permutation: Vec<usize>,
    pub s0: f64,
    pub d: f64,
    pub lambda1: f64,
    pub x1_star: f64,
    pub f1_at_lambda1: f64,
    /// `α_i` for ordered species `1..n`.
    pub alphas: Vec<f64>,
    pub quad_tol: f64,
    pub s_cap: f64,
}

impl LyapunovSpec {
    /// Builds `V` with the given weights for ordered species `1..n`.
    pub fn with_alphas(o: &Ordered, alphas: Vec<f64>) -> Result<Self, LyapunovError> {
        let lambda1 = o.lambda1();
        let s0 = o.s0();
        if !(lambda1 < s0) {
            return Err(LyapunovError::Inapplicable(format!("needs λ_1 < S0, got λ_1 = {lambda1}")));
        }
        if alphas.len() + 1 != o.scenario.n() {
            return Err(LyapunovError::Domain(format!("expected {} weights, got {}", o.scenario.n() - 1, alphas.len())));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0)) {
            return Err(LyapunovError::Domain(format!("weights must be positive, got {a}")));
        }
        let f1 = o.f1_at_lambda1();
        let s_cap = s0 * (1.0 - CEILING_REL);
        if !(lambda1 < s_cap) {
            return Err(LyapunovError::Inapplicable(format!("λ_1 = {lambda1} is not below the ceiling {s_cap}")));
        }
        Ok(Self {
            species: o.scenario.species.clone(),
            permutation: o.permutation.clone(),
            s0,
            d: o.scenario.d,
            lambda1,
            x1_star: o.scenario.d * (s0 - lambda1) / f1,
            f1_at_lambda1: f1,
            alphas,
            quad_tol: 1e-10,
            s_cap,
        })
    }

    /// Uses the midpoint witnesses of a passing check. Species with
    /// `λ_i >= S⁰` carry no interval; for them `h_i < 0` only requires
    /// `α_i` above the maximum of `g_i` on `(0, λ_1)`, and twice that
    /// maximum is used.
    pub fn from_theorem(o: &Ordered, report: &TheoremReport, opts: &CheckerOptions) -> Result<Self, LyapunovError> {
        if !report.verdict {
            return Err(LyapunovError::Inapplicable("the hypotheses do not hold; no admissible weights".into()));
        }
        let mut alphas = Vec::with_capacity(o.scenario.n() - 1);
        for i in 1..o.scenario.n() {
            let a = match report.alpha.iter().find(|a| a.species == i) {
                Some(iv) => iv.witness.expect("verdict implies feasibility"),
                None => {
                    let eps = opts.eps_rel * o.s0();
                    let lo = numerics::scan_max(
                        |s| conditions::eval_g(o, GKind::General, i, s).unwrap_or(f64::NAN),
                        eps,
                        o.lambda1() - eps,
                        opts.grid_n,
                        opts.refine_rel * o.s0(),
                    )?;
                    if lo.value > 0.0 { 2.0 * lo.value } else { 1.0 }
                }
            };
            alphas.push(a);
        }
        Self::with_alphas(o, alphas)
    }

    pub fn survivor(&self) -> &Species {
        &self.species[0]
    }

    fn big_f(&self, s: f64) -> f64 {
        self.survivor().uptake(s) / (self.s0 - s)
    }

    fn check(&self, s: f64, x: &[f64]) -> Result<(), LyapunovError> {
        if x.len() != self.species.len() {
            return Err(LyapunovError::Domain(format!("expected {} biomasses, got {}", self.species.len(), x.len())));
        }
        if !(s > 0.0) {
            return Err(LyapunovError::Domain(format!("S must be positive, got {s}")));
        }
        if s >= self.s_cap {
            return Err(LyapunovError::Ceiling { s, cap: self.s_cap });
        }
        if !(x[0] > 0.0) {
            return Err(LyapunovError::Domain(format!("x_1 must be positive, got {}", x[0])));
        }
        if let Some(v) = x[1..].iter().find(|v| !(**v >= 0.0)) {
            return Err(LyapunovError::Domain(format!("biomasses must be non-negative, got {v}")));
        }
        Ok(())
    }

    /// Substrate part of `V`, by adaptive quadrature. Returns the value and
    /// the quadrature error estimate.
    pub fn substrate_part(&self, s: f64) -> Result<(f64, f64), LyapunovError> {
        let sp = self.survivor();
        let scale = (self.s0 - self.lambda1) / self.f1_at_lambda1;
        let integrand = |sigma: f64| (sp.growth(sigma) - sp.removal) * scale / (self.s0 - sigma);
        let q = numerics::integrate(integrand, self.lambda1, s, self.quad_tol, self.quad_tol)?;
        Ok((q.value, q.error))
    }

    /// `V` at `(S, x)`, with its quadrature error estimate.
    pub fn eval_v_with_error(&self, s: f64, x: &[f64]) -> Result<(f64, f64), LyapunovError> {
        self.check(s, x)?;
        let (sub, err) = self.substrate_part(s)?;
        let weighted: f64 = self.alphas.iter().zip(&x[1..]).map(|(a, v)| a * v).sum();
        Ok((sub + log_part(x[0], self.x1_star) + weighted, err))
    }

    pub fn eval_v(&self, s: f64, x: &[f64]) -> Result<f64, LyapunovError> {
        Ok(self.eval_v_with_error(s, x)?.0)
    }

    /// `h_i(S) = (p_i(S) - D_i)(α_i - g_i(S))` for ordered `i >= 1`, in the
    /// expanded form that stays finite where `p_i(S) = D_i`.
    pub fn eval_h(&self, i: usize, s: f64) -> Result<f64, LyapunovError> {
        if i == 0 || i >= self.species.len() {
            return Err(LyapunovError::Domain(format!("species index {i} has no weight")));
        }
        if !(s > 0.0 && s < self.s0) {
            return Err(LyapunovError::Domain(format!("S must lie in (0, S0), got {s}")));
        }
        Ok(self.h_unchecked(i, s))
    }

    fn h_unchecked(&self, i: usize, s: f64) -> f64 {
        let (first, other) = (&self.species[0], &self.species[i]);
        (other.growth(s) - other.removal) * self.alphas[i - 1]
            - other.uptake(s) / self.f1_at_lambda1 * (first.growth(s) - first.removal) * (self.s0 - self.lambda1)
                / (self.s0 - s)
    }

    /// Orbital derivative
    /// `V' = x_1 (p_1 - D_1)(F(λ_1) - F(S))/F(λ_1) + Σ x_i h_i(S)`.
    pub fn eval_vdot(&self, s: f64, x: &[f64]) -> Result<f64, LyapunovError> {
        self.check(s, x)?;
        Ok(self.vdot_unchecked(s, x))
    }

    fn vdot_unchecked(&self, s: f64, x: &[f64]) -> f64 {
        let first = self.survivor();
        let f_ref = self.big_f(self.lambda1);
        let mut v = x[0] * (first.growth(s) - first.removal) * (f_ref - self.big_f(s)) / f_ref;
        for i in 1..self.species.len() {
            if x[i] != 0.0 {
                v += x[i] * self.h_unchecked(i, s);
            }
        }
        v
    }

    /// Reorders a state given in the scenario's original labeling.
    pub fn to_ordered(&self, x_original: &[f64]) -> Vec<f64> {
        self.permutation.iter().map(|&k| x_original[k]).collect()
    }
}

/// `∫_{x*}^{x} (ξ - x*)/ξ dξ = x - x* - x* ln(x/x*)`, evaluated without
/// cancellation near `x = x*`.
pub fn log_part(x: f64, x_star: f64) -> f64 {
    let r = (x - x_star) / x_star;
    let phi = if r.abs() < 1e-3 {
        // r - ln(1 + r) = r²/2 - r³/3 + r⁴/4 - ...
        let mut term = r * r;
        let mut sum = 0.0;
        for k in 2..12 {
            sum += if k % 2 == 0 { term / k as f64 } else { -term / k as f64 };
            term *= r;
        }
        sum
    } else {
        r - r.ln_1p()
    };
    x_star * phi
}

/// Records `V` and `V'` along a trajectory. States at or above the ceiling
/// are reported as outside the domain.
pub struct LyapunovMonitor<'a> {
    pub spec: &'a LyapunovSpec,
}

impl Monitor for LyapunovMonitor<'_> {
    fn observe(&self, _t: f64, s: f64, x: &[f64]) -> Option<LyapunovSample> {
        let xo = self.spec.to_ordered(x);
        let v = self.spec.eval_v(s, &xo).ok()?;
        let vdot = self.spec.eval_vdot(s, &xo).ok()?;
        Some(LyapunovSample { v, vdot })
    }
}

/// The earlier Lyapunov functions that `V` generalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltKind {
    /// Monod growth with constant yields: `∫(σ - λ1)/σ + c_1 ∫(ξ - x1*)/ξ + Σ c_i x_i`.
    Hsu,
    /// Constant yields: `∫(p_1 - D_1)(S⁰ - λ1)/(D_1(S⁰ - σ)) + (1/Y_1)∫… + Σ α_i x_i / Y_i`.
    ConstantYield,
    /// `∫(p_1 - D_1)/f_1 + ∫… + Σ α_i x_i`.
    UptakeRatio,
    /// One species: `V` without the weighted sum.
    OneSpecies,
}

/// Hsu's weights `c_i = a_i / (Y_i (a_i - D_i))` for Monod species with
/// constant yields, in ordered labeling.
pub fn hsu_weights(spec: &LyapunovSpec) -> Result<Vec<f64>, LyapunovError> {
    spec.species
        .iter()
        .map(|sp| match (&sp.growth, sp.yield_law.is_constant()) {
            (GrowthLaw::Monod { a, .. }, true) if *a > sp.removal => Ok(a / (sp.yield_at(0.0) * (a - sp.removal))),
            _ => Err(LyapunovError::Inapplicable(format!(
                "species {:?}: needs Monod growth with a > D_i and a constant yield",
                sp.label
            ))),
        })
        .collect()
}

/// Evaluates one of the alternative functions at an ordered state, with
/// weights `alphas` for ordered species `1..n` (ignored for [`AltKind::Hsu`],
/// which carries its own weights).
pub fn eval_alt_v(kind: AltKind, spec: &LyapunovSpec, alphas: &[f64], s: f64, x: &[f64]) -> Result<f64, LyapunovError> {
    spec.check(s, x)?;
    let n = spec.species.len();
    let first = spec.survivor();
    let l1 = spec.lambda1;
    let tol = spec.quad_tol;
    let constant_yields = || {
        if spec.species.iter().all(|sp| sp.yield_law.is_constant()) {
            Ok(())
        } else {
            Err(LyapunovError::Inapplicable("needs constant yields".into()))
        }
    };
    match kind {
        AltKind::Hsu => {
            constant_yields()?;
            let c = hsu_weights(spec)?;
            let y1 = first.yield_at(0.0);
            let x_star = spec.d * y1 * (spec.s0 - l1) / first.removal;
            let sub = (s - l1) - l1 * (s / l1).ln();
            let weighted: f64 = c[1..].iter().zip(&x[1..]).map(|(ci, xi)| ci * xi).sum();
            Ok(sub + c[0] * log_part(x[0], x_star) + weighted)
        }
        AltKind::ConstantYield => {
            constant_yields()?;
            let y: Vec<f64> = spec.species.iter().map(|sp| sp.yield_at(0.0)).collect();
            let scale = (spec.s0 - l1) / first.removal;
            let q = numerics::integrate(
                |sigma| (first.growth(sigma) - first.removal) * scale / (spec.s0 - sigma),
                l1,
                s,
                tol,
                tol,
            )?;
            let weighted: f64 = (1..n).map(|i| alphas[i - 1] / y[i] * x[i]).sum();
            Ok(q.value + log_part(x[0], spec.x1_star) / y[0] + weighted)
        }
        AltKind::UptakeRatio => {
            let q = numerics::integrate(
                |sigma| (first.growth(sigma) - first.removal) / first.uptake(sigma),
                l1,
                s,
                tol,
                tol,
            )?;
            let weighted: f64 = (1..n).map(|i| alphas[i - 1] * x[i]).sum();
            Ok(q.value + log_part(x[0], spec.x1_star) + weighted)
        }
        AltKind::OneSpecies => {
            if n != 1 {
                return Err(LyapunovError::Inapplicable(format!("needs one species, got {n}")));
            }
            let scale = (spec.s0 - l1) / spec.f1_at_lambda1;
            let q = numerics::integrate(
                |sigma| (first.growth(sigma) - first.removal) * scale / (spec.s0 - sigma),
                l1,
                s,
                tol,
                tol,
            )?;
            Ok(q.value + log_part(x[0], spec.x1_star))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::conditions::{check_theorem, order_species};
    use crate::presets;

    fn reference_spec() -> (Ordered, LyapunovSpec) {
        let sc = presets::reference();
        let bes = analysis::breakevens(&sc, &Default::default()).unwrap();
        let o = order_species(&sc, &bes, &Default::default()).unwrap();
        let r = check_theorem(&sc, &Default::default()).unwrap();
        let spec = LyapunovSpec::from_theorem(&o, &r, &Default::default()).unwrap();
        (o, spec)
    }

    #[test]
    fn zero_at_equilibrium() {
        let (_, spec) = reference_spec();
        assert!((spec.x1_star - 2.0).abs() < 1e-12);
        assert_eq!(spec.eval_v(spec.lambda1, &[spec.x1_star, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(spec.substrate_part(spec.lambda1).unwrap().0, 0.0);
    }

    #[test]
    fn log_part_example() {
        let (_, spec) = reference_spec();
        let v = spec.eval_v(spec.lambda1, &[4.0, 0.0, 0.0]).unwrap();
        let expect = 2.0 - 2.0 * 2f64.ln();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.613_71).abs() < 1e-5);
        let e = std::f64::consts::E;
        assert!(log_part(2.0 * e, 2.0) > 0.0 && log_part(2.0 / e, 2.0) > 0.0);
        // Series branch agrees with the closed form away from cancellation.
        let x = 2.0 * (1.0 + 9e-4);
        let direct = x - 2.0 - 2.0 * (x / 2.0f64).ln();
        assert!((log_part(x, 2.0) - direct).abs() < 1e-12 * direct.abs().max(1e-300) + 1e-15);
    }

    #[test]
    fn domain_errors() {
        let (_, spec) = reference_spec();
        assert!(matches!(spec.eval_v(3.0, &[1.0, 0.0, 0.0]), Err(LyapunovError::Ceiling { .. })));
        assert!(matches!(spec.eval_v(1.0, &[0.0, 0.0, 0.0]), Err(LyapunovError::Domain(_))));
        assert!(matches!(spec.eval_v(0.0, &[1.0, 0.0, 0.0]), Err(LyapunovError::Domain(_))));
    }

    #[test]
    fn vdot_zero_cases() {
        let (_, spec) = reference_spec();
        assert_eq!(spec.vdot_unchecked(2.0, &[0.0, 0.0, 0.0]), 0.0);
        assert!(spec.eval_vdot(spec.lambda1, &[5.0, 0.0, 0.0]).unwrap().abs() < 1e-15);
        assert!(spec.eval_vdot(2.0, &[1.0, 1.0, 1.0]).unwrap() < 0.0);
    }

    #[test]
    fn h_is_negative_on_reference() {
        let (_, spec) = reference_spec();
        for i in 1..3 {
            let at_l1 = spec.eval_h(i, spec.lambda1).unwrap();
            let sp = &spec.species[i];
            assert!((at_l1 - (sp.growth(spec.lambda1) - sp.removal) * spec.alphas[i - 1]).abs() < 1e-14);
            for s in numerics::linspace(0.0, 3.0, 1002)[1..1001].iter() {
                assert!(spec.eval_h(i, *s).unwrap() < 0.0, "h_{i}({s}) >= 0");
            }
        }
    }

    #[test]
    fn alt_applicability() {
        let (_, spec) = reference_spec();
        assert!(matches!(
            eval_alt_v(AltKind::Hsu, &spec, &spec.alphas, 1.0, &[1.0, 0.0, 0.0]),
            Err(LyapunovError::Inapplicable(_))
        ));
        assert!(matches!(
            eval_alt_v(AltKind::OneSpecies, &spec, &spec.alphas, 1.0, &[1.0, 0.0, 0.0]),
            Err(LyapunovError::Inapplicable(_))
        ));
    }
}
