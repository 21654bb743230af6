//! Sufficient conditions for global convergence to the single-survivor
//! equilibrium.
//!
//! Species are relabeled by increasing lower break-even concentration, so
//! index 0 of an [`Ordered`] scenario is the predicted survivor. The checks
//! are:
//!
//! * ordering and window: `λ_1 < λ_2 <= ... <= λ_n` and `λ_1 < S⁰ < μ_1`;
//! * α-intervals: for every other species with `λ_i < S⁰`,
//!   `max g_i` over `(0, λ_1)` must not exceed `min g_i` over `(λ_i, ρ_i)`,
//!   where `ρ_i = min(μ_i, S⁰)` and
//!   `g_i(S) = f_i(S)/f_1(λ_1) · (p_1(S) - D_1)/(p_i(S) - D_i) · (S⁰ - λ_1)/(S⁰ - S)`;
//! * the F-condition: `F(S) = f_1(S)/(S⁰ - S)` stays below `F(λ_1)` on
//!   `(0, λ_1)` and above it on `(λ_1, S⁰)`.
//!
//! The constant-yield, one-species and `g^SM` variants reuse the same
//! extremum machinery.

use crate::analysis::{self, AnalysisError, AnalysisOptions, BreakEven};
use crate::model::Scenario;
use crate::numerics::{self, NumericError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("lowest break-even concentrations tie (λ = {lambda1} and {lambda2}); the survivor is not unique")]
    Degenerate { lambda1: f64, lambda2: f64 },
    #[error("check needs exactly {expected} species, scenario has {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("check is inapplicable: {0}")]
    Inapplicable(String),
    #[error("species {species}: non-finite g at S = {at} (value {value}); growth law outside the admissible class")]
    AssumptionViolation { species: usize, at: f64, value: f64 },
    #[error("species {species}: g has a pole at S = {s}")]
    Singular { species: usize, s: f64 },
}

impl From<crate::numerics::NumericError> for ConditionError {
    fn from(e: crate::numerics::NumericError) -> Self {
        ConditionError::Analysis(AnalysisError::Numeric(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckerOptions {
    pub analysis: AnalysisOptions,
    /// Grid points per interval for extremum scans.
    pub grid_n: usize,
    /// Open intervals are searched on `[a + ε, b - ε]` with `ε = eps_rel · S⁰`.
    pub eps_rel: f64,
    /// Golden-section stopping width, relative to `S⁰`.
    pub refine_rel: f64,
}

impl Default for CheckerOptions {
    fn default() -> Self {
        Self { analysis: AnalysisOptions::default(), grid_n: 4096, eps_rel: 1e-9, refine_rel: 1e-13 }
    }
}

/// A scenario with species sorted by increasing `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordered {
    pub scenario: Scenario,
    pub breakevens: Vec<BreakEven>,
    /// `permutation[k]` is the original index of ordered species `k`.
    pub permutation: Vec<usize>,
}

impl Ordered {
    pub fn lambda1(&self) -> f64 {
        self.breakevens[0].lambda
    }

    pub fn s0(&self) -> f64 {
        self.scenario.s0
    }

    pub fn f1_at_lambda1(&self) -> f64 {
        self.scenario.species[0].uptake(self.lambda1())
    }

    /// `F(S) = f_1(S) / (S⁰ - S)`
    pub fn big_f(&self, s: f64) -> f64 {
        self.scenario.species[0].uptake(s) / (self.s0() - s)
    }

    /// Smallest gap between λ_1 and another species' λ.
    fn lambda_gap(&self) -> f64 {
        self.breakevens.get(1).map_or(f64::INFINITY, |b| b.lambda - self.lambda1())
    }

    fn eps(&self, opts: &CheckerOptions) -> f64 {
        opts.eps_rel * self.s0()
    }
}

/// Sorts species by increasing `λ` (infinite last, stable). Fails when the
/// two lowest finite values tie within `1e-8 · S⁰` (the configured tie
/// tolerance).
pub fn order_species(sc: &Scenario, bes: &[BreakEven], opts: &AnalysisOptions) -> Result<Ordered, ConditionError> {
    let o = order_unchecked(sc, bes);
    let tie_tol = opts.tie_rel_tol * sc.s0;
    if o.lambda1().is_finite() && o.lambda_gap() <= tie_tol {
        return Err(ConditionError::Degenerate { lambda1: o.lambda1(), lambda2: o.breakevens[1].lambda });
    }
    Ok(o)
}

fn order_unchecked(sc: &Scenario, bes: &[BreakEven]) -> Ordered {
    let mut permutation: Vec<usize> = (0..sc.n()).collect();
    permutation.sort_by(|&a, &b| bes[a].lambda.total_cmp(&bes[b].lambda));
    let mut scenario = sc.clone();
    scenario.species = permutation.iter().map(|&k| sc.species[k].clone()).collect();
    scenario.initial.x = permutation.iter().map(|&k| sc.initial.x[k]).collect();
    Ordered { scenario, breakevens: permutation.iter().map(|&k| bes[k]).collect(), permutation }
}

/// Which of the three g-functions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GKind {
    /// `g_i` of the general variable-yield statement.
    General,
    /// `g_i^{WL} = p_i/D_1 · (p_1 - D_1)/(p_i - D_i) · (S⁰ - λ_1)/(S⁰ - S)`
    ConstantYield,
    /// `g_i^{SM} = f_i/f_1 · (p_1 - D_1)/(p_i - D_i)`
    UptakeRatio,
}

fn g_unchecked(o: &Ordered, kind: GKind, i: usize, s: f64) -> f64 {
    let sc = &o.scenario;
    let (first, other) = (&sc.species[0], &sc.species[i]);
    let ratio = (first.growth(s) - first.removal) / (other.growth(s) - other.removal);
    let lambda1 = o.lambda1();
    match kind {
        GKind::General => other.uptake(s) / o.f1_at_lambda1() * ratio * (sc.s0 - lambda1) / (sc.s0 - s),
        GKind::ConstantYield => other.growth(s) / first.removal * ratio * (sc.s0 - lambda1) / (sc.s0 - s),
        GKind::UptakeRatio => other.uptake(s) / first.uptake(s) * ratio,
    }
}

/// Evaluates `g_i(S)` (ordered index `i >= 1`) with domain checks.
pub fn eval_g(o: &Ordered, kind: GKind, i: usize, s: f64) -> Result<f64, ConditionError> {
    let sp = &o.scenario.species[i];
    if !(s > 0.0 && s < o.s0()) || sp.growth(s) - sp.removal == 0.0 {
        return Err(ConditionError::Singular { species: i, s });
    }
    Ok(g_unchecked(o, kind, i, s))
}

/// Feasible range for the weight `α_i` of species `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaInterval {
    /// Index in the ordered scenario.
    pub species: usize,
    /// Index in the scenario as given.
    pub original: usize,
    pub kind: GKind,
    /// Maximum of g over `(0, λ_1)`.
    pub lower: f64,
    pub lower_at: f64,
    /// Minimum of g over `(λ_i, ρ_i)`.
    pub upper: f64,
    pub upper_at: f64,
    pub feasible: bool,
    /// Midpoint of `[lower, upper]` when feasible.
    pub witness: Option<f64>,
}

/// Locates both extrema by a dense scan followed by golden-section
/// refinement. g vanishes at both ends of `(0, λ_1)` and blows up at both
/// ends of `(λ_i, ρ_i)`, so the extrema are interior.
pub fn alpha_interval(o: &Ordered, kind: GKind, i: usize, opts: &CheckerOptions) -> Result<AlphaInterval, ConditionError> {
    let be = o.breakevens[i];
    if i == 0 || !(be.lambda < o.s0()) {
        return Err(ConditionError::Inapplicable(format!(
            "species {i} needs no α constraint (λ = {} is not below S0 = {})",
            be.lambda,
            o.s0()
        )));
    }
    let eps = o.eps(opts);
    let tol = opts.refine_rel * o.s0();
    let g = |s: f64| g_unchecked(o, kind, i, s);
    let wrap = |e: NumericError| match e {
        NumericError::NonFinite { x, value } => ConditionError::AssumptionViolation { species: i, at: x, value },
        other => ConditionError::Analysis(AnalysisError::Numeric(other)),
    };
    let lo = numerics::scan_max(g, eps, o.lambda1() - eps, opts.grid_n, tol).map_err(wrap)?;
    let hi = numerics::scan_min(g, be.lambda + eps, be.rho - eps, opts.grid_n, tol).map_err(wrap)?;
    let feasible = lo.value <= hi.value;
    Ok(AlphaInterval {
        species: i,
        original: o.permutation[i],
        kind,
        lower: lo.value,
        lower_at: lo.at,
        upper: hi.value,
        upper_at: hi.at,
        feasible,
        witness: feasible.then(|| 0.5 * (lo.value + hi.value)),
    })
}

/// Intervals for every species `i >= 2` with `λ_i < S⁰`.
pub fn alpha_intervals(o: &Ordered, kind: GKind, opts: &CheckerOptions) -> Result<Vec<AlphaInterval>, ConditionError> {
    (1..o.scenario.n())
        .filter(|&i| o.breakevens[i].lambda < o.s0())
        .map(|i| alpha_interval(o, kind, i, opts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FCondition {
    /// `f_1'(S)(S⁰ - S) + f_1(S) > 0` at every grid point, i.e. F increasing.
    HoldsBySufficientTest,
    /// Direct comparison with `F(λ_1)` passed.
    Holds,
    /// `F(at)` is on the wrong side of `F(λ_1)`.
    FailsAt { at: f64, value: f64, reference: f64 },
}

impl FCondition {
    pub fn holds(&self) -> bool {
        !matches!(self, FCondition::FailsAt { .. })
    }
}

/// Checks that `F(S) < F(λ_1)` on `(0, λ_1)` and `F(S) > F(λ_1)` on
/// `(λ_1, S⁰)`. First tries the sufficient test `F' > 0` on a grid, then
/// compares directly, refining the extremum on each side.
pub fn check_f_condition(o: &Ordered, opts: &CheckerOptions) -> Result<FCondition, ConditionError> {
    let lambda1 = o.lambda1();
    let s0 = o.s0();
    if !(lambda1 < s0) {
        return Err(ConditionError::Inapplicable(format!("F-condition needs λ_1 < S0 (λ_1 = {lambda1})")));
    }
    let sp = &o.scenario.species[0];
    let eps = o.eps(opts);
    let increasing = numerics::linspace(eps, s0 - eps, opts.grid_n)
        .into_iter()
        .all(|s| sp.uptake_slope(s) * (s0 - s) + sp.uptake(s) > 0.0);
    if increasing {
        return Ok(FCondition::HoldsBySufficientTest);
    }

    let reference = o.big_f(lambda1);
    let margin = 1e-12 * reference.abs();
    let f = |s: f64| o.big_f(s);
    let tol = opts.refine_rel * s0;
    let n = 4 * opts.grid_n;
    // First grid violation on either side, in increasing S.
    for s in numerics::linspace(eps, s0 - eps, n) {
        if (s - lambda1).abs() < eps {
            continue;
        }
        let v = f(s);
        let bad = if s < lambda1 { v >= reference - margin } else { v <= reference + margin };
        if bad {
            return Ok(FCondition::FailsAt { at: s, value: v, reference });
        }
    }
    let below = numerics::scan_max(f, eps, lambda1 - eps, n, tol)?;
    if below.value >= reference - margin {
        return Ok(FCondition::FailsAt { at: below.at, value: below.value, reference });
    }
    let above = numerics::scan_min(f, lambda1 + eps, s0 - eps, n, tol)?;
    if above.value <= reference + margin {
        return Ok(FCondition::FailsAt { at: above.at, value: above.value, reference });
    }
    Ok(FCondition::Holds)
}

/// Predicted limit state, in the scenario's original species order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedLimit {
    pub survivor: usize,
    pub label: String,
    pub s: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub permutation: Vec<usize>,
    /// Break-evens in ordered labeling.
    pub breakevens: Vec<BreakEven>,
    pub ordering_ok: bool,
    pub window_ok: bool,
    pub alpha: Vec<AlphaInterval>,
    pub f_condition: Option<FCondition>,
    pub verdict: bool,
    pub predicted_limit: Option<PredictedLimit>,
}

fn predicted_limit(o: &Ordered) -> Result<PredictedLimit, ConditionError> {
    let survivor = o.permutation[0];
    let mut x = vec![0.0; o.scenario.n()];
    x[survivor] = analysis::nutrient_to_biomass(&o.scenario, 0, o.lambda1())?;
    Ok(PredictedLimit { survivor, label: o.scenario.species[0].label.clone(), s: o.lambda1(), x })
}

/// Orders the species and refuses a tie for the lowest `λ` when it matters
/// (both below `S⁰`).
fn prepare(sc: &Scenario, opts: &CheckerOptions) -> Result<Ordered, ConditionError> {
    let bes = analysis::breakevens(sc, &opts.analysis.breakeven)?;
    let o = order_unchecked(sc, &bes);
    let tie_tol = opts.analysis.tie_rel_tol * sc.s0;
    if o.lambda1() < sc.s0 && o.lambda_gap() <= tie_tol {
        return Err(ConditionError::Degenerate { lambda1: o.lambda1(), lambda2: o.breakevens[1].lambda });
    }
    Ok(o)
}

fn ordering_ok(o: &Ordered, opts: &CheckerOptions) -> bool {
    o.lambda1().is_finite() && o.lambda_gap() > opts.analysis.tie_rel_tol * o.s0()
}

fn window_ok(o: &Ordered) -> bool {
    o.lambda1() < o.s0() && o.s0() < o.breakevens[0].mu
}

/// Runs every hypothesis of the general variable-yield statement.
pub fn check_theorem(sc: &Scenario, opts: &CheckerOptions) -> Result<TheoremReport, ConditionError> {
    let o = prepare(sc, opts)?;
    check_theorem_ordered(&o, opts)
}

pub fn check_theorem_ordered(o: &Ordered, opts: &CheckerOptions) -> Result<TheoremReport, ConditionError> {
    let ordering_ok = ordering_ok(o, opts);
    let window_ok = window_ok(o);
    let (alpha, f_condition) = if o.lambda1() < o.s0() {
        (alpha_intervals(o, GKind::General, opts)?, Some(check_f_condition(o, opts)?))
    } else {
        (Vec::new(), None)
    };
    let verdict = ordering_ok
        && window_ok
        && alpha.iter().all(|a| a.feasible)
        && f_condition.is_some_and(|f| f.holds());
    Ok(TheoremReport {
        permutation: o.permutation.clone(),
        breakevens: o.breakevens.clone(),
        ordering_ok,
        window_ok,
        alpha,
        f_condition,
        verdict,
        predicted_limit: if verdict { Some(predicted_limit(o)?) } else { None },
    })
}

/// One-species criterion: `1 - F(S)/F(λ_1)` changes sign exactly once on
/// `(0, S⁰)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSpeciesReport {
    pub window_ok: bool,
    pub sign_changes: usize,
    /// Points where the expression touches zero without changing sign.
    pub tangencies: Vec<f64>,
    pub verdict: bool,
}

/// `1 - f_1(S)(S⁰ - λ_1) / (f_1(λ_1)(S⁰ - S))`
pub fn one_species_expression(o: &Ordered, s: f64) -> f64 {
    let s0 = o.s0();
    let l = o.lambda1();
    1.0 - o.scenario.species[0].uptake(s) * (s0 - l) / (o.f1_at_lambda1() * (s0 - s))
}

pub fn check_corollary_one_species(sc: &Scenario, opts: &CheckerOptions) -> Result<OneSpeciesReport, ConditionError> {
    if sc.n() != 1 {
        return Err(ConditionError::WrongArity { expected: 1, got: sc.n() });
    }
    let o = prepare(sc, opts)?;
    let window_ok = window_ok(&o);
    if !window_ok {
        return Ok(OneSpeciesReport { window_ok, sign_changes: 0, tangencies: Vec::new(), verdict: false });
    }
    let eps = o.eps(opts);
    let scan = numerics::scan_sign_changes(|s| one_species_expression(&o, s), eps, o.s0() - eps, 4 * opts.grid_n, 1e-12)?;
    let sign_changes = scan.brackets.len();
    let verdict = sign_changes == 1 && scan.tangencies.is_empty();
    Ok(OneSpeciesReport { window_ok, sign_changes, tangencies: scan.tangencies, verdict })
}

/// Report shared by the two multi-species corollaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub kind: GKind,
    pub permutation: Vec<usize>,
    pub ordering_ok: bool,
    pub window_ok: bool,
    pub alpha: Vec<AlphaInterval>,
    /// Only the uptake-ratio variant requires the F-condition.
    pub f_condition: Option<FCondition>,
    /// Largest relative deviation of the identity linking this variant's g
    /// to the general one, over a grid avoiding poles.
    pub identity_max_rel_dev: f64,
    pub verdict: bool,
    pub notes: Vec<String>,
}

/// Grid of `n` points in `(0, S⁰)` that keeps clear of the poles of every
/// g-function (`λ_i`, `μ_i` for `i >= 2`) and of `λ_1`.
pub fn pole_free_grid(o: &Ordered, n: usize) -> Vec<f64> {
    let s0 = o.s0();
    let clear = 1e-6 * s0;
    let poles: Vec<f64> = o.breakevens.iter().flat_map(|b| [b.lambda, b.mu]).filter(|v| v.is_finite()).collect();
    numerics::linspace(0.0, s0, n + 2)[1..=n]
        .iter()
        .copied()
        .filter(|s| poles.iter().all(|p| (s - p).abs() > clear))
        .collect()
}

fn rel_dev(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Constant-yield variant, built on `g_i^{WL}`. Inapplicable when any yield
/// depends on `S`.
pub fn check_corollary_constant_yield(sc: &Scenario, opts: &CheckerOptions) -> Result<CorollaryReport, ConditionError> {
    if let Some(sp) = sc.species.iter().find(|sp| !sp.yield_law.is_constant()) {
        return Err(ConditionError::Inapplicable(format!("species {:?} has a substrate-dependent yield", sp.label)));
    }
    let o = prepare(sc, opts)?;
    let ordering_ok = ordering_ok(&o, opts);
    let window_ok = window_ok(&o);
    let alpha = if o.lambda1() < o.s0() { alpha_intervals(&o, GKind::ConstantYield, opts)? } else { Vec::new() };
    let y1 = o.scenario.species[0].yield_at(0.0);
    let mut dev = 0.0f64;
    if o.lambda1() < o.s0() {
        for i in 1..o.scenario.n() {
            let yi = o.scenario.species[i].yield_at(0.0);
            for s in pole_free_grid(&o, 1000) {
                let g = g_unchecked(&o, GKind::General, i, s);
                let wl = g_unchecked(&o, GKind::ConstantYield, i, s);
                dev = dev.max(rel_dev(g, y1 / yi * wl));
            }
        }
    }
    let verdict = ordering_ok && window_ok && alpha.iter().all(|a| a.feasible);
    Ok(CorollaryReport {
        kind: GKind::ConstantYield,
        permutation: o.permutation.clone(),
        ordering_ok,
        window_ok,
        alpha,
        f_condition: None,
        identity_max_rel_dev: dev,
        verdict,
        notes: Vec::new(),
    })
}

/// Variant built on the uptake ratio `g_i^{SM}`, plus the F-condition.
/// Species with `λ_i >= S⁰` get no α constraint, as in the general check.
pub fn check_corollary_uptake_ratio(sc: &Scenario, opts: &CheckerOptions) -> Result<CorollaryReport, ConditionError> {
    let o = prepare(sc, opts)?;
    let ordering_ok = ordering_ok(&o, opts);
    let window_ok = window_ok(&o);
    let mut notes = Vec::new();
    let skipped: Vec<usize> = (1..o.scenario.n()).filter(|&i| !(o.breakevens[i].lambda < o.s0())).collect();
    if !skipped.is_empty() {
        notes.push(format!(
            "species {:?} (original indices) have λ >= S0 and are not constrained",
            skipped.iter().map(|&i| o.permutation[i]).collect::<Vec<_>>()
        ));
    }
    let (alpha, f_condition) = if o.lambda1() < o.s0() {
        (alpha_intervals(&o, GKind::UptakeRatio, opts)?, Some(check_f_condition(&o, opts)?))
    } else {
        (Vec::new(), None)
    };
    let mut dev = 0.0f64;
    if o.lambda1() < o.s0() {
        let c = (o.s0() - o.lambda1()) / o.f1_at_lambda1();
        for i in 1..o.scenario.n() {
            for s in pole_free_grid(&o, 1000) {
                let g = g_unchecked(&o, GKind::General, i, s);
                let sm = g_unchecked(&o, GKind::UptakeRatio, i, s);
                dev = dev.max(rel_dev(g, c * o.big_f(s) * sm));
            }
        }
    }
    let verdict = ordering_ok
        && window_ok
        && alpha.iter().all(|a| a.feasible)
        && f_condition.is_some_and(|f| f.holds());
    Ok(CorollaryReport {
        kind: GKind::UptakeRatio,
        permutation: o.permutation.clone(),
        ordering_ok,
        window_ok,
        alpha,
        f_condition,
        identity_max_rel_dev: dev,
        verdict,
        notes,
    })
}

/// Connected-union criterion for equal removal rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionReport {
    pub equal_removal: bool,
    /// Species with `λ_i < S⁰`.
    pub members: Vec<usize>,
    /// Union of `(λ_i, μ_i)` over members is an interval.
    pub connected: bool,
    pub contains_feed: bool,
    pub verdict: bool,
}

/// Requires `D_i = D` for all `i`, the union `Q` of `(λ_i, μ_i)` over
/// `{i : λ_i < S⁰}` to be connected, and `S⁰ ∈ Q`.
pub fn check_butler_wolkowicz(sc: &Scenario, bes: &[BreakEven]) -> UnionReport {
    let equal_removal = sc.species.iter().all(|sp| sp.removal == sc.d);
    let members: Vec<usize> = (0..sc.n()).filter(|&i| bes[i].lambda < sc.s0).collect();
    let mut intervals: Vec<(f64, f64)> = members.iter().map(|&i| (bes[i].lambda, bes[i].mu)).collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut connected = !intervals.is_empty();
    if let Some(&(_, first_hi)) = intervals.first() {
        let mut reach = first_hi;
        for &(lo, hi) in &intervals[1..] {
            // Open intervals: touching endpoints leave a gap.
            if lo >= reach {
                connected = false;
                break;
            }
            reach = reach.max(hi);
        }
    }
    let contains_feed = intervals.iter().any(|&(lo, hi)| lo < sc.s0 && sc.s0 < hi);
    UnionReport {
        equal_removal,
        members,
        connected,
        contains_feed,
        verdict: equal_removal && connected && contains_feed,
    }
}
