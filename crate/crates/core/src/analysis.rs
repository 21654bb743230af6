//! Break-even concentrations, the equilibrium catalog and local stability
//! verdicts.

use crate::model::{ModelError, Scenario, Species};
use crate::numerics::{self, NumericError};
use crate::sim;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("species {species}: growth crosses its removal rate {crossings} times; at most two crossings are admissible")]
    TooManyCrossings { species: usize, crossings: usize },
    #[error("species {species}: growth touches its removal rate tangentially near S = {at}")]
    TangentialCrossing { species: usize, at: f64 },
    #[error("species {species}: F_i is singular at S = {s} (uptake vanishes)")]
    Singular { species: usize, s: f64 },
    #[error("{0}")]
    NotApplicable(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Break-even concentrations of one species: growth exceeds removal exactly
/// on `(lambda, mu)`. Absent crossings are `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakEven {
    #[serde(with = "crate::extended")]
    pub lambda: f64,
    #[serde(with = "crate::extended")]
    pub mu: f64,
    /// `min(mu, S⁰)`
    #[serde(with = "crate::extended")]
    pub rho: f64,
}

impl BreakEven {
    pub fn new(lambda: f64, mu: f64, s0: f64) -> Self {
        Self { lambda, mu, rho: mu.min(s0) }
    }

    /// True when `s` lies in the open growth window `(lambda, mu)`.
    pub fn grows_at(&self, s: f64) -> bool {
        self.lambda < s && s < self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakEvenOptions {
    /// Upper end of the scan; `None` means ten times the feed concentration.
    pub search_max: Option<f64>,
    pub grid_n: usize,
    /// Bracket width at which bisection stops.
    pub tol: f64,
}

impl Default for BreakEvenOptions {
    fn default() -> Self {
        Self { search_max: None, grid_n: 4096, tol: 1e-14 }
    }
}

/// Solves `p(S) = D_i` on `[0, search_max]`: grid scan for sign changes of
/// `p(S) - D_i`, then bisection of each bracket.
pub fn compute_breakeven(sp: &Species, s0: f64, opts: &BreakEvenOptions) -> Result<BreakEven, AnalysisError> {
    compute_breakeven_indexed(sp, 0, s0, opts)
}

pub(crate) fn compute_breakeven_indexed(
    sp: &Species,
    index: usize,
    s0: f64,
    opts: &BreakEvenOptions,
) -> Result<BreakEven, AnalysisError> {
    let top = opts.search_max.unwrap_or(10.0 * s0);
    let excess = |s: f64| sp.growth.rate(s) - sp.removal;
    let scan = numerics::scan_sign_changes(excess, 0.0, top, opts.grid_n.max(64), 1e-12 * sp.removal)?;
    if let Some(&at) = scan.tangencies.first() {
        return Err(AnalysisError::TangentialCrossing { species: index, at });
    }
    let roots = scan
        .brackets
        .iter()
        .map(|&(a, b)| numerics::bisect(excess, a, b, opts.tol))
        .collect::<Result<Vec<_>, _>>()?;
    match roots.as_slice() {
        [] => Ok(BreakEven::new(f64::INFINITY, f64::INFINITY, s0)),
        [l] => Ok(BreakEven::new(*l, f64::INFINITY, s0)),
        [l, m] => Ok(BreakEven::new(*l, *m, s0)),
        _ => Err(AnalysisError::TooManyCrossings { species: index, crossings: roots.len() }),
    }
}

pub fn breakevens(sc: &Scenario, opts: &BreakEvenOptions) -> Result<Vec<BreakEven>, AnalysisError> {
    sc.species
        .iter()
        .enumerate()
        .map(|(i, sp)| compute_breakeven_indexed(sp, i, sc.s0, opts))
        .collect()
}

/// `F_i(S) = D (S⁰ - S) / f_i(S)`: the biomass of species `i` at an
/// equilibrium with substrate `S`.
pub fn nutrient_to_biomass(sc: &Scenario, i: usize, s: f64) -> Result<f64, AnalysisError> {
    let f = sc.species[i].eval_uptake(s)?;
    if s <= 0.0 || f == 0.0 {
        return Err(AnalysisError::Singular { species: i, s });
    }
    Ok(sc.d * (sc.s0 - s) / f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumKind {
    Washout,
    /// `S = lambda_i`
    Lower { species: usize },
    /// `S = mu_i`
    Upper { species: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    #[serde(flatten)]
    pub kind: EquilibriumKind,
    pub s: f64,
    pub x: Vec<f64>,
    pub stability: Stability,
    /// Largest absolute component of the vector field at the state.
    pub residual: f64,
    /// The equilibrium coincides with washout (break-even equal to `S⁰`).
    pub coalesces_with_washout: bool,
}

impl Equilibrium {
    /// State vector `(S, x_1, ..., x_n)`.
    pub fn state(&self) -> Vec<f64> {
        std::iter::once(self.s).chain(self.x.iter().copied()).collect()
    }
}

/// Sign test for the two-dimensional survivor block at `E_i*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalStability {
    pub verdict: Stability,
    /// `f_i(λ_i) + f_i'(λ_i) (S⁰ - λ_i)`; positive means stable.
    pub witness: f64,
    /// Central-difference estimate of `F_i'(λ_i)`; negative means stable.
    pub fd_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesEquilibria {
    pub species: usize,
    pub label: String,
    pub breakeven: BreakEven,
    pub lower: Option<Equilibrium>,
    pub upper: Option<Equilibrium>,
    pub local: Option<LocalStability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCatalog {
    pub washout: Equilibrium,
    /// Eigenvalues of the (diagonal) Jacobian at washout: `-D` then
    /// `p_i(S⁰) - D_i`.
    pub washout_eigenvalues: Vec<f64>,
    pub species: Vec<SpeciesEquilibria>,
    /// Break-even values of different species (at or below `S⁰`) coincide,
    /// so the model has a continuum of equilibria.
    pub degenerate: bool,
    pub ties: Vec<(usize, usize)>,
}

impl EquilibriumCatalog {
    pub fn all(&self) -> impl Iterator<Item = &Equilibrium> {
        std::iter::once(&self.washout)
            .chain(self.species.iter().flat_map(|e| e.lower.iter().chain(e.upper.iter())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub breakeven: BreakEvenOptions,
    /// Absolute tolerance for coincident break-even values, as a fraction of
    /// `S⁰`.
    pub tie_rel_tol: f64,
    /// Relative threshold under which a stability witness is marginal.
    pub marginal_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { breakeven: BreakEvenOptions::default(), tie_rel_tol: 1e-8, marginal_tol: 1e-9 }
    }
}

/// Local stability of the single-survivor equilibrium `E_i*`, restricted to
/// the `(S, x_i)` plane.
pub fn survivor_local_stability(
    sc: &Scenario,
    i: usize,
    be: &BreakEven,
    marginal_tol: f64,
) -> Result<LocalStability, AnalysisError> {
    let lambda = be.lambda;
    if !(lambda.is_finite() && lambda < sc.s0) {
        return Err(AnalysisError::NotApplicable(format!(
            "species {i}: local survivor stability needs a finite break-even below S0 (lambda = {lambda})"
        )));
    }
    let sp = &sc.species[i];
    let f = sp.eval_uptake(lambda)?;
    let df = sp.eval_uptake_derivative(lambda)?;
    let gap = sc.s0 - lambda;
    let witness = f + df * gap;
    let h = (1e-6 * lambda.max(1.0)).min(0.5 * lambda).min(0.5 * gap);
    let big_f = |s: f64| sc.d * (sc.s0 - s) / sp.uptake(s);
    let fd_slope = numerics::central_difference(big_f, lambda, h);

    let scale = f.abs() + (df * gap).abs();
    let verdict = if witness.abs() <= marginal_tol * scale {
        Stability::Marginal
    } else if witness > 0.0 && fd_slope < 0.0 {
        Stability::Stable
    } else if witness < 0.0 && fd_slope > 0.0 {
        Stability::Unstable
    } else {
        // The analytic and finite-difference tests disagree: too close to
        // the boundary to call.
        Stability::Marginal
    };
    Ok(LocalStability { verdict, witness, fd_slope })
}

/// Builds the catalog of all boundary equilibria with their stability.
pub fn catalog_equilibria(sc: &Scenario, opts: &AnalysisOptions) -> Result<EquilibriumCatalog, AnalysisError> {
    let bes = breakevens(sc, &opts.breakeven)?;
    catalog_from_breakevens(sc, &bes, opts)
}

pub fn catalog_from_breakevens(
    sc: &Scenario,
    bes: &[BreakEven],
    opts: &AnalysisOptions,
) -> Result<EquilibriumCatalog, AnalysisError> {
    let n = sc.n();
    let tie_tol = opts.tie_rel_tol * sc.s0;
    let residual = |s: f64, x: &[f64]| sim::rhs(sc, s, x).iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let washout_eigenvalues: Vec<f64> = std::iter::once(-sc.d)
        .chain(sc.species.iter().map(|sp| sp.growth(sc.s0) - sp.removal))
        .collect();
    let near = |a: f64, b: f64| (a - b).abs() <= tie_tol;
    let washout_stability = if bes.iter().any(|be| near(be.lambda, sc.s0) || near(be.mu, sc.s0)) {
        Stability::Marginal
    } else if bes.iter().any(|be| be.lambda <= sc.s0 && sc.s0 <= be.mu) {
        Stability::Unstable
    } else {
        Stability::Stable
    };
    let zeros = vec![0.0; n];
    let washout = Equilibrium {
        kind: EquilibriumKind::Washout,
        s: sc.s0,
        residual: residual(sc.s0, &zeros),
        x: zeros,
        stability: washout_stability,
        coalesces_with_washout: false,
    };

    let mut species = Vec::with_capacity(n);
    for (i, be) in bes.iter().enumerate() {
        let boundary = |s: f64| -> Result<(Vec<f64>, bool), AnalysisError> {
            let mut x = vec![0.0; n];
            let coalesces = near(s, sc.s0);
            x[i] = if coalesces { 0.0 } else { nutrient_to_biomass(sc, i, s)? };
            Ok((x, coalesces))
        };
        let mut local = None;
        let lower = if be.lambda.is_finite() && (be.lambda <= sc.s0 || near(be.lambda, sc.s0)) {
            let (x, coalesces) = boundary(be.lambda)?;
            let stability = if coalesces {
                Stability::Marginal
            } else {
                let ls = survivor_local_stability(sc, i, be, opts.marginal_tol)?;
                local = Some(ls);
                // Invasion exponents of the absent species.
                let invasion = sc
                    .species
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, sp)| sp.growth(be.lambda) - sp.removal);
                let mut verdict = ls.verdict;
                for e in invasion {
                    if e.abs() <= opts.marginal_tol * sc.species[i].removal.max(1.0) {
                        if verdict == Stability::Stable {
                            verdict = Stability::Marginal;
                        }
                    } else if e > 0.0 {
                        verdict = Stability::Unstable;
                    }
                }
                verdict
            };
            Some(Equilibrium {
                kind: EquilibriumKind::Lower { species: i },
                s: be.lambda,
                residual: residual(be.lambda, &x),
                x,
                stability,
                coalesces_with_washout: coalesces,
            })
        } else {
            None
        };
        let upper = if be.mu.is_finite() && (be.mu <= sc.s0 || near(be.mu, sc.s0)) {
            let (x, coalesces) = boundary(be.mu)?;
            Some(Equilibrium {
                kind: EquilibriumKind::Upper { species: i },
                s: be.mu,
                residual: residual(be.mu, &x),
                x,
                stability: if coalesces { Stability::Marginal } else { Stability::Unstable },
                coalesces_with_washout: coalesces,
            })
        } else {
            None
        };
        species.push(SpeciesEquilibria {
            species: i,
            label: sc.species[i].label.clone(),
            breakeven: *be,
            lower,
            upper,
            local,
        });
    }

    let mut ties = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let vi = [bes[i].lambda, bes[i].mu];
            let vj = [bes[j].lambda, bes[j].mu];
            let hit = vi.iter().any(|a| {
                a.is_finite() && *a <= sc.s0 + tie_tol && vj.iter().any(|b| b.is_finite() && near(*a, *b))
            });
            if hit {
                ties.push((i, j));
            }
        }
    }

    Ok(EquilibriumCatalog {
        washout,
        washout_eigenvalues,
        species,
        degenerate: !ties.is_empty(),
        ties,
    })
}
