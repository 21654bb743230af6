//! Command-line interface: scenario files, the `analyze`, `check`,
//! `simulate`, `sweep` and `falsify` commands, and their JSON reports.
//!
//! Exit codes: 0 success, 1 a checked verdict is "no", 2 parse or
//! validation failure, 3 inapplicable check, 4 non-convergence, 5 numeric
//! failure.

use crate::analysis::{self, AnalysisError, EquilibriumCatalog, EquilibriumKind};
use crate::conditions::{
    self, CheckerOptions, ConditionError, CorollaryReport, OneSpeciesReport, TheoremReport, UnionReport,
};
use crate::lyapunov::{LyapunovMonitor, LyapunovSpec};
use crate::model::{GrowthLaw, InitialState, Scenario, Species, YieldLaw};
use crate::sim::{self, Convergence, Lemma1Report, Monitor, SimError, SolverOptions, State, Stats, Termination};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_NO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INAPPLICABLE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

/// Version of the scenario file format understood by this build.
pub const FORMAT_VERSION: u32 = 1;

/// Samples per run when no spacing is given, so that the convergence window
/// covers only the end of the run.
pub const DEFAULT_SAMPLES: f64 = 4000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(EXIT_INVALID, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConditionError> for CliError {
    fn from(e: ConditionError) -> Self {
        let code = match &e {
            ConditionError::Analysis(a) => return a.clone().into(),
            ConditionError::Singular { .. } => EXIT_NUMERIC,
            _ => EXIT_INAPPLICABLE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let code = match &e {
            AnalysisError::Numeric(_) | AnalysisError::Singular { .. } => EXIT_NUMERIC,
            AnalysisError::Model(_) => EXIT_INVALID,
            _ => EXIT_INAPPLICABLE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Dimension { .. } => EXIT_INVALID,
            _ => EXIT_NUMERIC,
        };
        Self::new(code, e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Input files

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverOverrides {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub t_end: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, mut o: SolverOptions) -> SolverOptions {
        o.rtol = self.rtol.unwrap_or(o.rtol);
        o.atol = self.atol.unwrap_or(o.atol);
        o.t_end = self.t_end.unwrap_or(o.t_end);
        o
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckerOverrides {
    /// Grid points per scanned interval.
    pub grid_n: Option<usize>,
    /// Root-bracketing tolerance for break-even concentrations.
    pub tol: Option<f64>,
}

impl CheckerOverrides {
    pub fn apply(&self, mut o: CheckerOptions) -> CheckerOptions {
        if let Some(n) = self.grid_n {
            o.grid_n = n;
            o.analysis.breakeven.grid_n = n;
        }
        o.analysis.breakeven.tol = self.tol.unwrap_or(o.analysis.breakeven.tol);
        o
    }
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub s0: f64,
    pub d: f64,
    pub species: Vec<Species>,
    pub initial: InitialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<CheckerOverrides>,
}

impl ScenarioFile {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            version: FORMAT_VERSION,
            s0: sc.s0,
            d: sc.d,
            species: sc.species.clone(),
            initial: sc.initial.clone(),
            solver: None,
            checker: None,
        }
    }

    /// Validated scenario plus effective solver and checker settings.
    pub fn resolve(self) -> Result<(Scenario, SolverOptions, CheckerOptions), CliError> {
        if self.version != FORMAT_VERSION {
            return Err(CliError::invalid(format!(
                "unsupported scenario format version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        let solver = self.solver.unwrap_or_default().apply(SolverOptions::default());
        let checker = self.checker.unwrap_or_default().apply(CheckerOptions::default());
        let sc = Scenario { s0: self.s0, d: self.d, species: self.species, initial: self.initial };
        let sc = sc.validate().map_err(|e| {
            let lines: Vec<String> = e.0.iter().map(|v| format!("  {v}")).collect();
            CliError::invalid(format!("invalid scenario:\n{}", lines.join("\n")))
        })?;
        if !(solver.rtol > 0.0 && solver.atol > 0.0 && solver.t_end > 0.0) {
            return Err(CliError::invalid("solver: rtol, atol and t_end must be positive"));
        }
        if checker.grid_n < 8 {
            return Err(CliError::invalid("checker: grid_n must be at least 8"));
        }
        Ok((sc, solver, checker))
    }
}

/// Parses JSON text, collecting the paths of keys the target type does not
/// know. Strict mode turns them into an error; lenient mode returns them as
/// warnings.
pub fn parse_document<T: DeserializeOwned>(text: &str, origin: &str, lenient: bool) -> Result<(T, Vec<String>), CliError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .and_then(|v| de.end().map(|_| v))
        .map_err(|e| CliError::invalid(format!("{origin}: {e}")))?;
    if unknown.is_empty() {
        return Ok((value, unknown));
    }
    let listed = unknown.join(", ");
    if lenient {
        Ok((value, unknown.iter().map(|k| format!("{origin}: unknown key `{k}` ignored")).collect()))
    } else {
        Err(CliError::invalid(format!("{origin}: unknown key(s) {listed} (use --lenient to ignore)")))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))
}

pub fn load_scenario_file(path: &Path, lenient: bool) -> Result<(ScenarioFile, Vec<String>), CliError> {
    parse_document(&read_text(path)?, &path.display().to_string(), lenient)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    pub grid_n: usize,
    pub breakeven_tol: f64,
    pub eps_rel: f64,
    pub convergence_eps: f64,
    pub convergence_window: usize,
}

impl Tolerances {
    fn new(solver: &SolverOptions, checker: &CheckerOptions, conv: &ConvergenceSettings) -> Self {
        Self {
            rtol: solver.rtol,
            atol: solver.atol,
            t_end: solver.t_end,
            grid_n: checker.grid_n,
            breakeven_tol: checker.analysis.breakeven.tol,
            eps_rel: checker.eps_rel,
            convergence_eps: conv.eps,
            convergence_window: conv.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: Option<String>,
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
    pub warnings: Vec<String>,
    /// Seconds since the Unix epoch. The only field that varies between
    /// otherwise identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub provenance: Provenance,
    pub result: T,
}

fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn provenance(command: &str, input: &Path, seed: Option<u64>, tol: Tolerances, warnings: Vec<String>) -> Provenance {
    Provenance {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        input: Some(input.display().to_string()),
        seed,
        tolerances: tol,
        warnings,
        timestamp: timestamp(),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn emit<T: Serialize>(report: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = to_json(report);
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::invalid(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeResult {
    pub labels: Vec<String>,
    pub catalog: EquilibriumCatalog,
}

pub fn analyze(sc: &Scenario, checker: &CheckerOptions) -> Result<AnalyzeResult, CliError> {
    let catalog = analysis::catalog_equilibria(sc, &checker.analysis)?;
    Ok(AnalyzeResult { labels: sc.species.iter().map(|s| s.label.clone()).collect(), catalog })
}

// ---------------------------------------------------------------------------
// check

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    /// General theorem.
    Theorem,
    /// One-species sign-change criterion.
    Apw,
    /// Constant-yield corollary.
    Wl,
    /// Uptake-ratio corollary.
    Sm,
    /// Connected-union criterion for equal removal rates.
    Bw,
    All,
}

impl Which {
    const SINGLE: [Which; 5] = [Which::Theorem, Which::Apw, Which::Wl, Which::Sm, Which::Bw];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckDetail {
    Theorem(TheoremReport),
    OneSpecies(OneSpeciesReport),
    Corollary(CorollaryReport),
    Union(UnionReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CheckStatus {
    Yes { detail: CheckDetail },
    No { detail: CheckDetail },
    Inapplicable { reason: String, code: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Which,
    #[serde(flatten)]
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub which: Which,
    pub checks: Vec<CheckOutcome>,
}

impl CheckResult {
    /// 0 when every applicable verdict is yes; a single inapplicable check
    /// reports its own code.
    pub fn exit_code(&self) -> i32 {
        let mut any_yes = false;
        for c in &self.checks {
            match &c.status {
                CheckStatus::No { .. } => return EXIT_VERDICT_NO,
                CheckStatus::Yes { .. } => any_yes = true,
                CheckStatus::Inapplicable { code, .. } if self.which != Which::All => return *code,
                CheckStatus::Inapplicable { .. } => {}
            }
        }
        if any_yes { EXIT_OK } else { EXIT_INAPPLICABLE }
    }
}

fn run_one_check(sc: &Scenario, which: Which, opts: &CheckerOptions) -> CheckOutcome {
    let verdict = |yes: bool, detail: CheckDetail| if yes { CheckStatus::Yes { detail } } else { CheckStatus::No { detail } };
    let status: Result<CheckStatus, CliError> = (|| {
        Ok(match which {
            Which::Theorem => {
                let r = conditions::check_theorem(sc, opts)?;
                verdict(r.verdict, CheckDetail::Theorem(r))
            }
            Which::Apw => {
                let r = conditions::check_corollary_one_species(sc, opts)?;
                verdict(r.verdict, CheckDetail::OneSpecies(r))
            }
            Which::Wl => {
                let r = conditions::check_corollary_constant_yield(sc, opts)?;
                verdict(r.verdict, CheckDetail::Corollary(r))
            }
            Which::Sm => {
                let r = conditions::check_corollary_uptake_ratio(sc, opts)?;
                verdict(r.verdict, CheckDetail::Corollary(r))
            }
            Which::Bw => {
                let bes = analysis::breakevens(sc, &opts.analysis.breakeven)?;
                let r = conditions::check_butler_wolkowicz(sc, &bes);
                if !r.equal_removal {
                    return Err(CliError::new(EXIT_INAPPLICABLE, "needs every removal rate equal to the dilution rate"));
                }
                verdict(r.verdict, CheckDetail::Union(r))
            }
            Which::All => unreachable!("expanded by the caller"),
        })
    })();
    let status = status.unwrap_or_else(|e| CheckStatus::Inapplicable { reason: e.message, code: e.code });
    CheckOutcome { check: which, status }
}

pub fn check(sc: &Scenario, which: Which, opts: &CheckerOptions) -> CheckResult {
    let selected: Vec<Which> = if which == Which::All { Which::SINGLE.to_vec() } else { vec![which] };
    CheckResult { which, checks: selected.into_iter().map(|w| run_one_check(sc, w, opts)).collect() }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSettings {
    pub eps: f64,
    pub window: usize,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self { eps: 1e-6, window: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub samples: usize,
    pub in_domain: usize,
    /// Largest `(V_{k+1} - V_k) / (1 + |V_k|)` over consecutive samples in
    /// the domain.
    pub max_relative_increase: f64,
    pub nonincreasing: bool,
    pub max_vdot: f64,
}

fn summarize_lyapunov(samples: &[Option<sim::LyapunovSample>]) -> LyapunovSummary {
    let inside: Vec<_> = samples.iter().flatten().collect();
    let max_relative_increase = inside
        .windows(2)
        .map(|w| (w[1].v - w[0].v) / (1.0 + w[0].v.abs()))
        .fold(f64::NEG_INFINITY, f64::max);
    let max_relative_increase = if max_relative_increase.is_finite() { max_relative_increase } else { 0.0 };
    LyapunovSummary {
        samples: samples.len(),
        in_domain: inside.len(),
        max_relative_increase,
        nonincreasing: max_relative_increase <= 1e-9,
        max_vdot: inside.iter().map(|s| s.vdot).fold(f64::NEG_INFINITY, f64::max).max(f64::MIN),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Prediction {
    Predicted { limit: conditions::PredictedLimit },
    NotPredicted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub prediction: Prediction,
    pub termination: Termination,
    pub stats: Stats,
    pub samples: usize,
    pub final_state: State,
    pub convergence: Convergence,
    /// Whether the limit matches the prediction; `None` without one.
    pub matches_prediction: Option<bool>,
    pub lemma1: Lemma1Report,
    pub lyapunov: Option<LyapunovSummary>,
    pub csv: Option<String>,
}

impl SimulateResult {
    pub fn exit_code(&self) -> i32 {
        match (&self.convergence, self.matches_prediction) {
            (Convergence::Converged { .. }, Some(false)) => EXIT_NOT_CONVERGED,
            (Convergence::Converged { .. }, _) => EXIT_OK,
            (Convergence::NotConverged { .. }, _) => EXIT_NOT_CONVERGED,
        }
    }
}

/// Integrates a scenario and classifies its limit. With `lyapunov`, the
/// theorem's hypotheses must hold so that admissible weights exist.
pub fn simulate(
    sc: &Scenario,
    solver: &SolverOptions,
    checker: &CheckerOptions,
    conv: &ConvergenceSettings,
    lyapunov: bool,
) -> Result<(SimulateResult, sim::Trajectory), CliError> {
    let catalog = analysis::catalog_equilibria(sc, &checker.analysis)?;
    let bes: Vec<_> = catalog.species.iter().map(|e| e.breakeven).collect();
    let theorem = conditions::check_theorem(sc, checker);
    let prediction = match &theorem {
        Ok(r) => match &r.predicted_limit {
            Some(limit) => Prediction::Predicted { limit: limit.clone() },
            None => Prediction::NotPredicted { reason: "hypotheses do not hold".into() },
        },
        Err(e) => Prediction::NotPredicted { reason: e.to_string() },
    };
    let spec = if lyapunov {
        let report = match &theorem {
            Ok(r) if r.verdict => r,
            Ok(_) => {
                return Err(CliError::new(EXIT_INAPPLICABLE, "--lyapunov needs a scenario passing the theorem check"))
            }
            Err(e) => return Err(CliError::new(EXIT_INAPPLICABLE, format!("--lyapunov: {e}"))),
        };
        let o = conditions::order_species(sc, &bes, &checker.analysis)?;
        Some(LyapunovSpec::from_theorem(&o, report, checker).map_err(|e| CliError::new(EXIT_NUMERIC, e.to_string()))?)
    } else {
        None
    };
    let monitor = spec.as_ref().map(|spec| LyapunovMonitor { spec });
    let traj = sim::integrate(sc, solver, monitor.as_ref().map(|m| m as &dyn Monitor))?;
    let convergence = sim::detect_convergence(&traj, sc, &catalog, conv.eps, conv.window);
    let matches_prediction = match (&prediction, convergence.equilibrium()) {
        (Prediction::Predicted { limit }, Some(eq)) => {
            Some(*eq == EquilibriumKind::Lower { species: limit.survivor })
        }
        (Prediction::Predicted { .. }, None) => Some(false),
        _ => None,
    };
    let lemma1 = sim::verify_lemma1(&traj, sc, &bes, solver.rtol.max(1e-9));
    let result = SimulateResult {
        prediction,
        termination: traj.termination,
        stats: traj.stats,
        samples: traj.samples.len(),
        final_state: traj.last().clone(),
        convergence,
        matches_prediction,
        lemma1,
        lyapunov: traj.lyapunov.as_deref().map(summarize_lyapunov),
        csv: None,
    };
    Ok((result, traj))
}

// ---------------------------------------------------------------------------
// sweep

/// One `--vary key=lo:hi:n` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarySpec {
    pub key: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl VarySpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::invalid(format!("--vary {text:?}: expected key=lo:hi:n"));
        let (key, range) = text.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if key.is_empty() || parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        Ok(Self { key: key.trim().into(), lo, hi, n })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            vec![self.lo]
        } else {
            crate::numerics::linspace(self.lo, self.hi, self.n)
        }
    }
}

/// Replaces the number at a dotted path such as `species.0.growth.params.a`.
pub fn set_path(doc: &mut serde_json::Value, key: &str, value: f64) -> Result<(), CliError> {
    let mut node = doc;
    for seg in key.split('.') {
        node = match node {
            serde_json::Value::Object(map) => map.get_mut(seg),
            serde_json::Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::invalid(format!("--vary: key {key:?} does not exist in the template")))?;
    }
    if !node.is_number() {
        return Err(CliError::invalid(format!("--vary: {key:?} is not a number in the template")));
    }
    *node = serde_json::Value::from(value);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub key: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub params: Vec<ParamValue>,
    pub ordering_ok: Option<bool>,
    pub window_ok: Option<bool>,
    pub theorem: Option<bool>,
    pub predicted_survivor: Option<usize>,
    pub convergence: Option<Convergence>,
    pub matches_prediction: Option<bool>,
    pub exit_code: i32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<VarySpec>,
    pub points: Vec<SweepPoint>,
    pub theorem_yes: usize,
    pub converged: usize,
    pub mismatches: usize,
}

/// Cartesian product of the axes, first axis slowest. No axes gives the
/// single empty point.
pub fn grid(axes: &[VarySpec]) -> Vec<Vec<ParamValue>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let vals = axis.values();
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(ParamValue { key: axis.key.clone(), value: *v });
                    q
                })
            })
            .collect();
    }
    points
}

fn sweep_point(
    template: &serde_json::Value,
    index: usize,
    params: Vec<ParamValue>,
    conv: &ConvergenceSettings,
) -> SweepPoint {
    let mut point = SweepPoint {
        index,
        params,
        ordering_ok: None,
        window_ok: None,
        theorem: None,
        predicted_survivor: None,
        convergence: None,
        matches_prediction: None,
        exit_code: EXIT_OK,
        error: None,
    };
    let run = |point: &mut SweepPoint| -> Result<(), CliError> {
        let mut doc = template.clone();
        for p in &point.params {
            set_path(&mut doc, &p.key, p.value)?;
        }
        let file: ScenarioFile =
            serde_json::from_value(doc).map_err(|e| CliError::invalid(format!("point {index}: {e}")))?;
        let (sc, mut solver, checker) = file.resolve()?;
        solver.sample_dt = Some(solver.t_end / DEFAULT_SAMPLES);
        match conditions::check_theorem(&sc, &checker) {
            Ok(r) => {
                point.ordering_ok = Some(r.ordering_ok);
                point.window_ok = Some(r.window_ok);
                point.theorem = Some(r.verdict);
                point.predicted_survivor = r.predicted_limit.as_ref().map(|l| l.survivor);
            }
            Err(e) => point.error = Some(e.to_string()),
        }
        let (res, _) = simulate(&sc, &solver, &checker, conv, false)?;
        point.exit_code = res.exit_code();
        point.matches_prediction = res.matches_prediction;
        point.convergence = Some(res.convergence);
        Ok(())
    };
    if let Err(e) = run(&mut point) {
        point.exit_code = e.code;
        point.error = Some(e.message);
    }
    point
}

/// Number of worker threads: `CHEMOSTAT_JOBS` wins over the flag.
pub fn resolve_jobs(flag: usize) -> Result<usize, CliError> {
    match std::env::var("CHEMOSTAT_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::invalid(format!("CHEMOSTAT_JOBS={v:?} is not a positive integer"))),
        Err(_) => Ok(flag.max(1)),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::new(EXIT_NUMERIC, format!("cannot start worker pool: {e}")))
}

pub fn sweep(
    template: &serde_json::Value,
    axes: Vec<VarySpec>,
    jobs: usize,
    cap: usize,
    conv: &ConvergenceSettings,
) -> Result<SweepResult, CliError> {
    let count = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.n)).unwrap_or(usize::MAX);
    if count > cap {
        return Err(CliError::invalid(format!("sweep has {count} points, above the cap of {cap} (raise --cap)")));
    }
    let points = grid(&axes);
    let points: Vec<SweepPoint> = pool(jobs)?.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(i, p)| sweep_point(template, i, p, conv))
            .collect()
    });
    Ok(SweepResult {
        theorem_yes: points.iter().filter(|p| p.theorem == Some(true)).count(),
        converged: points.iter().filter(|p| matches!(p.convergence, Some(Convergence::Converged { .. }))).count(),
        mismatches: points.iter().filter(|p| p.matches_prediction == Some(false)).count(),
        axes,
        points,
    })
}

// ---------------------------------------------------------------------------
// falsify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthFamily {
    Monod,
    Haldane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YieldFamily {
    Constant,
    Linear,
    Quadratic,
}

/// Closed sampling interval `[lo, hi]`.
pub type Span = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonodRanges {
    pub a: Span,
    pub b: Span,
}

impl Default for MonodRanges {
    fn default() -> Self {
        Self { a: [1.0, 4.0], b: [0.5, 3.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaldaneRanges {
    pub a: Span,
    pub b: Span,
    pub c: Span,
}

impl Default for HaldaneRanges {
    fn default() -> Self {
        Self { a: [1.0, 5.0], b: [0.5, 3.0], c: [1.0, 10.0] }
    }
}

/// Yield `a`, plus slope `b` for the linear and quadratic families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldRanges {
    pub a: Span,
    pub b: Span,
}

impl Default for YieldRanges {
    fn default() -> Self {
        Self { a: [0.5, 2.0], b: [0.0, 1.0] }
    }
}

fn default_species() -> [usize; 2] {
    [1, 3]
}
fn default_families() -> Vec<GrowthFamily> {
    vec![GrowthFamily::Monod, GrowthFamily::Haldane]
}
fn default_yields() -> Vec<YieldFamily> {
    vec![YieldFamily::Constant]
}
fn default_initial_x() -> Span {
    [0.05, 1.0]
}
fn default_attempts() -> usize {
    1000
}

/// Random scenario generator for `falsify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Inclusive range of the number of species.
    #[serde(default = "default_species")]
    pub species: [usize; 2],
    pub s0: Span,
    pub d: Span,
    /// Removal rates; absent means `D_i = D`.
    #[serde(default)]
    pub removal: Option<Span>,
    #[serde(default = "default_families")]
    pub families: Vec<GrowthFamily>,
    #[serde(default)]
    pub monod: MonodRanges,
    #[serde(default)]
    pub haldane: HaldaneRanges,
    #[serde(default = "default_yields")]
    pub yields: Vec<YieldFamily>,
    #[serde(default)]
    pub yield_ranges: YieldRanges,
    /// Initial biomasses; the initial substrate is drawn from `(0, 2 S⁰)`.
    #[serde(default = "default_initial_x")]
    pub initial_x: Span,
    /// Redraw until the theorem's hypotheses hold.
    #[serde(default)]
    pub require_theorem: bool,
    /// Redraws allowed per sample.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Runs that have not converged by `t_end` are continued in chunks of
    /// `t_end` up to this time (default `50 t_end`).
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub solver: Option<SolverOverrides>,
    #[serde(default)]
    pub checker: Option<CheckerOverrides>,
}

impl SamplerConfig {
    fn validate(&self) -> Result<(), CliError> {
        let spans = [
            ("s0", self.s0),
            ("d", self.d),
            ("monod.a", self.monod.a),
            ("monod.b", self.monod.b),
            ("haldane.a", self.haldane.a),
            ("haldane.b", self.haldane.b),
            ("haldane.c", self.haldane.c),
            ("yield_ranges.a", self.yield_ranges.a),
            ("initial_x", self.initial_x),
        ];
        for (name, [lo, hi]) in spans.into_iter().chain(self.removal.map(|r| ("removal", r))) {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(CliError::invalid(format!("sampler: {name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        let [blo, bhi] = self.yield_ranges.b;
        if !(blo <= bhi && blo.is_finite() && bhi.is_finite()) {
            return Err(CliError::invalid("sampler: yield_ranges.b must satisfy lo <= hi"));
        }
        if self.species[0] == 0 || self.species[0] > self.species[1] {
            return Err(CliError::invalid("sampler: species must satisfy 1 <= lo <= hi"));
        }
        if self.families.is_empty() || self.yields.is_empty() {
            return Err(CliError::invalid("sampler: families and yields must be non-empty"));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: Span) -> f64 {
    if lo == hi { lo } else { rng.random_range(lo..=hi) }
}

fn draw_scenario(cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.random_range(cfg.species[0]..=cfg.species[1]);
    let s0 = draw(rng, cfg.s0);
    let d = draw(rng, cfg.d);
    let species = (0..n)
        .map(|k| {
            let growth = match cfg.families[rng.random_range(0..cfg.families.len())] {
                GrowthFamily::Monod => GrowthLaw::Monod { a: draw(rng, cfg.monod.a), b: draw(rng, cfg.monod.b) },
                GrowthFamily::Haldane => GrowthLaw::Haldane {
                    a: draw(rng, cfg.haldane.a),
                    b: draw(rng, cfg.haldane.b),
                    c: draw(rng, cfg.haldane.c),
                },
            };
            let a = draw(rng, cfg.yield_ranges.a);
            let yield_law = match cfg.yields[rng.random_range(0..cfg.yields.len())] {
                YieldFamily::Constant => YieldLaw::Constant { y: a },
                YieldFamily::Linear => YieldLaw::Linear { a, b: draw(rng, cfg.yield_ranges.b) },
                YieldFamily::Quadratic => YieldLaw::Quadratic { a, b: draw(rng, cfg.yield_ranges.b) },
            };
            let removal = cfg.removal.map_or(d, |r| draw(rng, r));
            Species::new(format!("s{}", k + 1), growth, yield_law, removal)
        })
        .collect();
    let s = rng.random_range(0.0..2.0 * s0);
    let x = (0..n).map(|_| draw(rng, cfg.initial_x)).collect();
    Scenario { s0, d, species, initial: InitialState { s, x } }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Converged to the single-survivor state of the species with the
    /// lowest break-even concentration.
    ExclusionByFirst,
    ExclusionByOther,
    Washout,
    NonConverged,
    NumericFailure,
    /// No admissible scenario within the redraw budget.
    SamplingFailed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisTally {
    /// `λ_1 >= S⁰`.
    pub lambda1_not_below_feed: usize,
    /// `μ_1 <= S⁰`.
    pub mu1_not_above_feed: usize,
    pub tie: usize,
    pub alpha_infeasible: usize,
    pub f_condition_fails: usize,
    pub checker_error: usize,
    pub theorem_holds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifySample {
    pub index: usize,
    pub attempts: usize,
    pub scenario: Option<ScenarioFile>,
    pub theorem: Option<bool>,
    pub failed_hypotheses: Vec<String>,
    pub outcome: Outcome,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub exclusion_by_first: usize,
    pub exclusion_by_other: usize,
    pub washout: usize,
    pub non_converged: usize,
    pub numeric_failure: usize,
    pub sampling_failed: usize,
}

impl OutcomeCounts {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::ExclusionByFirst => self.exclusion_by_first += 1,
            Outcome::ExclusionByOther => self.exclusion_by_other += 1,
            Outcome::Washout => self.washout += 1,
            Outcome::NonConverged => self.non_converged += 1,
            Outcome::NumericFailure => self.numeric_failure += 1,
            Outcome::SamplingFailed => self.sampling_failed += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsifyResult {
    pub budget: usize,
    pub outcomes: OutcomeCounts,
    pub hypotheses: HypothesisTally,
    /// Outcomes among samples for which the theorem's hypotheses hold.
    pub outcomes_when_theorem_holds: OutcomeCounts,
    pub samples: Vec<FalsifySample>,
}

fn failed_hypotheses(s0: f64, r: &Result<TheoremReport, ConditionError>) -> Vec<String> {
    let r = match r {
        Ok(r) => r,
        Err(ConditionError::Degenerate { .. }) => return vec!["tie".into()],
        Err(e) => return vec![format!("checker_error: {e}")],
    };
    let mut out = Vec::new();
    let be = r.breakevens[0];
    if !(be.lambda < s0) {
        out.push("lambda1_not_below_feed".into());
    } else if !(s0 < be.mu) {
        out.push("mu1_not_above_feed".into());
    }
    if !r.ordering_ok && be.lambda.is_finite() {
        out.push("tie".into());
    }
    if r.alpha.iter().any(|a| !a.feasible) {
        out.push("alpha_infeasible".into());
    }
    if matches!(r.f_condition, Some(ref f) if !f.holds()) {
        out.push("f_condition_fails".into());
    }
    out
}

fn classify(
    sc: &Scenario,
    checker: &CheckerOptions,
    solver: &SolverOptions,
    conv: &ConvergenceSettings,
    t_max: f64,
) -> (Outcome, Option<String>) {
    let run = || -> Result<(Convergence, f64, usize), CliError> {
        let catalog = analysis::catalog_equilibria(sc, &checker.analysis)?;
        let first = (0..sc.n())
            .min_by(|&a, &b| catalog.species[a].breakeven.lambda.total_cmp(&catalog.species[b].breakeven.lambda))
            .unwrap_or(0);
        let mut traj = sim::integrate(sc, solver, None)?;
        let mut convergence = sim::detect_convergence(&traj, sc, &catalog, conv.eps, conv.window);
        while matches!(convergence, Convergence::NotConverged { .. }) && traj.last().t < t_max {
            let last = traj.last().clone();
            let opts = SolverOptions { t_end: (last.t + solver.t_end).min(t_max), ..*solver };
            traj = sim::integrate_from(sc, last.t, last.s, &last.x, &opts, None)?;
            convergence = sim::detect_convergence(&traj, sc, &catalog, conv.eps, conv.window);
        }
        Ok((convergence, traj.last().t, first))
    };
    match run() {
        Ok((convergence, t, first)) => match convergence {
            Convergence::Converged { equilibrium: EquilibriumKind::Washout, .. } => (Outcome::Washout, None),
            Convergence::Converged { equilibrium: EquilibriumKind::Lower { species }, .. } if species == first => {
                (Outcome::ExclusionByFirst, None)
            }
            Convergence::Converged { equilibrium, .. } => (Outcome::ExclusionByOther, Some(format!("{equilibrium:?} at t = {t}"))),
            Convergence::NotConverged { oscillating, amplitude, .. } => (
                Outcome::NonConverged,
                Some(format!("t = {t}, oscillating = {oscillating}, amplitude = {amplitude:e}")),
            ),
        },
        Err(e) => (Outcome::NumericFailure, Some(e.message)),
    }
}

fn falsify_sample(cfg: &SamplerConfig, seed: u64, index: usize, conv: &ConvergenceSettings) -> FalsifySample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut solver = cfg.solver.unwrap_or_default().apply(SolverOptions::default());
    solver.sample_dt = Some(solver.t_end / DEFAULT_SAMPLES);
    let checker = cfg.checker.unwrap_or_default().apply(CheckerOptions::default());
    for attempt in 1..=cfg.max_attempts.max(1) {
        let Ok(sc) = draw_scenario(cfg, &mut rng).validate() else { continue };
        let report = conditions::check_theorem(&sc, &checker);
        let failed = failed_hypotheses(sc.s0, &report);
        let theorem = report.as_ref().ok().map(|r| r.verdict);
        if cfg.require_theorem && theorem != Some(true) {
            continue;
        }
        let t_max = cfg.t_max.unwrap_or(50.0 * solver.t_end).max(solver.t_end);
        let (outcome, note) = classify(&sc, &checker, &solver, conv, t_max);
        return FalsifySample {
            index,
            attempts: attempt,
            scenario: Some(ScenarioFile::from_scenario(&sc)),
            theorem,
            failed_hypotheses: failed,
            outcome,
            note,
        };
    }
    FalsifySample {
        index,
        attempts: cfg.max_attempts,
        scenario: None,
        theorem: None,
        failed_hypotheses: Vec::new(),
        outcome: Outcome::SamplingFailed,
        note: Some("no admissible scenario within max_attempts draws".into()),
    }
}

/// Samples `budget` scenarios and classifies each. Sample `k` draws from
/// its own random stream, so results do not depend on the worker count.
pub fn falsify(cfg: &SamplerConfig, seed: u64, budget: usize, jobs: usize, conv: &ConvergenceSettings) -> Result<FalsifyResult, CliError> {
    cfg.validate()?;
    let samples: Vec<FalsifySample> =
        pool(jobs)?.install(|| (0..budget).into_par_iter().map(|k| falsify_sample(cfg, seed, k, conv)).collect());
    let mut outcomes = OutcomeCounts::default();
    let mut when_holds = OutcomeCounts::default();
    let mut tally = HypothesisTally::default();
    for s in &samples {
        outcomes.add(s.outcome);
        if s.theorem == Some(true) {
            when_holds.add(s.outcome);
            tally.theorem_holds += 1;
        }
        for h in &s.failed_hypotheses {
            match h.as_str() {
                "lambda1_not_below_feed" => tally.lambda1_not_below_feed += 1,
                "mu1_not_above_feed" => tally.mu1_not_above_feed += 1,
                "tie" => tally.tie += 1,
                "alpha_infeasible" => tally.alpha_infeasible += 1,
                "f_condition_fails" => tally.f_condition_fails += 1,
                _ => tally.checker_error += 1,
            }
        }
    }
    Ok(FalsifyResult { budget, outcomes, hypotheses: tally, outcomes_when_theorem_holds: when_holds, samples })
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "chemostat", version, about = "Variable-yield chemostat competition: equilibria, stability checks, simulation")]
pub struct Cli {
    /// Warn about unknown keys in input files instead of rejecting them.
    #[arg(long, global = true)]
    pub lenient: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Break-even concentrations, equilibria and their local stability.
    Analyze {
        scenario: PathBuf,
        /// Report path (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the global-stability hypotheses or one of the corollaries.
    Check {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the model and classify the limit.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        t_end: Option<f64>,
        /// Record V and V' at each sample (needs the theorem's hypotheses).
        #[arg(long)]
        lyapunov: bool,
        /// Trajectory CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Sample spacing (default: t_end / 4000).
        #[arg(long)]
        sample_dt: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check and simulate over a cartesian grid of parameter values.
    Sweep {
        template: PathBuf,
        /// Output directory; the summary goes to `summary.json`.
        out_dir: PathBuf,
        /// `key=lo:hi:n` with a dotted key such as `species.0.removal`.
        #[arg(long)]
        vary: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Largest accepted number of grid points.
        #[arg(long, default_value_t = 10_000)]
        cap: usize,
        /// Recorded in the report; the sweep itself is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample random scenarios and tally hypotheses and simulated outcomes.
    Falsify {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, lenient: bool) -> Result<(Scenario, SolverOptions, CheckerOptions, Vec<String>), CliError> {
    let (file, warnings) = load_scenario_file(path, lenient)?;
    let (sc, solver, checker) = file.resolve()?;
    Ok((sc, solver, checker, warnings))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let lenient = cli.lenient;
    let conv = ConvergenceSettings::default();
    match cli.command {
        Command::Analyze { scenario, out } => {
            let (sc, solver, checker, warnings) = load(&scenario, lenient)?;
            warn_all(&warnings);
            let result = analyze(&sc, &checker)?;
            let prov = provenance("analyze", &scenario, None, Tolerances::new(&solver, &checker, &conv), warnings);
            emit(&Report { provenance: prov, result }, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Check { scenario, which, out } => {
            let (sc, solver, checker, warnings) = load(&scenario, lenient)?;
            warn_all(&warnings);
            let result = check(&sc, which, &checker);
            for c in &result.checks {
                let status = match &c.status {
                    CheckStatus::Yes { .. } => "yes".to_string(),
                    CheckStatus::No { .. } => "no".to_string(),
                    CheckStatus::Inapplicable { reason, .. } => format!("inapplicable ({reason})"),
                };
                eprintln!("{:?}: {status}", c.check);
            }
            let code = result.exit_code();
            let prov = provenance("check", &scenario, None, Tolerances::new(&solver, &checker, &conv), warnings);
            emit(&Report { provenance: prov, result }, out.as_deref())?;
            Ok(code)
        }
        Command::Simulate { scenario, t_end, lyapunov, csv, sample_dt, eps, window, out } => {
            let (sc, mut solver, checker, warnings) = load(&scenario, lenient)?;
            warn_all(&warnings);
            solver.t_end = t_end.unwrap_or(solver.t_end);
            solver.sample_dt = Some(sample_dt.unwrap_or(solver.t_end / DEFAULT_SAMPLES));
            if !(solver.t_end > 0.0) || sample_dt.is_some_and(|dt| !(dt > 0.0)) || !(eps > 0.0) || window == 0 {
                return Err(CliError::invalid("--t-end, --sample-dt, --eps and --window must be positive"));
            }
            let conv = ConvergenceSettings { eps, window };
            let (mut result, traj) = simulate(&sc, &solver, &checker, &conv, lyapunov)?;
            if let Some(path) = &csv {
                let mut buf = Vec::new();
                sim::write_csv(&traj, &mut buf).map_err(|e| CliError::invalid(e.to_string()))?;
                write_file(path, &buf)?;
                result.csv = Some(path.display().to_string());
            }
            eprintln!(
                "{}",
                match &result.convergence {
                    Convergence::Converged { equilibrium, .. } => format!("converged to {equilibrium:?}"),
                    Convergence::NotConverged { oscillating, amplitude, .. } => {
                        format!("not converged (oscillating = {oscillating}, amplitude {amplitude:e})")
                    }
                }
            );
            let code = result.exit_code();
            let prov = provenance("simulate", &scenario, None, Tolerances::new(&solver, &checker, &conv), warnings);
            emit(&Report { provenance: prov, result }, out.as_deref())?;
            Ok(code)
        }
        Command::Sweep { template, out_dir, vary, jobs, cap, seed } => {
            let text = read_text(&template)?;
            let (file, warnings) = parse_document::<ScenarioFile>(&text, &template.display().to_string(), lenient)?;
            warn_all(&warnings);
            let (_, solver, checker) = file.clone().resolve()?;
            let axes = vary.iter().map(|v| VarySpec::parse(v)).collect::<Result<Vec<_>, _>>()?;
            let doc = serde_json::to_value(&file).expect("scenario files serialize");
            for a in &axes {
                set_path(&mut doc.clone(), &a.key, a.lo)?;
            }
            let result = sweep(&doc, axes, resolve_jobs(jobs)?, cap, &conv)?;
            eprintln!(
                "{} points, theorem yes at {}, converged at {}, prediction mismatches {}",
                result.points.len(),
                result.theorem_yes,
                result.converged,
                result.mismatches
            );
            let prov = provenance("sweep", &template, Some(seed), Tolerances::new(&solver, &checker, &conv), warnings);
            emit(&Report { provenance: prov, result }, Some(&out_dir.join("summary.json")))?;
            Ok(EXIT_OK)
        }
        Command::Falsify { config, seed, budget, jobs, out } => {
            let (cfg, warnings) = parse_document::<SamplerConfig>(&read_text(&config)?, &config.display().to_string(), lenient)?;
            warn_all(&warnings);
            let solver = cfg.solver.unwrap_or_default().apply(SolverOptions::default());
            let checker = cfg.checker.unwrap_or_default().apply(CheckerOptions::default());
            let result = falsify(&cfg, seed, budget, resolve_jobs(jobs)?, &conv)?;
            eprintln!("{:?}", result.outcomes);
            let prov = provenance("falsify", &config, Some(seed), Tolerances::new(&solver, &checker, &conv), warnings);
            emit(&Report { provenance: prov, result }, out.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn reference_text() -> String {
        serde_json::to_string(&ScenarioFile::from_scenario(&presets::reference())).unwrap()
    }

    #[test]
    fn strict_and_lenient_parsing() {
        let mut v: serde_json::Value = serde_json::from_str(&reference_text()).unwrap();
        v["species"][0]["remvoal"] = serde_json::json!(1.0);
        let text = v.to_string();
        let err = parse_document::<ScenarioFile>(&text, "f", false).unwrap_err();
        assert_eq!(err.code, EXIT_INVALID);
        assert!(err.message.contains("species.0.remvoal"), "{}", err.message);
        let (_, warnings) = parse_document::<ScenarioFile>(&text, "f", true).unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn missing_key_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(&reference_text()).unwrap();
        v.as_object_mut().unwrap().remove("d");
        let err = parse_document::<ScenarioFile>(&v.to_string(), "f", false).unwrap_err();
        assert!(err.message.contains("`d`"), "{}", err.message);
        assert!(err.message.contains("line"), "{}", err.message);
    }

    #[test]
    fn vary_specs() {
        let v = VarySpec::parse("species.0.removal=0.5:1.5:3").unwrap();
        assert_eq!(v.values(), vec![0.5, 1.0, 1.5]);
        assert!(VarySpec::parse("s0=1:2").is_err());
        assert!(VarySpec::parse("s0=1:2:0").is_err());
        assert_eq!(grid(&[]).len(), 1);
        let g = grid(&[VarySpec::parse("a=0:1:2").unwrap(), VarySpec::parse("b=0:1:3").unwrap()]);
        assert_eq!(g.len(), 6);
        assert_eq!((g[1][0].value, g[1][1].value), (0.0, 0.5));
    }

    #[test]
    fn dotted_paths() {
        let mut doc: serde_json::Value = serde_json::from_str(&reference_text()).unwrap();
        set_path(&mut doc, "species.1.growth.params.c", 9.0).unwrap();
        assert_eq!(doc["species"][1]["growth"]["params"]["c"], 9.0);
        assert!(set_path(&mut doc, "species.7.removal", 1.0).is_err());
        assert!(set_path(&mut doc, "species.0.label", 1.0).is_err());
    }

    #[test]
    fn check_exit_codes() {
        let sc = presets::reference();
        let r = check(&sc, Which::Theorem, &Default::default());
        assert_eq!(r.exit_code(), EXIT_OK);
        let r = check(&sc, Which::Apw, &Default::default());
        assert_eq!(r.exit_code(), EXIT_INAPPLICABLE);
        let r = check(&sc, Which::All, &Default::default());
        assert_eq!(r.exit_code(), EXIT_OK);
    }
}
