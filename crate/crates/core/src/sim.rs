//! Numerical integration of the chemostat equations
//!
//! ```text
//! S'   = D (S⁰ - S) - Σ f_i(S) x_i
//! x_i' = (p_i(S) - D_i) x_i
//! ```
//!
//! with an embedded Dormand-Prince 5(4) pair, plus post-hoc checks on the
//! resulting trajectory.

use crate::analysis::{BreakEven, Equilibrium, EquilibriumCatalog, EquilibriumKind};
use crate::model::Scenario;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("step size underflow at t = {t} (h = {h:e}); the problem may be stiff. Last state: {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("initial state has {got} biomass entries, scenario has {expected} species")]
    Dimension { expected: usize, got: usize },
}

/// Vector field at `(S, x)`; component 0 is `S'`.
pub fn rhs(sc: &Scenario, s: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + 1];
    rhs_into(sc, s, x, &mut out);
    out
}

pub fn rhs_into(sc: &Scenario, s: f64, x: &[f64], out: &mut [f64]) {
    // Guard against round-off excursions below zero inside a stage.
    let s_eval = s.max(0.0);
    let mut consumption = 0.0;
    for (i, sp) in sc.species.iter().enumerate() {
        consumption += sp.uptake(s_eval) * x[i];
        out[i + 1] = (sp.growth(s_eval) - sp.removal) * x[i];
    }
    out[0] = sc.d * (sc.s0 - s) - consumption;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub s: f64,
    pub x: Vec<f64>,
}

impl State {
    pub fn vector(&self) -> Vec<f64> {
        std::iter::once(self.s).chain(self.x.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Upper bound on the step size.
    pub h_max: Option<f64>,
    /// Record samples on this uniform time grid instead of at every
    /// accepted step. Steps are shortened to land on the grid exactly.
    pub sample_dt: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, t_end: 200.0, max_steps: 1_000_000, h_max: None, sample_dt: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub steps: usize,
    pub rejected: usize,
    pub clamps: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EndTime,
    StepLimit,
}

/// A coordinate that came out of a step slightly negative and was reset to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampEvent {
    pub t: f64,
    pub component: usize,
    pub value: f64,
}

/// Lyapunov function value and orbital derivative at a sample. `None` when
/// the state is outside the function's domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub v: f64,
    pub vdot: f64,
}

/// Pure observer called at every recorded sample.
pub trait Monitor {
    fn observe(&self, t: f64, s: f64, x: &[f64]) -> Option<LyapunovSample>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<State>,
    pub lyapunov: Option<Vec<Option<LyapunovSample>>>,
    pub stats: Stats,
    pub termination: Termination,
    pub clamp_log: Vec<ClampEvent>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

// Dormand-Prince 5(4) tableau. The system is autonomous, so the stage
// times are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    sc: &'a Scenario,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    evals: usize,
}

impl<'a> Stepper<'a> {
    fn new(sc: &'a Scenario, dim: usize) -> Self {
        Self { sc, k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim], evals: 0 }
    }

    fn eval(&mut self, y: &[f64], stage: usize) {
        let mut out = std::mem::take(&mut self.k[stage]);
        rhs_into(self.sc, y[0], &y[1..], &mut out);
        self.k[stage] = out;
        self.evals += 1;
    }

    /// One trial step from `y` (with `k[0] = f(y)` already set). Writes the
    /// fifth-order solution into `y_new` and returns the scaled error norm.
    fn trial(&mut self, y: &[f64], h: f64, y_new: &mut [f64], rtol: f64, atol: f64) -> f64 {
        let dim = y.len();
        for stage in 1..7 {
            for j in 0..dim {
                let mut acc = 0.0;
                for (m, a) in A[stage].iter().enumerate().take(stage) {
                    acc += a * self.k[m][j];
                }
                self.tmp[j] = y[j] + h * acc;
            }
            let tmp = std::mem::take(&mut self.tmp);
            self.eval(&tmp, stage);
            self.tmp = tmp;
        }
        // Stage 7 is evaluated at the fifth-order solution (FSAL).
        let mut err_sq = 0.0;
        for j in 0..dim {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for m in 0..7 {
                hi += B5[m] * self.k[m][j];
                lo += B4[m] * self.k[m][j];
            }
            y_new[j] = y[j] + h * hi;
            let sc = atol + rtol * y[j].abs().max(y_new[j].abs());
            let e = h * (hi - lo) / sc;
            err_sq += e * e;
        }
        (err_sq / dim as f64).sqrt()
    }
}

/// Integrates from the scenario's initial state.
pub fn integrate(sc: &Scenario, opts: &SolverOptions, monitor: Option<&dyn Monitor>) -> Result<Trajectory, SimError> {
    integrate_from(sc, 0.0, sc.initial.s, &sc.initial.x, opts, monitor)
}

/// Adaptive Dormand-Prince 5(4) integration from `(t0, s0, x0)` to
/// `opts.t_end`. Coordinates that land in `[-atol, 0)` are clamped to zero
/// and logged; a step producing anything below `-atol` is rejected and
/// retried with half the step.
pub fn integrate_from(
    sc: &Scenario,
    t0: f64,
    s_init: f64,
    x_init: &[f64],
    opts: &SolverOptions,
    monitor: Option<&dyn Monitor>,
) -> Result<Trajectory, SimError> {
    if x_init.len() != sc.n() {
        return Err(SimError::Dimension { expected: sc.n(), got: x_init.len() });
    }
    let dim = sc.n() + 1;
    let mut y: Vec<f64> = std::iter::once(s_init).chain(x_init.iter().copied()).collect();
    let mut y_new = vec![0.0; dim];
    let mut t = t0;
    let mut stats = Stats::default();
    let mut clamp_log = Vec::new();
    let mut stepper = Stepper::new(sc, dim);
    stepper.eval(&y, 0);

    let mut samples = vec![State { t, s: y[0], x: y[1..].to_vec() }];
    let mut lyap = monitor.map(|m| vec![m.observe(t, y[0], &y[1..])]);
    let record = |t: f64, y: &[f64], samples: &mut Vec<State>, lyap: &mut Option<Vec<Option<LyapunovSample>>>| {
        samples.push(State { t, s: y[0], x: y[1..].to_vec() });
        if let (Some(m), Some(l)) = (monitor, lyap.as_mut()) {
            l.push(m.observe(t, y[0], &y[1..]));
        }
    };

    let span = opts.t_end - t0;
    if span <= 0.0 {
        return Ok(Trajectory { samples, lyapunov: lyap, stats, termination: Termination::EndTime, clamp_log });
    }
    let h_max = opts.h_max.unwrap_or(span).min(span);
    // Initial step from the size of the derivative.
    let mut h = {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for j in 0..dim {
            let sc = opts.atol + opts.rtol * y[j].abs();
            d0 += (y[j] / sc).powi(2);
            d1 += (stepper.k[0][j] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / dim as f64).sqrt(), (d1 / dim as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(h_max).max(1e-12 * span)
    };
    let mut next_sample = opts.sample_dt.map(|dt| t0 + dt);
    let mut sample_index = 1usize;
    let mut termination = Termination::EndTime;

    while t < opts.t_end {
        if stats.steps >= opts.max_steps {
            termination = Termination::StepLimit;
            break;
        }
        // Land exactly on the next sample time or the end.
        let target = next_sample.map_or(opts.t_end, |ts| ts.min(opts.t_end));
        let mut h_try = h.min(h_max);
        let truncated = t + h_try >= target;
        if truncated {
            h_try = target - t;
        }
        if h_try < 1e-14 * t.abs().max(1.0) && !truncated {
            return Err(SimError::StepUnderflow { t, h: h_try, state: y });
        }

        let err = stepper.trial(&y, h_try, &mut y_new, opts.rtol, opts.atol);
        if !err.is_finite() {
            stats.rejected += 1;
            h = 0.25 * h_try;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(SimError::NonFinite { t });
            }
            continue;
        }
        let below = y_new.iter().any(|v| *v < -opts.atol);
        if err > 1.0 || below {
            stats.rejected += 1;
            h = if below { 0.5 * h_try } else { h_try * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) };
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(SimError::StepUnderflow { t, h, state: y });
            }
            continue;
        }

        stats.steps += 1;
        t = if truncated { target } else { t + h_try };
        let mut clamped = false;
        for (j, v) in y_new.iter_mut().enumerate() {
            if *v < 0.0 {
                clamp_log.push(ClampEvent { t, component: j, value: *v });
                *v = 0.0;
                clamped = true;
            }
        }
        stats.clamps = clamp_log.len();
        std::mem::swap(&mut y, &mut y_new);
        if clamped {
            stepper.eval(&y, 0);
        } else {
            let last = std::mem::take(&mut stepper.k[6]);
            stepper.k[6] = std::mem::replace(&mut stepper.k[0], last);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { t });
        }

        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        // A step shortened to hit a sample time does not shrink the next one.
        let proposal = h_try * factor;
        h = if truncated { h.max(proposal) } else { proposal };

        match next_sample {
            Some(ts) if t >= ts || t >= opts.t_end => {
                record(t, &y, &mut samples, &mut lyap);
                sample_index += 1;
                let dt = opts.sample_dt.unwrap_or(0.0);
                next_sample = Some(t0 + dt * sample_index as f64);
            }
            Some(_) => {}
            None => record(t, &y, &mut samples, &mut lyap),
        }
    }
    stats.rhs_evals = stepper.evals;
    if termination == Termination::StepLimit && samples.last().map(|s| s.t) != Some(t) {
        record(t, &y, &mut samples, &mut lyap);
    }
    Ok(Trajectory { samples, lyapunov: lyap, stats, termination, clamp_log })
}

/// Fixed-step classical Runge-Kutta; used as an independent reference.
pub fn rk4_fixed(sc: &Scenario, s_init: f64, x_init: &[f64], dt: f64, t_end: f64) -> Vec<f64> {
    let mut y: Vec<f64> = std::iter::once(s_init).chain(x_init.iter().copied()).collect();
    let f = |y: &[f64]| rhs(sc, y[0], &y[1..]);
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        let k1 = f(&y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
        let k2 = f(&y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
        let k3 = f(&y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
        let k4 = f(&y4);
        for j in 0..y.len() {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Convergence {
    Converged {
        equilibrium: EquilibriumKind,
        distance: f64,
        rhs_norm: f64,
    },
    NotConverged {
        /// Peak-to-peak amplitude of `S` over the window exceeds `eps`.
        oscillating: bool,
        amplitude: f64,
        nearest: EquilibriumKind,
        distance: f64,
    },
}

impl Convergence {
    pub fn equilibrium(&self) -> Option<&EquilibriumKind> {
        match self {
            Convergence::Converged { equilibrium, .. } => Some(equilibrium),
            Convergence::NotConverged { .. } => None,
        }
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()))
}

/// Declares convergence to a cataloged equilibrium when each of the last
/// `window` samples lies within `eps` (sup norm) of it and the vector field
/// at the final sample is smaller than `eps * D`.
pub fn detect_convergence(
    traj: &Trajectory,
    sc: &Scenario,
    catalog: &EquilibriumCatalog,
    eps: f64,
    window: usize,
) -> Convergence {
    let last = traj.last();
    let v_last = last.vector();
    let (nearest, distance) = catalog
        .all()
        .map(|e: &Equilibrium| (e, sup_distance(&e.state(), &v_last)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("catalog always has the washout state");
    let start = traj.samples.len().saturating_sub(window.max(1));
    let tail = &traj.samples[start..];
    let target = nearest.state();
    let all_close = tail.iter().all(|st| sup_distance(&st.vector(), &target) <= eps);
    let rhs_norm = rhs(sc, last.s, &last.x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if all_close && rhs_norm < eps * sc.d {
        return Convergence::Converged { equilibrium: nearest.kind.clone(), distance, rhs_norm };
    }
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), st| (lo.min(st.s), hi.max(st.s)));
    let amplitude = hi - lo;
    Convergence::NotConverged { oscillating: amplitude > eps, amplitude, nearest: nearest.kind.clone(), distance }
}

/// Outcome of checking positivity, boundedness and the eventual
/// `S(t) < S⁰` property on a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub nonnegative: bool,
    /// Biomasses that started positive stayed strictly positive.
    pub biomass_positive: bool,
    /// Bound on `S + Σ x_i / Ymax_i` derived from the model.
    pub bound: f64,
    pub bounded: bool,
    /// Some species has `λ_i < S⁰ < μ_i`, so `S` must eventually drop below `S⁰`.
    pub eventual_applicable: bool,
    /// Last sample time with `S >= S⁰`; `None` if `S < S⁰` throughout.
    pub last_at_or_above: Option<f64>,
    pub eventually_below: Option<bool>,
    pub holds: bool,
}

/// Checks the invariance properties along a trajectory: samples are
/// non-negative, positive biomasses stay positive, the weighted total
/// `z = S + Σ x_i / Ymax_i` stays below `max(z(0), D S⁰ / m)` with
/// `m = min(D, D_i)`, and, when some species can grow at `S⁰`, every sample
/// after some finite time has `S < S⁰`.
pub fn verify_lemma1(traj: &Trajectory, sc: &Scenario, bes: &[BreakEven], eps: f64) -> Lemma1Report {
    let first = &traj.samples[0];
    let s_top = sc.s0.max(first.s);
    let ymax: Vec<f64> = sc.species.iter().map(|sp| sp.yield_law.max_on(s_top)).collect();
    let z = |st: &State| st.s + st.x.iter().zip(&ymax).map(|(x, y)| x / y).sum::<f64>();
    let m = sc.species.iter().map(|sp| sp.removal).fold(sc.d, f64::min);
    let bound = z(first).max(sc.d * sc.s0 / m);

    let nonnegative = traj.samples.iter().all(|st| st.s >= 0.0 && st.x.iter().all(|x| *x >= 0.0));
    let biomass_positive = traj
        .samples
        .iter()
        .all(|st| st.x.iter().zip(&first.x).all(|(x, x0)| *x0 <= 0.0 || *x > 0.0));
    let bounded = traj.samples.iter().all(|st| z(st) <= bound * (1.0 + eps) + eps && st.s <= s_top * (1.0 + eps) + eps);

    let eventual_applicable = bes.iter().any(|be| be.grows_at(sc.s0));
    let last_at_or_above = traj.samples.iter().rev().find(|st| st.s >= sc.s0).map(|st| st.t);
    let eventually_below = eventual_applicable.then(|| traj.last().s < sc.s0);
    let holds = nonnegative && biomass_positive && bounded && eventually_below.unwrap_or(true);
    Lemma1Report {
        nonnegative,
        biomass_positive,
        bound,
        bounded,
        eventual_applicable,
        last_at_or_above,
        eventually_below,
        holds,
    }
}

/// Writes `t,S,x_1,...,x_n[,V,Vdot]` with 17 significant digits. Samples
/// outside the Lyapunov function's domain leave the last two fields empty.
pub fn write_csv<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    let n = traj.samples.first().map_or(0, |s| s.x.len());
    let mut header = vec!["t".to_string(), "S".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    if traj.lyapunov.is_some() {
        header.push("V".into());
        header.push("Vdot".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (k, st) in traj.samples.iter().enumerate() {
        let mut row = vec![fmt17(st.t), fmt17(st.s)];
        row.extend(st.x.iter().map(|v| fmt17(*v)));
        if let Some(l) = &traj.lyapunov {
            match l[k] {
                Some(ls) => {
                    row.push(fmt17(ls.v));
                    row.push(fmt17(ls.vdot));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a CSV produced by [`write_csv`] back into samples and optional
/// Lyapunov columns.
pub fn read_csv<R: BufRead>(r: R) -> Result<(Vec<State>, Option<Vec<Option<LyapunovSample>>>), String> {
    let mut lines = r.lines();
    let header = lines.next().ok_or("empty CSV")?.map_err(|e| e.to_string())?;
    let cols: Vec<&str> = header.split(',').collect();
    let has_v = cols.last() == Some(&"Vdot");
    let n = cols.len() - 2 - if has_v { 2 } else { 0 };
    let mut samples = Vec::new();
    let mut lyap = has_v.then(Vec::new);
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(format!("line {}: expected {} fields, got {}", lineno + 2, cols.len(), f.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 2));
        let x = f[2..2 + n].iter().map(|s| num(s)).collect::<Result<Vec<_>, _>>()?;
        samples.push(State { t: num(f[0])?, s: num(f[1])?, x });
        if let Some(l) = lyap.as_mut() {
            let (v, vd) = (f[2 + n], f[3 + n]);
            l.push(if v.is_empty() { None } else { Some(LyapunovSample { v: num(v)?, vdot: num(vd)? }) });
        }
    }
    Ok((samples, lyap))
}
