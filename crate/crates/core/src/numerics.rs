//! Scalar numerical routines shared by the analysis modules: bracketing
//! root refinement, golden-section extremum search, adaptive Gauss-Kronrod
//! quadrature and grid sign-change scanning.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("bracket [{a}, {b}] does not straddle a sign change (f(a) = {fa}, f(b) = {fb})")]
    NoBracket { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("non-finite function value {value} at x = {x}")]
    NonFinite { x: f64, value: f64 },
    #[error("quadrature did not reach tolerance after {intervals} subintervals (error estimate {error:e})")]
    QuadratureLimit { intervals: usize, error: f64 },
}

/// Refines a sign-change bracket by bisection until its width is at most
/// `tol` or the midpoint can no longer be separated from an endpoint.
pub fn bisect<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64, NumericError>
where
    F: Fn(f64) -> f64,
{
    let mut fa = f(a);
    let fb = f(b);
    if !fa.is_finite() {
        return Err(NumericError::NonFinite { x: a, value: fa });
    }
    if !fb.is_finite() {
        return Err(NumericError::NonFinite { x: b, value: fb });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericError::NoBracket { a, b, fa, fb });
    }
    while (b - a) > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if !fm.is_finite() {
            return Err(NumericError::NonFinite { x: m, value: fm });
        }
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimum of a unimodal function on `[a, b]`.
/// Returns `(x, f(x))` for the best point seen, endpoints included.
pub fn golden_min<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut best = (lo, f(lo));
    let fhi = f(hi);
    if fhi < best.1 {
        best = (hi, fhi);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Golden-section search for the maximum; see [`golden_min`].
pub fn golden_max<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (x, v) = golden_min(|s| -f(s), a, b, tol);
    (x, -v)
}

/// Evenly spaced points on `[a, b]`, both ends included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|k| if k == n - 1 { b } else { a + h * k as f64 })
                .collect()
        }
    }
}

/// Extremum of `f` over `[a, b]`: dense scan followed by golden-section
/// refinement on the two cells around the best grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub at: f64,
    pub value: f64,
}

pub fn scan_max<F>(f: F, a: f64, b: f64, n: usize, tol: f64) -> Result<Extremum, NumericError>
where
    F: Fn(f64) -> f64,
{
    let grid = linspace(a, b, n.max(3));
    let mut best = 0;
    let mut vals = Vec::with_capacity(grid.len());
    for (k, &x) in grid.iter().enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(NumericError::NonFinite { x, value: v });
        }
        if k == 0 || v > vals[best] {
            best = k;
        }
        vals.push(v);
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (x, v) = golden_max(&f, lo, hi, tol);
    if v >= vals[best] {
        Ok(Extremum { at: x, value: v })
    } else {
        Ok(Extremum { at: grid[best], value: vals[best] })
    }
}

pub fn scan_min<F>(f: F, a: f64, b: f64, n: usize, tol: f64) -> Result<Extremum, NumericError>
where
    F: Fn(f64) -> f64,
{
    let e = scan_max(|s| -f(s), a, b, n, tol)?;
    Ok(Extremum { at: e.at, value: -e.value })
}

/// Outcome of scanning a function for sign changes on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignScan {
    /// Brackets `[a, b]` containing exactly one detected crossing, in order.
    pub brackets: Vec<(f64, f64)>,
    /// Points where the function touches zero without changing sign.
    pub tangencies: Vec<f64>,
}

/// Scans `f` on `n` grid points of `[a, b]` for sign changes. Cells whose end
/// values share a sign but enclose a local extremum are refined by golden
/// section, which exposes pairs of crossings hidden inside one cell and
/// tangential zeros (`|f| <= zero_tol` at the extremum).
pub fn scan_sign_changes<F>(f: F, a: f64, b: f64, n: usize, zero_tol: f64) -> Result<SignScan, NumericError>
where
    F: Fn(f64) -> f64,
{
    let grid = linspace(a, b, n.max(3));
    let mut vals = Vec::with_capacity(grid.len());
    for &x in &grid {
        let v = f(x);
        if !v.is_finite() {
            return Err(NumericError::NonFinite { x, value: v });
        }
        vals.push(v);
    }
    let sign = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
    let mut out = SignScan { brackets: Vec::new(), tangencies: Vec::new() };

    // Points that are exactly zero are folded into the crossing logic by
    // tracking the last nonzero sign.
    let mut last_nonzero: Option<(usize, i32)> = None;
    for k in 0..grid.len() {
        let s = sign(vals[k]);
        if s == 0 {
            continue;
        }
        if let Some((j, sj)) = last_nonzero {
            if sj != s {
                out.brackets.push((grid[j], grid[k]));
            } else if k == j + 1 || vals[j + 1..k].iter().all(|v| *v == 0.0) {
                // Same sign on both ends: look for a hidden extremum that
                // reaches or crosses zero.
                if k == j + 1 {
                    hidden_pair(&f, &grid, &vals, j, s, zero_tol, &mut out);
                } else {
                    // f vanished on grid points strictly between: a touch.
                    out.tangencies.push(grid[j + 1]);
                }
            }
        }
        last_nonzero = Some((k, s));
    }
    out.brackets.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

fn hidden_pair<F>(f: &F, grid: &[f64], vals: &[f64], j: usize, s: i32, zero_tol: f64, out: &mut SignScan)
where
    F: Fn(f64) -> f64,
{
    // Only cells adjacent to a local extremum of the grid values (in the
    // direction of zero) can hide a double crossing.
    let k = j + 1;
    let toward_zero = |v: f64| -(s as f64) * v;
    let left_rises = j == 0 || toward_zero(vals[j]) >= toward_zero(vals[j - 1]);
    let right_falls = k + 1 >= vals.len() || toward_zero(vals[k + 1]) <= toward_zero(vals[k]);
    if !(left_rises && right_falls) {
        return;
    }
    let lo = grid[j.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let (xe, ve) = if s < 0 {
        golden_max(f, lo, hi, 1e-14 * (1.0 + hi.abs()))
    } else {
        golden_min(f, lo, hi, 1e-14 * (1.0 + hi.abs()))
    };
    if xe <= grid[j] || xe >= grid[k] {
        return;
    }
    if ve.abs() <= zero_tol {
        out.tangencies.push(xe);
    } else if ve.signum() as i32 != s {
        out.brackets.push((grid[j], xe));
        out.brackets.push((xe, grid[k]));
    }
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        k += K15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`
/// with combined tolerance `abs_tol + rel_tol * |value|`. Reversed limits give
/// the negated integral.
pub fn integrate<F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quadrature, NumericError>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, intervals: 0 });
    }
    if b < a {
        let q = integrate(f, b, a, abs_tol, rel_tol)?;
        return Ok(Quadrature { value: -q.value, ..q });
    }
    const MAX_INTERVALS: usize = 4000;
    let (v0, e0) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v0, e0)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(NumericError::NonFinite { x: 0.5 * (a + b), value });
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature { value, error, intervals: parts.len() });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(NumericError::QuadratureLimit { intervals: parts.len(), error });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(Quadrature { value, error, intervals: parts.len() + 1 });
        }
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        parts.push((lo, mid, vl, el));
        parts.push((mid, hi, vr, er));
    }
}

/// Central finite difference with step `h`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_non_bracket() {
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-10), Err(NumericError::NoBracket { .. })));
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, v) = golden_min(|x| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
        let (x, _) = golden_max(|x| -(x - 4.0).powi(2), 0.0, 1.0, 1e-12);
        assert!((x - 1.0).abs() < 1e-9, "boundary maximum, got {x}");
    }

    #[test]
    fn scan_max_of_sine() {
        let e = scan_max(f64::sin, 0.0, 3.0, 64, 1e-12).unwrap();
        assert!((e.at - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_polynomial_and_log() {
        let q = integrate(|x| x * x, 0.0, 3.0, 1e-12, 1e-12).unwrap();
        assert!((q.value - 9.0).abs() < 1e-12);
        // Integrable log singularity at the right end.
        let q = integrate(|x| -(1.0 - x).ln(), 0.0, 1.0 - 1e-12, 1e-10, 1e-10).unwrap();
        let exact = 1.0 - 1e-12 + 1e-12 * (1e-12f64).ln();
        assert!((q.value - exact).abs() < 1e-9, "{} vs {}", q.value, exact);
        let back = integrate(|x| x * x, 3.0, 0.0, 1e-12, 1e-12).unwrap();
        assert!((back.value + 9.0).abs() < 1e-12);
    }

    #[test]
    fn sign_scan_counts_quadratic_roots() {
        // Roots of S^2 - 8S + 8 in [0, 10].
        let s = scan_sign_changes(|x| -(x * x - 8.0 * x + 8.0), 0.0, 10.0, 64, 1e-14).unwrap();
        assert_eq!(s.brackets.len(), 2);
        assert!(s.tangencies.is_empty());
    }

    #[test]
    fn sign_scan_finds_pair_hidden_in_one_cell() {
        // Two roots 0.002 apart, far narrower than the grid spacing.
        let s = scan_sign_changes(|x| (x - 0.5).powi(2) - 1e-6, 0.0, 1.0, 8, 1e-15).unwrap();
        assert_eq!(s.brackets.len(), 2, "{s:?}");
        assert!(s.brackets[0].1 < 0.5 + 1e-9 && s.brackets[1].0 > 0.5 - 1e-9);
    }

    #[test]
    fn sign_scan_reports_tangency() {
        let s = scan_sign_changes(|x| -(x - 0.3).powi(2), 0.0, 1.0, 10, 1e-12).unwrap();
        assert!(s.brackets.is_empty());
        assert_eq!(s.tangencies.len(), 1);
        assert!((s.tangencies[0] - 0.3).abs() < 1e-5);
    }
}
