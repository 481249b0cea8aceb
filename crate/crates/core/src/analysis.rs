//! Empirical decay rates, closed-form rate equations and chaos-rate fits.
//!
//! Rates are reported in two conventions side by side: the signed slope of
//! the log-statistic against time (negative for decay) and the positive decay
//! rate (`-slope`). The theoretical rates of the rate equations are decay
//! rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least squares fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::invalid("fit inputs differ in length"));
    }
    if n < 2 {
        return Err(Error::invalid("a line fit needs at least two points"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("fit abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, slope_stderr, r_squared, points: n })
}

/// Which statistic a stability report was fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// `ln E|X|^2` against time.
    MeanSquare,
    /// `ln (1/N) Σ|X^i|^2` along a single path, against time.
    Pathwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub statistic: StatisticKind,
    pub window: (f64, f64),
    pub points: usize,
    /// Signed slope of the log-statistic.
    pub empirical_slope: f64,
    pub slope_stderr: f64,
    /// `-empirical_slope`.
    pub empirical_decay: f64,
    pub theoretical_decay: Option<f64>,
    pub r_squared: f64,
}

impl StabilityReport {
    pub fn with_theory(mut self, decay: Option<f64>) -> Self {
        self.theoretical_decay = decay;
        self
    }
}

/// Last two-thirds of `[0, horizon]`.
pub fn default_window(horizon: f64) -> (f64, f64) {
    (horizon / 3.0, horizon)
}

const MIN_FIT_POINTS: usize = 10;

fn window_points(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.len() != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::invalid(format!("empty fit window [{t0}, {t1}]")));
    }
    let slack = 1e-9 * t1.abs().max(1.0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < t0 - slack || t > t1 + slack {
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("nonpositive or non-finite value {v} at t = {t}")));
        }
        xs.push(t);
        ys.push(v.ln());
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::invalid(format!(
            "fit window [{t0}, {t1}] holds {} points, need at least {MIN_FIT_POINTS}",
            xs.len()
        )));
    }
    Ok((xs, ys))
}

/// Fits `ln value = c + slope t` on `window`.
pub fn estimate_rate(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    statistic: StatisticKind,
) -> Result<StabilityReport> {
    let (xs, ys) = window_points(times, values, window)?;
    let fit = linear_fit(&xs, &ys)?;
    Ok(StabilityReport {
        statistic,
        window,
        points: fit.points,
        empirical_slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        empirical_decay: -fit.slope,
        theoretical_decay: None,
        r_squared: fit.r_squared,
    })
}

/// Per-path slopes of the log-statistic and their spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseSummary {
    pub slopes: Vec<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn pathwise_slopes(times: &[f64], series: &[Vec<f64>], window: (f64, f64)) -> Result<PathwiseSummary> {
    if series.is_empty() {
        return Err(Error::invalid("no paths to fit"));
    }
    let slopes = series
        .iter()
        .map(|s| estimate_rate(&times[..s.len().min(times.len())], &s[..s.len().min(times.len())], window, StatisticKind::Pathwise).map(|r| r.empirical_slope))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathwiseSummary {
        median: median(&slopes),
        min: slopes.iter().copied().fold(f64::INFINITY, f64::min),
        max: slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        slopes,
    })
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if !(flo * fhi <= 0.0) {
        return None;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Root of `Δ θ + ln(a) = 0` in `θ` found by bracketing, i.e. the
/// log-form of `λ^Δ a = 1`.
fn log_rate_root(dt: f64, ln_a: f64) -> Option<f64> {
    let g = |theta: f64| dt * theta + ln_a;
    let mut hi = 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    bisect(g, 0.0, hi)
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt < 1.0) {
        return Err(Error::invalid(format!("dt must lie in (0, 1), got {dt}")));
    }
    Ok(())
}

fn check_nonneg(pairs: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in pairs {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

/// Smallest positive root of `a t^2 + b t + c` (`a, c > 0`), or infinity.
fn smallest_positive_quadratic_root(a: f64, b: f64, c: f64) -> f64 {
    if a == 0.0 {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let s = disc.sqrt();
    let roots = [(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)];
    roots.into_iter().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min)
}

/// Mean-square rate of the explicit scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsRate {
    /// `λ* = A^{-1/Δ}` with `A = 1 + (b1 + b2)Δ^2 - (a1 - a2)Δ`.
    pub lambda_star: f64,
    /// `θ* = ln λ*`, the decay rate.
    pub theta_star: f64,
    /// Same rate from bracketing `Δ θ + ln A = 0`.
    pub theta_root: f64,
    pub dt_bound: f64,
}

/// Largest stepsize for which `0 < A < 1`, capped at 1.
pub fn ms_stepsize_bound(a1: f64, a2: f64, b1: f64, b2: f64) -> f64 {
    let b = b1 + b2;
    let gap = a1 - a2;
    if !(gap > 0.0) {
        return 0.0;
    }
    let d1 = if b > 0.0 { gap / b } else { f64::INFINITY };
    let d2 = smallest_positive_quadratic_root(b, -gap, 1.0);
    d1.min(d2).min(1.0)
}

pub fn ms_rate_equation(dt: f64, a1: f64, a2: f64, b1: f64, b2: f64) -> Result<MsRate> {
    check_dt(dt)?;
    check_nonneg(&[("a1", a1), ("a2", a2), ("b1", b1), ("b2", b2)])?;
    if !(a1 > a2) {
        return Err(Error::Infeasible(format!("mean-square rate needs a1 > a2, got a1={a1}, a2={a2}")));
    }
    let bound = ms_stepsize_bound(a1, a2, b1, b2);
    let x = (b1 + b2) * dt * dt + (a2 - a1) * dt;
    let a = 1.0 + x;
    if !(dt < bound) || !(a > 0.0 && a < 1.0) {
        return Err(Error::invalid(format!(
            "dt = {dt} is outside the stepsize bound {bound} for a positive rate"
        )));
    }
    let ln_a = x.ln_1p();
    let theta_star = -ln_a / dt;
    let theta_root = log_rate_root(dt, ln_a).ok_or_else(|| Error::invalid("rate equation has no root"))?;
    Ok(MsRate { lambda_star: theta_star.exp(), theta_star, theta_root, dt_bound: bound })
}

/// Almost-sure rate of the explicit scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsRate {
    /// `ϑ* = B^{-1/Δ}` with `B = 1 + b1 Δ^2 - c1 Δ`.
    pub vartheta_star: f64,
    /// `τ* = ln ϑ*`.
    pub tau_star: f64,
    /// `ξ* = τ* - ϑ*^Δ (b2 Δ + c2)`, the decay rate.
    pub xi_star: f64,
    /// Same rate with `τ` from bracketing.
    pub xi_root: f64,
    pub dt_bound: f64,
}

fn cubic_bound(b1: f64, b2: f64, c1: f64, c2: f64, upper: f64) -> f64 {
    let p = |t: f64| {
        2.0 * b1 * b1 * t.powi(3) - (b1 * c2 + c1 * b2 + 3.0 * b1 * c1) * t * t
            + (2.0 * b1 + 2.0 * b2 + c1 * c1) * t
            + c2
            - c1
    };
    let grid = 20_000;
    let mut prev = 0.0;
    for k in 1..=grid {
        let t = upper * k as f64 / grid as f64;
        if p(t) >= 0.0 {
            return bisect(p, prev, t).unwrap_or(t);
        }
        prev = t;
    }
    upper
}

/// Stepsize bound `min(Δ̄1, Δ̄2, Δ̄3, 1)` under which the almost-sure rate is positive.
pub fn as_stepsize_bound(b1: f64, b2: f64, c1: f64, c2: f64) -> f64 {
    if !(c1 > c2) {
        return 0.0;
    }
    let d1 = smallest_positive_quadratic_root(b1, -c1, 1.0);
    let d2 = if b1 > 0.0 { c1 / b1 } else { f64::INFINITY };
    let upper = d1.min(d2).min(1.0);
    cubic_bound(b1, b2, c1, c2, upper).min(upper)
}

pub fn as_rate_equation(dt: f64, b1: f64, b2: f64, c1: f64, c2: f64) -> Result<AsRate> {
    check_dt(dt)?;
    check_nonneg(&[("b1", b1), ("b2", b2), ("c1", c1), ("c2", c2)])?;
    if !(c1 > c2) {
        return Err(Error::Infeasible(format!("almost-sure rate needs c1 > c2, got c1={c1}, c2={c2}")));
    }
    let bound = as_stepsize_bound(b1, b2, c1, c2);
    if !(dt < bound) {
        return Err(Error::invalid(format!("dt = {dt} is outside the stepsize bound {bound}")));
    }
    let x = b1 * dt * dt - c1 * dt;
    let big_b = 1.0 + x;
    let ln_b = x.ln_1p();
    let tau_star = -ln_b / dt;
    let penalty = (b2 * dt + c2) / big_b;
    let tau_root = log_rate_root(dt, ln_b).ok_or_else(|| Error::invalid("rate equation has no root"))?;
    let xi_root = tau_root - (dt * tau_root).exp() * (b2 * dt + c2);
    Ok(AsRate {
        vartheta_star: tau_star.exp(),
        tau_star,
        xi_star: tau_star - penalty,
        xi_root,
        dt_bound: bound,
    })
}

/// Almost-sure rate of the backward scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BemRate {
    /// `η* = (1 + (h1 - ct1)Δ)^{-1/Δ}`.
    pub eta_star: f64,
    /// `κ* = ln η*`.
    pub kappa_star: f64,
    /// `β* = κ* - (ct2 + h2) / (1 + (h1 - ct1)Δ)`, the decay rate.
    pub beta_star: f64,
    pub beta_root: f64,
    pub dt_bound: f64,
}

pub fn bem_rate_equation(dt: f64, ct1: f64, ct2: f64, h1: f64, h2: f64) -> Result<BemRate> {
    check_dt(dt)?;
    check_nonneg(&[("ct1", ct1), ("ct2", ct2), ("h1", h1), ("h2", h2)])?;
    let gap = ct1 - h1;
    if !(gap > 0.0) {
        return Err(Error::Infeasible(format!("backward rate needs ct1 > h1, got ct1={ct1}, h1={h1}")));
    }
    let bound = (1.0 / gap).min(1.0);
    let x = -gap * dt;
    if !(1.0 + x > 0.0) {
        return Err(Error::invalid(format!("dt = {dt} is outside the stepsize bound {bound}")));
    }
    let ln_e = x.ln_1p();
    let kappa_star = -ln_e / dt;
    let kappa_root = log_rate_root(dt, ln_e).ok_or_else(|| Error::invalid("rate equation has no root"))?;
    Ok(BemRate {
        eta_star: kappa_star.exp(),
        kappa_star,
        beta_star: kappa_star - (ct2 + h2) / (1.0 + x),
        beta_root: kappa_root - (dt * kappa_root).exp() * (ct2 + h2),
        dt_bound: bound,
    })
}

/// Mean-square decay rate of the backward scheme, `l1 - l2 - 2 d2`.
pub fn bem_ms_rate(l1: f64, l2: f64, d2: f64) -> Result<f64> {
    check_nonneg(&[("l1", l1), ("l2", l2), ("d2", d2)])?;
    let rate = l1 - l2 - 2.0 * d2;
    if !(rate > 0.0) {
        return Err(Error::Infeasible(format!("l1 - l2 - 2 d2 = {rate} is not positive")));
    }
    Ok(rate)
}

fn check_phi_args(d: usize, q: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(q > 2.0) || !q.is_finite() {
        return Err(Error::invalid(format!("moment order q must exceed 2, got {q}")));
    }
    if d <= 4 && q == 4.0 {
        return Err(Error::invalid("q = 4 is excluded for d <= 4"));
    }
    if d > 4 {
        let critical = d as f64 / (d as f64 - 2.0);
        if (q - critical).abs() <= 1e-12 * critical {
            return Err(Error::invalid(format!("q = d/(d-2) = {critical} is excluded for d = {d}")));
        }
    }
    Ok(())
}

/// Convergence profile of the empirical measure in squared W2.
pub fn phi_of_n(n: usize, d: usize, q: f64) -> Result<f64> {
    check_phi_args(d, q)?;
    if n == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    let nf = n as f64;
    let tail = nf.powf(-(q - 2.0) / q);
    let head = match d {
        1..=3 => nf.powf(-0.5),
        4 => nf.powf(-0.5) * nf.ln_1p(),
        _ => nf.powf(-2.0 / d as f64),
    };
    Ok(head + tail)
}

/// Slope of `ln Φ(N)` for large `N`, ignoring the logarithmic factor at `d = 4`.
pub fn phi_exponent(d: usize, q: f64) -> Result<f64> {
    check_phi_args(d, q)?;
    let head = if d <= 4 { 0.5 } else { 2.0 / d as f64 };
    Ok(-head.min((q - 2.0) / q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub n_values: Vec<usize>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub q: f64,
    pub theoretical_exponent: f64,
}

/// Fits `ln e = ln C + slope ln N` on at least four distinct `N`.
pub fn fit_chaos_rate(n_values: &[usize], errors: &[f64], d: usize, q: f64) -> Result<ChaosReport> {
    if n_values.len() != errors.len() {
        return Err(Error::invalid("N values and errors differ in length"));
    }
    let mut distinct = n_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 distinct N, got {}", distinct.len())));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::invalid(format!("chaos errors must be positive and finite, got {e}")));
    }
    let x: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(ChaosReport {
        n_values: n_values.to_vec(),
        errors: errors.to_vec(),
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        q,
        theoretical_exponent: phi_exponent(d, q)?,
    })
}
