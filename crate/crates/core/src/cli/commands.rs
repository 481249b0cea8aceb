use std::path::Path;

use crate::analysis::{
    as_rate_equation, default_window, estimate_rate, fit_chaos_rate, ms_rate_equation, pathwise_slopes,
    PathwiseSummary, StabilityReport, StatisticKind,
};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Preset};
use crate::scheme::{simulate_coupled, simulate_paths, Ensemble, SchemeConfig, SchemeKind};
use crate::verify::{check_assumption, fit_constants, Verdict};

use super::config::{steps_for, ExperimentConfig};
use super::svg::{Plot, Scale, Series};
use super::{
    first_divergence, ms_plot, num, opt_num, paths_plot, paths_table, series_table, Outcome, Output, Table,
};

fn ms_rate(ens: &Ensemble, window: (f64, f64)) -> Result<StabilityReport> {
    let rec = ens.averaged();
    let times: Vec<f64> = rec.iter().map(|r| r.time).collect();
    let ms: Vec<f64> = rec.iter().map(|r| r.mean_square).collect();
    estimate_rate(&times, &ms, window, StatisticKind::MeanSquare)
}

fn as_rate(ens: &Ensemble, window: (f64, f64)) -> Result<PathwiseSummary> {
    let times = (0..=ens.paths.iter().map(|p| p.len()).max().unwrap_or(0))
        .map(|k| k as f64 * ens.dt)
        .collect::<Vec<_>>();
    let series: Vec<Vec<f64>> = ens.paths.iter().map(|p| p.mean_square.clone()).collect();
    pathwise_slopes(&times, &series, window)
}

pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.simulate.clone().unwrap_or_default();
    let model = cfg.model.build()?;
    let ens = simulate_paths(&model, &cfg.scheme)?;
    let mut outcome = Outcome::default();
    let mut table = series_table(&ens.averaged(), model.d);
    match first_divergence(&ens) {
        Some(t) => {
            table.footer.push(format!("diverged=true first_divergence_time={}", num(t)));
            outcome.report.push(format!("diverged at t = {t}"));
        }
        None => {
            table.footer.push("diverged=false".into());
            let window = block.window.unwrap_or_else(|| default_window(cfg.scheme.horizon()));
            match ms_rate(&ens, window) {
                Ok(r) => {
                    table.footer.push(format!("ms_slope={} window={:?}", num(r.empirical_slope), window));
                    outcome
                        .report
                        .push(format!("mean-square slope {:.4} on [{}, {}]", r.empirical_slope, window.0, window.1));
                }
                Err(e) => outcome.warnings.push(format!("no rate fit: {e}")),
            }
        }
    }
    let mut o = Output::new(out, "simulate", cfg)?;
    o.csv("series.csv", &table)?;
    o.svg("series.svg", &ms_plot(&format!("{} / {}", model.name, cfg.scheme.scheme.label()), &ens))?;
    if block.per_path {
        o.csv("series_paths.csv", &paths_table(&ens))?;
        o.svg("series_paths.svg", &paths_plot(&format!("{} per path", model.name), &ens))?;
    }
    outcome.files = o.files;
    Ok(outcome)
}

/// One step size of a rate sweep.
#[derive(Debug, Clone)]
pub struct RateRow {
    pub dt: f64,
    pub steps: u64,
    pub ms: Option<StabilityReport>,
    pub pathwise: Option<PathwiseSummary>,
    pub theta_star: Option<f64>,
    pub xi_star: Option<f64>,
    pub diverged: bool,
    pub times: Vec<f64>,
    pub mean_square: Vec<f64>,
}

/// Theoretical mean-square and almost-sure decay rates of the explicit
/// scheme at `dt`, each `None` with a reason when unavailable.
pub fn theoretical_rates(model: &ModelSpec, kind: SchemeKind, dt: f64) -> (Result<f64, String>, Result<f64, String>) {
    if kind != SchemeKind::Em {
        let why = "theoretical columns describe the explicit scheme".to_string();
        return (Err(why.clone()), Err(why));
    }
    let c = &model.constants;
    let theta = match (c.a1, c.a2, c.b1, c.b2) {
        (Some(a1), Some(a2), Some(b1), Some(b2)) => ms_rate_equation(dt, a1, a2, b1, b2)
            .map(|r| r.theta_star)
            .map_err(|e| e.to_string()),
        _ => Err(format!("model `{}` declares no (a1, a2, b1, b2)", model.name)),
    };
    let xi = match (c.b1, c.b2, c.c1, c.c2) {
        (Some(b1), Some(b2), Some(c1), Some(c2)) => as_rate_equation(dt, b1, b2, c1, c2)
            .map(|r| r.xi_star)
            .map_err(|e| e.to_string()),
        _ => Err(format!("model `{}` declares no (b1, b2, c1, c2)", model.name)),
    };
    (theta, xi)
}

/// Simulates every step size in `dts` over the horizon of `scheme`.
pub fn rate_sweep(
    model: &ModelSpec,
    scheme: &SchemeConfig,
    dts: &[f64],
    window: Option<(f64, f64)>,
    warnings: &mut Vec<String>,
) -> Result<Vec<RateRow>> {
    let horizon = scheme.horizon();
    let window = window.unwrap_or_else(|| default_window(horizon));
    dts.iter()
        .map(|&dt| {
            let cfg = SchemeConfig { dt, steps: steps_for(horizon, dt)?, ..scheme.clone() };
            let ens = simulate_paths(model, &cfg)?;
            let rec = ens.averaged();
            let diverged = ens.any_diverged();
            let mut note = |what: &str, e: String| warnings.push(format!("dt = {dt}: {what}: {e}"));
            let (ms, pathwise) = if diverged {
                note("no fit", "a path diverged".into());
                (None, None)
            } else {
                let ms = ms_rate(&ens, window).map_err(|e| note("mean-square fit", e.to_string())).ok();
                let pw = as_rate(&ens, window).map_err(|e| note("pathwise fit", e.to_string())).ok();
                (ms, pw)
            };
            let (theta, xi) = theoretical_rates(model, cfg.scheme, dt);
            let theta_star = theta.map_err(|e| note("theta*", e)).ok();
            let xi_star = xi.map_err(|e| note("xi*", e)).ok();
            Ok(RateRow {
                dt,
                steps: cfg.steps,
                ms,
                pathwise,
                theta_star,
                xi_star,
                diverged,
                times: rec.iter().map(|r| r.time).collect(),
                mean_square: rec.iter().map(|r| r.mean_square).collect(),
            })
        })
        .collect()
}

pub(crate) fn rate_table(rows: &[RateRow]) -> Table {
    let mut t = Table::new([
        "dt",
        "steps",
        "ms_slope",
        "ms_slope_stderr",
        "theta_star",
        "as_median_slope",
        "xi_star",
        "diverged",
    ]);
    for r in rows {
        t.push(vec![
            num(r.dt),
            r.steps.to_string(),
            opt_num(r.ms.as_ref().map(|m| m.empirical_slope)),
            opt_num(r.ms.as_ref().map(|m| m.slope_stderr)),
            opt_num(r.theta_star),
            opt_num(r.pathwise.as_ref().map(|p| p.median)),
            opt_num(r.xi_star),
            r.diverged.to_string(),
        ]);
    }
    t
}

pub(crate) fn rate_plot(title: &str, rows: &[RateRow]) -> Plot {
    rows.iter().fold(Plot::new(title, "t", "(1/M) Σ (1/N) Σ |Y|²"), |p, r| {
        p.with(Series::new(format!("Δ = {}", r.dt), r.times.clone(), r.mean_square.clone()))
    })
}

pub fn run_rate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.rate.clone().unwrap_or_default();
    let model = cfg.model.build()?;
    let mut outcome = Outcome::default();
    let rows = rate_sweep(&model, &cfg.scheme, &block.dts, block.window, &mut outcome.warnings)?;
    for r in &rows {
        outcome.report.push(format!(
            "dt {:<8} ms slope {:>10} theta* {:>10} as median {:>10} xi* {:>10}",
            r.dt,
            opt_fmt(r.ms.as_ref().map(|m| m.empirical_slope)),
            opt_fmt(r.theta_star),
            opt_fmt(r.pathwise.as_ref().map(|p| p.median)),
            opt_fmt(r.xi_star),
        ));
    }
    let mut o = Output::new(out, "rate", cfg)?;
    o.csv("rates.csv", &rate_table(&rows))?;
    o.svg("rates.svg", &rate_plot(&format!("{}: step-size sweep", model.name), &rows))?;
    outcome.files = o.files;
    Ok(outcome)
}

fn opt_fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

pub fn run_chaos(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.chaos.clone().unwrap_or_default();
    let model = cfg.model.build()?;
    let dt = cfg.scheme.dt;
    let t_max = block.t_sweep.iter().copied().fold(block.t_eval, f64::max);
    let scheme = SchemeConfig { steps: steps_for(t_max, dt)?, ..cfg.scheme.clone() };
    let mut n_values = block.n_list.clone();
    n_values.push(block.sweep_n);
    n_values.sort_unstable();
    n_values.dedup();
    let result = simulate_coupled(&model, &scheme, &n_values, &block.reference)?;
    let k_eval = steps_for(block.t_eval, dt)? as usize;
    let index = |n: usize| n_values.iter().position(|&v| v == n).expect("listed");

    let mut outcome = Outcome::default();
    let errs: Vec<f64> = block.n_list.iter().map(|&n| result.error[index(n)][k_eval]).collect();
    let fit = match fit_chaos_rate(&block.n_list, &errs, model.d, block.q) {
        Ok(f) => Some(f),
        Err(e) => {
            outcome.warnings.push(format!("no slope fit: {e}"));
            None
        }
    };
    let mut table = Table::new(["n", "error", "std_error", "fitted"]);
    for (&n, &e) in block.n_list.iter().zip(&errs) {
        let fitted = fit.as_ref().map(|f| f.prefactor * (n as f64).powf(f.slope));
        table.push(vec![n.to_string(), num(e), num(result.std_error[index(n)][k_eval]), opt_num(fitted)]);
    }
    if let Some(f) = &fit {
        table.footer.push(format!(
            "slope={} slope_stderr={} prefactor={} r_squared={} theoretical_exponent={}",
            num(f.slope),
            num(f.slope_stderr),
            num(f.prefactor),
            num(f.r_squared),
            num(f.theoretical_exponent)
        ));
        outcome.report.push(format!(
            "log-log slope {:.4} ± {:.4} (theory {:.4}) at t = {}",
            f.slope, f.slope_stderr, f.theoretical_exponent, block.t_eval
        ));
    }
    let mut sweep = Table::new(["time", "error", "std_error"]);
    let ns = index(block.sweep_n);
    for &t in &block.t_sweep {
        let k = steps_for(t, dt)? as usize;
        sweep.push(vec![num(t), num(result.error[ns][k]), num(result.std_error[ns][k])]);
        outcome.report.push(format!("N = {} t = {t}: e = {:.6e}", block.sweep_n, result.error[ns][k]));
    }

    let xs: Vec<f64> = block.n_list.iter().map(|&n| n as f64).collect();
    let mut plot = Plot::new(format!("{}: coupled error at t = {}", model.name, block.t_eval), "N", "e_N")
        .scales(Scale::Log, Scale::Log)
        .with(Series::new("e_N", xs.clone(), errs.clone()));
    if let Some(f) = &fit {
        let ys = xs.iter().map(|&n| f.prefactor * n.powf(f.slope)).collect();
        plot = plot.with(Series::new(format!("fit slope {:.3}", f.slope), xs, ys).dashed());
    }
    let mut o = Output::new(out, "chaos", cfg)?;
    o.csv("chaos.csv", &table)?;
    o.csv("chaos_time.csv", &sweep)?;
    o.svg("chaos.svg", &plot)?;
    outcome.files = o.files;
    Ok(outcome)
}

fn constants_cell(c: &[(String, f64)]) -> String {
    c.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(";")
}

fn vec_cell(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

pub fn run_check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.check.clone().unwrap_or_default();
    let model = cfg.model.build()?;
    let sampler = block.sampler(cfg.scheme.seed);
    let mut outcome = Outcome::default();
    let mut table = Table::new([
        "assumption",
        "verdict",
        "constants",
        "part",
        "lhs",
        "rhs",
        "x",
        "y",
        "mu",
        "nu",
        "fitted",
    ]);
    for &id in &block.assumptions {
        let fitted = if block.fit {
            match fit_constants(&model, id, &sampler) {
                Ok(f) => constants_cell(&f.constants),
                Err(Error::Infeasible(why)) => format!("infeasible: {}", why.replace(',', ";")),
                Err(e) => return Err(e),
            }
        } else {
            String::new()
        };
        let row = match check_assumption(&model, id, &sampler) {
            Ok(report) => match &report.verdict {
                Verdict::Pass => {
                    outcome.report.push(format!("{id:<5} pass  {}", constants_cell(&report.constants)));
                    vec![id.to_string(), "pass".into(), constants_cell(&report.constants)]
                        .into_iter()
                        .chain(std::iter::repeat_n(String::new(), 7))
                        .chain([fitted])
                        .collect()
                }
                Verdict::Fail { witness: w } => {
                    outcome.failed_checks.push(id.to_string());
                    outcome.report.push(format!(
                        "{id:<5} FAIL  {} [{}] lhs {:e} > rhs {:e} at x = {:?}",
                        constants_cell(&report.constants),
                        w.part,
                        w.lhs,
                        w.rhs,
                        w.x
                    ));
                    vec![
                        id.to_string(),
                        "fail".into(),
                        constants_cell(&report.constants),
                        w.part.clone(),
                        num(w.lhs),
                        num(w.rhs),
                        vec_cell(&w.x),
                        vec_cell(&w.y),
                        vec_cell(&w.mu),
                        vec_cell(&w.nu),
                        fitted,
                    ]
                }
            },
            Err(Error::MissingConstants { missing, .. }) => {
                outcome.report.push(format!("{id:<5} skip  (no {missing})"));
                vec![id.to_string(), "missing".into(), missing.replace(", ", ";")]
                    .into_iter()
                    .chain(std::iter::repeat_n(String::new(), 7))
                    .chain([fitted])
                    .collect()
            }
            Err(e) => return Err(e),
        };
        table.push(row);
    }
    let mut o = Output::new(out, "check", cfg)?;
    o.csv("check.csv", &table)?;
    outcome.files = o.files;
    Ok(outcome)
}

/// Result of one feedback gain pair.
#[derive(Debug, Clone)]
pub struct ControlRun {
    pub k1: f64,
    pub k2: f64,
    pub ensemble: Ensemble,
    pub diverged_at: Option<f64>,
    /// `max_{t ≥ bound_from} m(t) / m(bound_from)` of the path-averaged statistic.
    pub growth_ratio: Option<f64>,
    pub ms: Option<StabilityReport>,
}

pub fn control_run(
    delta_obs: f64,
    (k1, k2): (f64, f64),
    scheme: &SchemeConfig,
    window: (f64, f64),
    bound_from: f64,
) -> Result<ControlRun> {
    let model = Preset::Feedback { k1, k2, delta_obs }.build()?;
    let ensemble = simulate_paths(&model, scheme)?;
    let diverged_at = first_divergence(&ensemble);
    let rec = ensemble.averaged();
    let k0 = steps_for(bound_from, scheme.dt).unwrap_or(0) as usize;
    let growth_ratio = (diverged_at.is_none() && k0 < rec.len()).then(|| {
        let base = rec[k0].mean_square;
        rec[k0..].iter().map(|r| r.mean_square).fold(f64::NEG_INFINITY, f64::max) / base
    });
    let ms = if diverged_at.is_none() { ms_rate(&ensemble, window).ok() } else { None };
    Ok(ControlRun { k1, k2, ensemble, diverged_at, growth_ratio, ms })
}

pub(crate) fn gain_tag(k1: f64, k2: f64) -> String {
    format!("k{k1}_{k2}")
}

pub fn run_control(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.control.clone().unwrap_or_default();
    let Preset::Feedback { delta_obs, .. } = cfg.model else {
        return Err(Error::Config("control needs the feedback preset".into()));
    };
    let window = block.window.unwrap_or_else(|| default_window(cfg.scheme.horizon()));
    let mut outcome = Outcome::default();
    let mut o = Output::new(out, "control", cfg)?;
    let mut summary = Table::new(["k1", "k2", "diverged", "diverged_time", "growth_ratio", "ms_slope"]);
    let mut plot = Plot::new(format!("feedback control, δ = {delta_obs}"), "t", "(1/M) Σ (1/N) Σ |Y|²");
    for &gains in &block.variants {
        let run = control_run(delta_obs, gains, &cfg.scheme, window, block.bound_from)?;
        let rec = run.ensemble.averaged();
        o.csv(&format!("control_{}.csv", gain_tag(run.k1, run.k2)), &series_table(&rec, 1))?;
        plot = plot.with(Series::new(
            format!("k1 = {}, k2 = {}", run.k1, run.k2),
            rec.iter().map(|r| r.time).collect(),
            rec.iter().map(|r| r.mean_square).collect(),
        ));
        summary.push(vec![
            num(run.k1),
            num(run.k2),
            run.diverged_at.is_some().to_string(),
            opt_num(run.diverged_at),
            opt_num(run.growth_ratio),
            opt_num(run.ms.as_ref().map(|m| m.empirical_slope)),
        ]);
        outcome.report.push(match run.diverged_at {
            Some(t) => format!("k = ({}, {}): diverged at t = {t}", run.k1, run.k2),
            None => format!(
                "k = ({}, {}): bounded, growth ratio {}, slope {}",
                run.k1,
                run.k2,
                opt_fmt(run.growth_ratio),
                opt_fmt(run.ms.as_ref().map(|m| m.empirical_slope))
            ),
        });
    }
    o.csv("control.csv", &summary)?;
    o.svg("control.svg", &plot)?;
    outcome.files = o.files;
    Ok(outcome)
}
