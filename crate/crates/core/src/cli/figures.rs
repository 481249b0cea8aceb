//! Canned desk-scale runs for the twelve reference figures.

use std::path::Path;

use crate::analysis::default_window;
use crate::error::Result;
use crate::model::Preset;
use crate::scheme::{simulate_paths, SchemeConfig, SchemeKind};

use super::commands::{control_run, gain_tag, rate_plot, rate_sweep, rate_table};
use super::config::{steps_for, ExperimentConfig, RateBlock};
use super::svg::{Plot, Series};
use super::{first_divergence, ms_plot, num, paths_plot, paths_table, series_table, Outcome, Output, Table};

#[derive(Debug, Clone, Copy)]
pub struct Figure {
    pub id: &'static str,
    pub title: &'static str,
}

pub const FIGURES: [Figure; 12] = [
    Figure { id: "fig01", title: "opinion dynamics, mean-square decay (EM)" },
    Figure { id: "fig02", title: "opinion dynamics, 100 paths (EM)" },
    Figure { id: "fig03", title: "opinion dynamics, step sizes 0.005 / 0.3 / 0.4" },
    Figure { id: "fig04", title: "mean-field linear model, N = 10 / 100 / 1000" },
    Figure { id: "fig05", title: "feedback model without control, mean square" },
    Figure { id: "fig06", title: "feedback model without control, paths" },
    Figure { id: "fig07", title: "feedback k = (7, 8), mean square" },
    Figure { id: "fig08", title: "feedback k = (7, 8), paths" },
    Figure { id: "fig09", title: "feedback k = (12, 10), mean square" },
    Figure { id: "fig10", title: "feedback k = (12, 10), paths" },
    Figure { id: "fig11", title: "cubic drift, backward EM, mean square" },
    Figure { id: "fig12", title: "cubic drift, backward EM, paths" },
];

struct Ctx<'a> {
    dir: &'a Path,
    seed: u64,
    path_scale: f64,
}

impl Ctx<'_> {
    fn paths(&self, m: usize) -> usize {
        ((m as f64 * self.path_scale).round() as usize).max(1)
    }

    fn config(&self, model: Preset, scheme: SchemeKind, dt: f64, n: usize, paths: usize, horizon: f64) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            model,
            scheme: SchemeConfig {
                scheme,
                dt,
                steps: steps_for(horizon, dt)?,
                n,
                paths: self.paths(paths),
                seed: self.seed,
                ..SchemeConfig::default()
            },
            horizon: Some(horizon),
            ..ExperimentConfig::default()
        })
    }
}

fn title(id: &str) -> String {
    let f = FIGURES.iter().find(|f| f.id == id).expect("known figure");
    format!("{}: {}", f.id, f.title)
}

/// Mean-square and per-path figures from one ensemble.
fn pair(ctx: &Ctx, ids: [&str; 2], stem: &str, cfg: &ExperimentConfig) -> Result<Vec<std::path::PathBuf>> {
    let model = cfg.model.build()?;
    let ens = simulate_paths(&model, &cfg.scheme)?;
    let mut o = Output::new(ctx.dir, &format!("figures {} {}", ids[0], ids[1]), cfg)?;
    let mut ms = series_table(&ens.averaged(), model.d);
    ms.footer.push(match first_divergence(&ens) {
        Some(t) => format!("diverged=true first_divergence_time={}", num(t)),
        None => "diverged=false".into(),
    });
    o.csv(&format!("{}_{stem}_ms.csv", ids[0]), &ms)?;
    o.svg(&format!("{}_{stem}_ms.svg", ids[0]), &ms_plot(&title(ids[0]), &ens))?;
    o.csv(&format!("{}_{stem}_paths.csv", ids[1]), &paths_table(&ens))?;
    o.svg(&format!("{}_{stem}_paths.svg", ids[1]), &paths_plot(&title(ids[1]), &ens))?;
    Ok(o.files)
}

fn opinion() -> Preset {
    Preset::Opinion { f: 1.0, g: 2.5, sigma: 1.0 }
}

fn fig_opinion(ctx: &Ctx) -> Result<Vec<std::path::PathBuf>> {
    let cfg = ctx.config(opinion(), SchemeKind::Em, 0.01, 1000, 100, 3.0)?;
    pair(ctx, ["fig01", "fig02"], "opinion", &cfg)
}

fn fig_rate(ctx: &Ctx) -> Result<Vec<std::path::PathBuf>> {
    let mut cfg = ctx.config(opinion(), SchemeKind::Em, 0.005, 1000, 100, 6.0)?;
    let block = RateBlock::default();
    cfg.rate = Some(block.clone());
    let model = cfg.model.build()?;
    let mut warnings = Vec::new();
    let rows = rate_sweep(&model, &cfg.scheme, &block.dts, block.window, &mut warnings)?;
    let mut o = Output::new(ctx.dir, "figures fig03", &cfg)?;
    let mut table = rate_table(&rows);
    table.footer.extend(warnings);
    o.csv("fig03_rates.csv", &table)?;
    o.svg("fig03_rates.svg", &rate_plot(&title("fig03"), &rows))?;
    Ok(o.files)
}

fn fig_linear(ctx: &Ctx) -> Result<Vec<std::path::PathBuf>> {
    let sizes = [10usize, 100, 1000];
    let mut cfg = ctx.config(Preset::Linear, SchemeKind::Em, 0.01, sizes[0], 100, 3.0)?;
    let model = cfg.model.build()?;
    let mut columns = vec!["step".to_string(), "time".into()];
    columns.extend(sizes.iter().map(|n| format!("ms_n{n}")));
    columns.extend(sizes.iter().map(|n| format!("path0_n{n}")));
    let mut averaged = Vec::new();
    let mut single = Vec::new();
    let mut ms_plot = Plot::new(title("fig04"), "t", "(1/M) Σ (1/N) Σ |Y|²");
    let mut path_plot = Plot::new(format!("{} (one path)", title("fig04")), "t", "(1/N) Σ |Y|²");
    let base = cfg.scheme.clone();
    for &n in &sizes {
        let ens = simulate_paths(&model, &SchemeConfig { n, ..base.clone() })?;
        let rec = ens.averaged();
        let times: Vec<f64> = rec.iter().map(|r| r.time).collect();
        let ms: Vec<f64> = rec.iter().map(|r| r.mean_square).collect();
        let p0 = ens.paths[0].mean_square.clone();
        ms_plot = ms_plot.with(Series::new(format!("N = {n}"), times.clone(), ms.clone()));
        path_plot = path_plot.with(Series::new(format!("N = {n}"), times, p0.clone()));
        averaged.push(ms);
        single.push(p0);
    }
    // Record the sweep in the header config through the particle count of the last run.
    cfg.scheme.n = *sizes.last().expect("nonempty");
    let mut table = Table::new(columns);
    let len = averaged.iter().chain(&single).map(Vec::len).min().unwrap_or(0);
    for k in 0..len {
        let mut row = vec![k.to_string(), num(k as f64 * base.dt)];
        row.extend(averaged.iter().map(|s| num(s[k])));
        row.extend(single.iter().map(|s| num(s[k])));
        table.push(row);
    }
    table.footer.push(format!("particle_counts={sizes:?}"));
    let mut o = Output::new(ctx.dir, "figures fig04", &cfg)?;
    o.csv("fig04_linear.csv", &table)?;
    o.svg("fig04_linear_ms.svg", &ms_plot)?;
    o.svg("fig04_linear_path.svg", &path_plot)?;
    Ok(o.files)
}

fn fig_control(ctx: &Ctx, ids: [&str; 2], gains: (f64, f64), horizon: f64) -> Result<Vec<std::path::PathBuf>> {
    let delta_obs = 0.05;
    let cfg = ctx.config(
        Preset::Feedback { k1: gains.0, k2: gains.1, delta_obs },
        SchemeKind::Em,
        0.01,
        1000,
        100,
        horizon,
    )?;
    let run = control_run(delta_obs, gains, &cfg.scheme, default_window(horizon), 1.0)?;
    let ens = &run.ensemble;
    let stem = format!("feedback_{}", gain_tag(gains.0, gains.1));
    let mut o = Output::new(ctx.dir, &format!("figures {} {}", ids[0], ids[1]), &cfg)?;
    let mut ms = series_table(&ens.averaged(), 1);
    ms.footer.push(match run.diverged_at {
        Some(t) => format!("diverged=true first_divergence_time={}", num(t)),
        None => format!(
            "diverged=false growth_ratio={} ms_slope={}",
            run.growth_ratio.map(num).unwrap_or_default(),
            run.ms.as_ref().map(|m| num(m.empirical_slope)).unwrap_or_default()
        ),
    });
    o.csv(&format!("{}_{stem}_ms.csv", ids[0]), &ms)?;
    o.svg(&format!("{}_{stem}_ms.svg", ids[0]), &ms_plot(&title(ids[0]), ens))?;
    o.csv(&format!("{}_{stem}_paths.csv", ids[1]), &paths_table(ens))?;
    o.svg(&format!("{}_{stem}_paths.svg", ids[1]), &paths_plot(&title(ids[1]), ens))?;
    Ok(o.files)
}

fn fig_cubic_ms(ctx: &Ctx) -> Result<Vec<std::path::PathBuf>> {
    let cfg = ctx.config(Preset::Cubic { rho1: 0.0, rho2: 1.0 }, SchemeKind::Bem, 0.004, 300, 500, 2.0)?;
    let model = cfg.model.build()?;
    let ens = simulate_paths(&model, &cfg.scheme)?;
    let mut o = Output::new(ctx.dir, "figures fig11", &cfg)?;
    let mut table = series_table(&ens.averaged(), 1);
    table.footer.push(format!("max_implicit_residual={}", num(ens.max_implicit_residual())));
    o.csv("fig11_cubic_ms.csv", &table)?;
    o.svg("fig11_cubic_ms.svg", &ms_plot(&title("fig11"), &ens))?;
    Ok(o.files)
}

fn fig_cubic_paths(ctx: &Ctx) -> Result<Vec<std::path::PathBuf>> {
    let cfg = ctx.config(Preset::Cubic { rho1: 1.0, rho2: 0.0 }, SchemeKind::Bem, 0.004, 300, 30, 2.0)?;
    let model = cfg.model.build()?;
    let ens = simulate_paths(&model, &cfg.scheme)?;
    let mut o = Output::new(ctx.dir, "figures fig12", &cfg)?;
    o.csv("fig12_cubic_paths.csv", &paths_table(&ens))?;
    o.svg("fig12_cubic_paths.svg", &paths_plot(&title("fig12"), &ens))?;
    Ok(o.files)
}

type Job = fn(&Ctx) -> Result<Vec<std::path::PathBuf>>;

const JOBS: [(&[&str], Job); 8] = [
    (&["fig01", "fig02"], fig_opinion),
    (&["fig03"], fig_rate),
    (&["fig04"], fig_linear),
    (&["fig05", "fig06"], |c| fig_control(c, ["fig05", "fig06"], (0.0, 0.0), 5.0)),
    (&["fig07", "fig08"], |c| fig_control(c, ["fig07", "fig08"], (7.0, 8.0), 10.0)),
    (&["fig09", "fig10"], |c| fig_control(c, ["fig09", "fig10"], (12.0, 10.0), 10.0)),
    (&["fig11"], fig_cubic_ms),
    (&["fig12"], fig_cubic_paths),
];

/// Runs the canned figure configs one after another under `out/figures`.
/// A failing figure is recorded and the rest still run.
pub fn run_figures(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let block = cfg.figures.clone().unwrap_or_default();
    if let Some(bad) = block.only.iter().find(|id| !FIGURES.iter().any(|f| &f.id == id)) {
        return Err(crate::Error::Config(format!("figures.only: unknown figure `{bad}`")));
    }
    let dir = out.join("figures");
    let ctx = Ctx { dir: &dir, seed: cfg.scheme.seed, path_scale: block.path_scale };
    let mut outcome = Outcome::default();
    for (ids, job) in JOBS {
        if !block.only.is_empty() && !ids.iter().any(|id| block.only.iter().any(|o| o == id)) {
            continue;
        }
        match job(&ctx) {
            Ok(files) => {
                outcome.report.push(format!("{}: {} files", ids.join(", "), files.len()));
                outcome.files.extend(files);
            }
            Err(e) => {
                for id in ids {
                    outcome.figure_failures.push((id.to_string(), e.to_string()));
                }
                outcome.report.push(format!("{}: FAILED: {e}", ids.join(", ")));
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_figures_each_scheduled_once() {
        assert_eq!(FIGURES.len(), 12);
        let mut scheduled: Vec<&str> = JOBS.iter().flat_map(|(ids, _)| ids.iter().copied()).collect();
        scheduled.sort_unstable();
        let listed: Vec<&str> = FIGURES.iter().map(|f| f.id).collect();
        assert_eq!(scheduled, listed);
    }
}
