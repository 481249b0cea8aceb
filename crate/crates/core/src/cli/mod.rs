//! Experiment runner behind the `mvsde` binary.

pub mod config;
pub mod figures;
pub mod svg;

mod commands;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scheme::{Ensemble, StepRecord};

pub use commands::{
    control_run, rate_sweep, run_chaos, run_check, run_control, run_rate, run_simulate, theoretical_rates, ControlRun,
    RateRow,
};
pub use config::{Command, ExperimentConfig};
pub use figures::{run_figures, FIGURES};

/// What a run wrote and what it found.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub report: Vec<String>,
    pub warnings: Vec<String>,
    /// Assumptions that failed in `check`.
    pub failed_checks: Vec<String>,
    /// `(figure id, error)` for figures that could not be produced.
    pub figure_failures: Vec<(String, String)>,
}

impl Outcome {
    /// Process exit code: 3 when a checked assumption failed, 1 when a
    /// figure could not be produced, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if !self.failed_checks.is_empty() {
            3
        } else if !self.figure_failures.is_empty() {
            1
        } else {
            0
        }
    }
}

/// Exit code for a run that stopped with `err`.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::ImplicitSolveFailure { .. } => 2,
        _ => 1,
    }
}

/// Resolves `cfg` for `cmd` and runs it on a pool of `threads` workers
/// (the global pool when `None`).
pub fn run(cmd: Command, cfg: ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<Outcome> {
    let cfg = cfg.resolve(cmd)?;
    let go = || match cmd {
        Command::Simulate => run_simulate(&cfg, out),
        Command::Rate => run_rate(&cfg, out),
        Command::Chaos => run_chaos(&cfg, out),
        Command::Check => run_check(&cfg, out),
        Command::Control => run_control(&cfg, out),
        Command::Figures => run_figures(&cfg, out),
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// A CSV table with comment lines before and after.
#[derive(Debug, Clone, Default)]
pub(crate) struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), ..Self::default() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, header: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{header}");
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(s, "{}", row.join(","));
        }
        for line in &self.footer {
            let _ = writeln!(s, "# {line}");
        }
        s
    }
}

/// Writes files into one directory and remembers them.
pub(crate) struct Output<'a> {
    dir: &'a Path,
    header: String,
    pub files: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    pub fn new(dir: &'a Path, label: &str, cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir, header: header_line(label, cfg), files: Vec::new() })
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(name, &table.render(&self.header))
    }

    pub fn svg(&mut self, name: &str, plot: &svg::Plot) -> Result<()> {
        self.write(name, &plot.render())
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }
}

/// `# mvsde <label> seed=<seed> config=<json>`; the JSON replays the run.
pub fn header_line(label: &str, cfg: &ExperimentConfig) -> String {
    format!("# mvsde {label} seed={} config={}", cfg.scheme.seed, cfg.header_json())
}

pub(crate) fn series_table(records: &[StepRecord], d: usize) -> Table {
    let mut columns = vec!["step".to_string(), "time".into(), "mean_square".into()];
    if d == 1 {
        columns.push("mean".into());
    } else {
        columns.extend((0..d).map(|c| format!("mean_{c}")));
    }
    columns.extend(["max_norm", "implicit_iters", "implicit_residual", "diverged"].map(String::from));
    let mut t = Table::new(columns);
    for r in records {
        let mut row = vec![r.step.to_string(), num(r.time), num(r.mean_square)];
        row.extend(r.mean.iter().map(|&m| num(m)));
        row.extend([
            num(r.max_norm),
            r.implicit_iters.to_string(),
            num(r.implicit_residual),
            r.diverged.to_string(),
        ]);
        t.push(row);
    }
    t
}

/// Per-path mean-square columns; cells after a path stopped are empty.
pub(crate) fn paths_table(ens: &Ensemble) -> Table {
    let len = ens.paths.iter().map(|p| p.len()).max().unwrap_or(0);
    let mut t = Table::new(
        ["step".to_string(), "time".into()]
            .into_iter()
            .chain(ens.paths.iter().map(|p| format!("path_{}", p.path))),
    );
    for k in 0..len {
        let mut row = vec![k.to_string(), num(k as f64 * ens.dt)];
        row.extend(ens.paths.iter().map(|p| p.mean_square.get(k).map(|&v| num(v)).unwrap_or_default()));
        t.push(row);
    }
    t
}

pub(crate) fn first_divergence(ens: &Ensemble) -> Option<f64> {
    ens.paths.iter().filter_map(|p| p.diverged_at).min().map(|k| k as f64 * ens.dt)
}

pub(crate) fn ms_plot(title: &str, ens: &Ensemble) -> svg::Plot {
    let records = ens.averaged();
    svg::Plot::new(title, "t", "(1/M) Σ (1/N) Σ |Y|²").with(svg::Series::new(
        format!("M = {}", ens.paths.len()),
        records.iter().map(|r| r.time).collect(),
        records.iter().map(|r| r.mean_square).collect(),
    ))
}

pub(crate) fn paths_plot(title: &str, ens: &Ensemble) -> svg::Plot {
    let mut plot = svg::Plot::new(title, "t", "(1/N) Σ |Y|² per path");
    for p in &ens.paths {
        let xs = (0..p.len()).map(|k| k as f64 * ens.dt).collect();
        plot = plot.with(svg::Series::unlabeled(xs, p.mean_square.clone()));
    }
    plot
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![num(1.0), num(0.5)]);
        t.footer.push("done".into());
        assert_eq!(t.render("# h"), "# h\na,b\n1,0.5\n# done\n");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(error_exit_code(&Error::Config("x".into())), 1);
        let e = Error::ImplicitSolveFailure { particle: 0, residual: 1.0, iterations: 3 };
        assert_eq!(error_exit_code(&e), 2);
        let o = Outcome { failed_checks: vec!["A2.1".into()], ..Outcome::default() };
        assert_eq!(o.exit_code(), 3);
    }
}
