//! Experiment configuration: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Preset;
use crate::scheme::{Reference, SchemeConfig};
use crate::verify::{AssumptionCheckConfig, AssumptionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Rate,
    Chaos,
    Check,
    Control,
    Figures,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::Rate,
        Command::Chaos,
        Command::Check,
        Command::Control,
        Command::Figures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::Chaos => "chaos",
            Command::Check => "check",
            Command::Control => "control",
            Command::Figures => "figures",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    /// Fit window for the reported rate; `[T/3, T]` when absent.
    pub window: Option<(f64, f64)>,
    /// Also write `series_paths.csv` with one column per path.
    pub per_path: bool,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self { window: None, per_path: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateBlock {
    pub dts: Vec<f64>,
    pub window: Option<(f64, f64)>,
}

impl Default for RateBlock {
    fn default() -> Self {
        Self { dts: vec![0.005, 0.3, 0.4], window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosBlock {
    pub n_list: Vec<usize>,
    pub t_eval: f64,
    /// Times of the fixed-`N` sweep.
    pub t_sweep: Vec<f64>,
    pub sweep_n: usize,
    pub reference: Reference,
    /// Moment order for the theoretical exponent; 8 keeps `Φ(N)` on its
    /// `N^{-1/2}` branch in low dimension.
    pub q: f64,
}

impl Default for ChaosBlock {
    fn default() -> Self {
        Self {
            n_list: (3..=10).map(|k| 1usize << k).collect(),
            t_eval: 1.0,
            t_sweep: vec![1.0, 2.0, 3.0],
            sweep_n: 256,
            reference: Reference::MeanOde,
            q: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckBlock {
    pub assumptions: Vec<AssumptionId>,
    pub samples: usize,
    pub radius: f64,
    pub atoms: usize,
    pub slack: f64,
    /// Also propose constants for each assumption.
    pub fit: bool,
}

impl Default for CheckBlock {
    fn default() -> Self {
        let c = AssumptionCheckConfig::default();
        Self {
            assumptions: AssumptionId::ALL.to_vec(),
            samples: c.samples,
            radius: c.radius,
            atoms: c.atoms,
            slack: c.slack,
            fit: false,
        }
    }
}

impl CheckBlock {
    pub fn sampler(&self, seed: u64) -> AssumptionCheckConfig {
        AssumptionCheckConfig {
            samples: self.samples,
            radius: self.radius,
            atoms: self.atoms,
            slack: self.slack,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlBlock {
    /// `(k1, k2)` gains, one run each.
    pub variants: Vec<(f64, f64)>,
    pub window: Option<(f64, f64)>,
    /// Start of the interval on which boundedness is judged.
    pub bound_from: f64,
}

impl Default for ControlBlock {
    fn default() -> Self {
        Self {
            variants: vec![(0.0, 0.0), (7.0, 8.0), (12.0, 10.0)],
            window: None,
            bound_from: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiguresBlock {
    /// Figure ids to run; all when empty.
    pub only: Vec<String>,
    /// Multiplies every canned path count (rounded, at least 1).
    pub path_scale: f64,
}

impl Default for FiguresBlock {
    fn default() -> Self {
        Self { only: Vec::new(), path_scale: 1.0 }
    }
}

fn default_model() -> Preset {
    Preset::Opinion { f: 1.0, g: 2.5, sigma: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: Preset,
    #[serde(default)]
    pub scheme: SchemeConfig,
    /// Overrides `scheme.steps` with `floor(horizon / dt)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chaos: Option<ChaosBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figures: Option<FiguresBlock>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            scheme: SchemeConfig::default(),
            horizon: None,
            out: None,
            simulate: None,
            rate: None,
            chaos: None,
            check: None,
            control: None,
            figures: None,
        }
    }
}

/// Number of whole steps of size `dt` that fit in `horizon`.
pub fn steps_for(horizon: f64, dt: f64) -> Result<u64> {
    let r = horizon / dt;
    if !(r.is_finite() && r >= 1.0 - 1e-9) {
        return Err(Error::Config(format!("horizon {horizon} holds no step of size {dt}")));
    }
    Ok((r + 1e-9 * r).floor() as u64)
}

fn check_window(w: Option<(f64, f64)>, field: &str) -> Result<()> {
    match w {
        Some((a, b)) if !(a.is_finite() && b.is_finite() && a >= 0.0 && b > a) => {
            Err(Error::Config(format!("{field}: window [{a}, {b}] must satisfy 0 <= t0 < t1")))
        }
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Defaults used when no config file is given; `control` starts from the
    /// uncontrolled feedback model.
    pub fn default_for(cmd: Command) -> Self {
        let mut c = Self::default();
        if cmd == Command::Control {
            c.model = Preset::Feedback { k1: 0.0, k2: 0.0, delta_obs: 0.05 };
        }
        c
    }

    /// Parses a JSON document, reporting the offending field path and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!("at `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
        })
    }

    /// Reads a config file. A CSV written by this tool is accepted too: its
    /// header line carries the config it was produced with.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let json = match text.lines().next() {
            Some(first) if first.starts_with('#') => first
                .split_once(" config=")
                .map(|(_, c)| c.to_string())
                .ok_or_else(|| Error::Config(format!("{}: header carries no config", path.display())))?,
            _ => text,
        };
        Self::from_json(&json).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn block_present(&self, cmd: Command) -> bool {
        match cmd {
            Command::Simulate => self.simulate.is_some(),
            Command::Rate => self.rate.is_some(),
            Command::Chaos => self.chaos.is_some(),
            Command::Check => self.check.is_some(),
            Command::Control => self.control.is_some(),
            Command::Figures => self.figures.is_some(),
        }
    }

    /// Fills the block for `cmd` with defaults, applies `horizon`, and
    /// validates. Blocks belonging to other subcommands are rejected.
    pub fn resolve(mut self, cmd: Command) -> Result<Self> {
        let stray: Vec<&str> = Command::ALL
            .iter()
            .filter(|&&c| c != cmd && self.block_present(c))
            .map(|c| c.name())
            .collect();
        if !stray.is_empty() {
            return Err(Error::Config(format!(
                "`{}` does not take the block(s): {}",
                cmd.name(),
                stray.join(", ")
            )));
        }
        if let Some(h) = self.horizon {
            self.scheme.steps = steps_for(h, self.scheme.dt)?;
        }
        self.scheme.validate().map_err(|e| Error::Config(format!("scheme: {e}")))?;
        match cmd {
            Command::Simulate => {
                let b = self.simulate.get_or_insert_with(Default::default);
                check_window(b.window, "simulate.window")?;
            }
            Command::Rate => {
                let b = self.rate.get_or_insert_with(Default::default);
                if b.dts.is_empty() || b.dts.iter().any(|&dt| !(dt > 0.0 && dt < 1.0)) {
                    return Err(Error::Config("rate.dts: need at least one step size in (0, 1)".into()));
                }
                check_window(b.window, "rate.window")?;
            }
            Command::Chaos => {
                let b = self.chaos.get_or_insert_with(Default::default);
                if b.n_list.is_empty() || b.n_list[0] == 0 || b.n_list.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("chaos.n_list: need strictly ascending positive sizes".into()));
                }
                if !(b.t_eval > 0.0) || b.t_sweep.iter().any(|&t| !(t > 0.0)) || b.t_sweep.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("chaos: t_eval and t_sweep must be positive, t_sweep ascending".into()));
                }
                if b.sweep_n == 0 {
                    return Err(Error::Config("chaos.sweep_n must be positive".into()));
                }
                if !(b.q > 2.0) {
                    return Err(Error::Config(format!("chaos.q must exceed 2, got {}", b.q)));
                }
            }
            Command::Check => {
                let seed = self.scheme.seed;
                let b = self.check.get_or_insert_with(Default::default);
                if b.assumptions.is_empty() {
                    return Err(Error::Config("check.assumptions is empty".into()));
                }
                b.sampler(seed).validate().map_err(|e| Error::Config(format!("check: {e}")))?;
            }
            Command::Control => {
                if !matches!(self.model, Preset::Feedback { .. }) {
                    return Err(Error::Config(format!(
                        "control needs the feedback preset, got `{}`",
                        self.model.name()
                    )));
                }
                let b = self.control.get_or_insert_with(Default::default);
                if b.variants.is_empty() {
                    return Err(Error::Config("control.variants is empty".into()));
                }
                check_window(b.window, "control.window")?;
            }
            Command::Figures => {
                let b = self.figures.get_or_insert_with(Default::default);
                if !(b.path_scale > 0.0 && b.path_scale.is_finite()) {
                    return Err(Error::Config("figures.path_scale must be positive".into()));
                }
            }
        }
        self.model.build().map_err(|e| Error::Config(format!("model: {e}")))?;
        Ok(self)
    }

    /// Single-line JSON used in output headers; the output directory is left out.
    pub fn header_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
