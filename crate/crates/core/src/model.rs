//! Coefficient interface `b(x, μ)`, `σ(x, μ)` and the shipped presets.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{MeasureView, ParticleCloud};
use crate::rng::InitialLaw;

/// Held observation used by discrete-time feedback: the particle's own state
/// and the population mean, both taken at the last observation time.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub state: &'a [f64],
    pub mean: &'a [f64],
}

/// Drift and diffusion of a McKean-Vlasov equation.
///
/// Implementations must be pure: identical inputs give bit-identical
/// outputs. `out` has length `d` for the drift and `d * m` (row-major) for
/// the diffusion.
pub trait Coefficients: Send + Sync + fmt::Debug {
    fn drift(&self, x: &[f64], mu: &MeasureView<'_>, obs: Option<Observation<'_>>, out: &mut [f64]);

    fn diffusion(&self, x: &[f64], mu: &MeasureView<'_>, out: &mut [f64]);

    /// Jacobian of the drift in `x` (d×d, row-major), holding `μ` and any
    /// observation fixed. Returns `false` when not available, in which case
    /// the implicit solver differentiates numerically.
    fn drift_jacobian(&self, _x: &[f64], _mu: &MeasureView<'_>, _out: &mut [f64]) -> bool {
        false
    }
}

/// Constants of the structural assumptions a model is known to satisfy.
///
/// Every field is optional; `verify` reports which ones a check needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConstants {
    // A2.1 (monotonicity)
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    // A2.2 (dissipativity with moment order q)
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub q: Option<f64>,
    // A5.1 (linear growth of the drift)
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    // A5.2 (dissipativity weighted by the Brownian dimension)
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    // A6.1 (bound at the origin)
    pub c0: Option<f64>,
    // A6.2 (split diffusion)
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub d2: Option<f64>,
    pub p0: Option<f64>,
    // A6.3
    pub ct1: Option<f64>,
    pub ct2: Option<f64>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
}

impl RateConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("a1", self.a1),
            ("a2", self.a2),
            ("q", self.q),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c0", self.c0),
            ("l1", self.l1),
            ("l2", self.l2),
            ("d2", self.d2),
            ("p0", self.p0),
            ("ct1", self.ct1),
            ("ct2", self.ct2),
            ("h1", self.h1),
            ("h2", self.h2),
        ];
        for (name, v) in all {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!("constant {name} must be finite and >= 0, got {v}")));
                }
            }
        }
        if let Some(q) = self.q {
            if q < 2.0 {
                return Err(Error::invalid(format!("q must be >= 2, got {q}")));
            }
        }
        if let Some(p0) = self.p0 {
            if p0 < 3.0 {
                return Err(Error::invalid(format!("p0 must be >= 3, got {p0}")));
            }
        }
        Ok(())
    }

    /// Moment order used by A2.2; 2 when undeclared.
    pub fn q_or_default(&self) -> f64 {
        self.q.unwrap_or(2.0)
    }
}

/// Mean dynamics of a drift of the form `b(x, μ) = -α x + β mean(μ) + (zero-mean terms)`,
/// which lets the limit law's mean be propagated without particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMeanDrift {
    pub alpha: f64,
    pub beta: f64,
}

impl AffineMeanDrift {
    /// Continuous-time decay rate of the mean: `m' = -(α - β) m`.
    pub fn rate(&self) -> f64 {
        self.alpha - self.beta
    }
}

/// A fully specified model: coefficients, dimensions, initial law, constants.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub d: usize,
    pub m: usize,
    coefficients: Arc<dyn Coefficients>,
    pub constants: RateConstants,
    pub initial_law: InitialLaw,
    /// Observation gap δ for models with discrete-time feedback.
    pub observation_gap: Option<f64>,
    pub mean_drift: Option<AffineMeanDrift>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("coefficients", &self.coefficients)
            .field("constants", &self.constants)
            .field("initial_law", &self.initial_law)
            .field("observation_gap", &self.observation_gap)
            .finish()
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        m: usize,
        coefficients: Arc<dyn Coefficients>,
        initial_law: InitialLaw,
    ) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid(format!("model dimensions must be positive, got d={d}, m={m}")));
        }
        Ok(Self {
            name: name.into(),
            d,
            m,
            coefficients,
            constants: RateConstants::default(),
            initial_law,
            observation_gap: None,
            mean_drift: None,
        })
    }

    pub fn with_constants(mut self, constants: RateConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn with_initial_law(mut self, law: InitialLaw) -> Self {
        self.initial_law = law;
        self
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    pub fn uses_observations(&self) -> bool {
        self.observation_gap.is_some()
    }

    pub fn drift(&self, x: &[f64], mu: &MeasureView<'_>, obs: Option<Observation<'_>>) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.coefficients.drift(x, mu, obs, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64], mu: &MeasureView<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.m];
        self.coefficients.diffusion(x, mu, &mut out);
        out
    }

    pub fn drift_jacobian(&self, x: &[f64], mu: &MeasureView<'_>) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.d * self.d];
        self.coefficients.drift_jacobian(x, mu, &mut out).then_some(out)
    }
}

/// Observed states and mean at the last observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSnapshot {
    pub state_obs: Vec<f64>,
    pub mean_obs: Vec<f64>,
    pub obs_time: f64,
    pub obs_step: u64,
}

impl ObservationSnapshot {
    pub fn take(cloud: &ParticleCloud, mean: &[f64]) -> Self {
        Self {
            state_obs: cloud.atoms().to_vec(),
            mean_obs: mean.to_vec(),
            obs_time: cloud.time,
            obs_step: cloud.step,
        }
    }

    pub fn for_particle(&self, i: usize, d: usize) -> Observation<'_> {
        Observation {
            state: &self.state_obs[i * d..(i + 1) * d],
            mean: &self.mean_obs,
        }
    }
}

fn default_f() -> f64 {
    1.0
}
fn default_g() -> f64 {
    2.5
}
fn default_one() -> f64 {
    1.0
}
fn default_delta_obs() -> f64 {
    0.05
}

/// Named preset, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// Opinion dynamics with a stubborn agent: `b = f (mean - x) - g x`, `σ = sigma x`.
    Opinion {
        #[serde(default = "default_f")]
        f: f64,
        #[serde(default = "default_g")]
        g: f64,
        #[serde(default = "default_one")]
        sigma: f64,
    },
    /// `b = -3.5 x + mean`, `σ = x + mean / 2`.
    Linear,
    /// `b = 2x + mean - k1 x_obs - k2 mean_obs`, `σ = x`, observed every `delta_obs`.
    Feedback {
        #[serde(default)]
        k1: f64,
        #[serde(default)]
        k2: f64,
        #[serde(default = "default_delta_obs")]
        delta_obs: f64,
    },
    /// `b = -2x^3 - 4x + sin(mean)`, `σ = rho1 x + rho2 x^2 + sin(mean)`.
    Cubic {
        #[serde(default)]
        rho1: f64,
        #[serde(default = "default_one")]
        rho2: f64,
    },
    /// `b = σ = 0`.
    Zero,
    /// Deterministic decay `b = -rate x`, `σ = 0`.
    Exponential {
        #[serde(default = "default_one")]
        rate: f64,
    },
}

impl Preset {
    pub const NAMES: [&'static str; 6] = ["opinion", "linear", "feedback", "cubic", "zero", "exponential"];

    pub fn build(&self) -> Result<ModelSpec> {
        match *self {
            Preset::Opinion { f, g, sigma } => Ok(preset_opinion(f, g, sigma)),
            Preset::Linear => Ok(preset_linear()),
            Preset::Feedback { k1, k2, delta_obs } => preset_feedback(k1, k2, delta_obs),
            Preset::Cubic { rho1, rho2 } => Ok(preset_cubic(rho1, rho2)),
            Preset::Zero => Ok(preset_zero()),
            Preset::Exponential { rate } => Ok(preset_exponential(rate)),
        }
    }

    /// Looks a preset up by name with parameters given as a JSON object.
    pub fn from_name(name: &str, params: &serde_json::Value) -> Result<Self> {
        let mut obj = match params {
            serde_json::Value::Null => serde_json::Map::new(),
            serde_json::Value::Object(o) => o.clone(),
            other => return Err(Error::Config(format!("preset parameters must be an object, got {other}"))),
        };
        obj.insert("name".into(), serde_json::Value::String(name.into()));
        serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| {
            if Self::NAMES.contains(&name) {
                Error::Config(format!("preset `{name}`: {e}"))
            } else {
                Error::Config(format!("unknown preset `{name}` (known: {})", Self::NAMES.join(", ")))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Opinion { .. } => "opinion",
            Preset::Linear => "linear",
            Preset::Feedback { .. } => "feedback",
            Preset::Cubic { .. } => "cubic",
            Preset::Zero => "zero",
            Preset::Exponential { .. } => "exponential",
        }
    }
}

#[derive(Debug)]
struct Opinion {
    f: f64,
    g: f64,
    sigma: f64,
}

impl Coefficients for Opinion {
    fn drift(&self, x: &[f64], mu: &MeasureView<'_>, _obs: Option<Observation<'_>>, out: &mut [f64]) {
        out[0] = self.f * (mu.mean1() - x[0]) - self.g * x[0];
    }

    fn diffusion(&self, x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) {
        out[0] = self.sigma * x[0];
    }

    fn drift_jacobian(&self, _x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) -> bool {
        out[0] = -self.f - self.g;
        true
    }
}

/// Opinion dynamics with a stubborn agent.
pub fn preset_opinion(f: f64, g: f64, sigma: f64) -> ModelSpec {
    let law = InitialLaw { mean: 2.0, std: 1.0 };
    let mut spec = ModelSpec::new("opinion", 1, 1, Arc::new(Opinion { f, g, sigma }), law)
        .expect("static dimensions");
    if (f, g, sigma) == (1.0, 2.5, 1.0) {
        spec.constants = RateConstants {
            k1: Some(5.0),
            k2: Some(1.0),
            a1: Some(5.0),
            a2: Some(1.0),
            q: Some(2.0),
            b1: Some(7.0),
            b2: Some(2.0),
            // m = 1, so A5.2 coincides with A2.2 at q = 2.
            c1: Some(5.0),
            c2: Some(1.0),
            ..RateConstants::default()
        };
    }
    spec.mean_drift = Some(AffineMeanDrift { alpha: f + g, beta: f });
    spec
}

#[derive(Debug)]
struct Linear;

impl Coefficients for Linear {
    fn drift(&self, x: &[f64], mu: &MeasureView<'_>, _obs: Option<Observation<'_>>, out: &mut [f64]) {
        out[0] = -3.5 * x[0] + mu.mean1();
    }

    fn diffusion(&self, x: &[f64], mu: &MeasureView<'_>, out: &mut [f64]) {
        out[0] = x[0] + 0.5 * mu.mean1();
    }

    fn drift_jacobian(&self, _x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) -> bool {
        out[0] = -3.5;
        true
    }
}

/// Scalar mean-field linear model.
///
/// Declared constants come from Young's inequality on the cross term
/// `3 x mean <= 1.5 x^2 + 1.5 mean^2`, giving
/// `2xb + σ^2 <= -4.5 x^2 + 1.75 W2(μ)^2` (and the same pair for A2.1).
pub fn preset_linear() -> ModelSpec {
    let law = InitialLaw { mean: 2.0, std: 1.0 };
    let mut spec = ModelSpec::new("linear", 1, 1, Arc::new(Linear), law).expect("static dimensions");
    spec.constants = RateConstants {
        k1: Some(4.5),
        k2: Some(1.75),
        a1: Some(4.5),
        a2: Some(1.75),
        q: Some(2.0),
        b1: Some(15.75),
        b2: Some(4.5),
        c1: Some(4.5),
        c2: Some(1.75),
        ..RateConstants::default()
    };
    spec.mean_drift = Some(AffineMeanDrift { alpha: 3.5, beta: 1.0 });
    spec
}

#[derive(Debug)]
struct Feedback {
    k1: f64,
    k2: f64,
}

impl Coefficients for Feedback {
    fn drift(&self, x: &[f64], mu: &MeasureView<'_>, obs: Option<Observation<'_>>, out: &mut [f64]) {
        // Without a held observation the control acts on the current state.
        let (xo, mo) = match obs {
            Some(o) => (o.state[0], o.mean[0]),
            None => (x[0], mu.mean1()),
        };
        out[0] = 2.0 * x[0] + mu.mean1() - self.k1 * xo - self.k2 * mo;
    }

    fn diffusion(&self, x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) {
        out[0] = x[0];
    }
}

/// Unstable linear model with discrete-time feedback control.
pub fn preset_feedback(k1: f64, k2: f64, delta_obs: f64) -> Result<ModelSpec> {
    if !(delta_obs > 0.0) || !delta_obs.is_finite() {
        return Err(Error::invalid(format!("observation gap must be positive, got {delta_obs}")));
    }
    let law = InitialLaw { mean: 2.0, std: 1.0 };
    let mut spec = ModelSpec::new("feedback", 1, 1, Arc::new(Feedback { k1, k2 }), law)?;
    spec.observation_gap = Some(delta_obs);
    Ok(spec)
}

#[derive(Debug)]
struct Cubic {
    rho1: f64,
    rho2: f64,
}

impl Coefficients for Cubic {
    fn drift(&self, x: &[f64], mu: &MeasureView<'_>, _obs: Option<Observation<'_>>, out: &mut [f64]) {
        let v = x[0];
        out[0] = -2.0 * v * v * v - 4.0 * v + mu.mean1().sin();
    }

    fn diffusion(&self, x: &[f64], mu: &MeasureView<'_>, out: &mut [f64]) {
        let v = x[0];
        out[0] = self.rho1 * v + self.rho2 * v * v + mu.mean1().sin();
    }

    fn drift_jacobian(&self, x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) -> bool {
        out[0] = -6.0 * x[0] * x[0] - 4.0;
        true
    }
}

/// Superlinear model; initial law N(0, 4).
pub fn preset_cubic(rho1: f64, rho2: f64) -> ModelSpec {
    let law = InitialLaw { mean: 0.0, std: 2.0 };
    ModelSpec::new("cubic", 1, 1, Arc::new(Cubic { rho1, rho2 }), law).expect("static dimensions")
}

#[derive(Debug)]
struct ZeroModel;

impl Coefficients for ZeroModel {
    fn drift(&self, _x: &[f64], _mu: &MeasureView<'_>, _obs: Option<Observation<'_>>, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn drift_jacobian(&self, _x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
}

pub fn preset_zero() -> ModelSpec {
    let law = InitialLaw { mean: 2.0, std: 1.0 };
    let mut spec = ModelSpec::new("zero", 1, 1, Arc::new(ZeroModel), law).expect("static dimensions");
    spec.mean_drift = Some(AffineMeanDrift { alpha: 0.0, beta: 0.0 });
    spec
}

#[derive(Debug)]
struct Exponential {
    rate: f64,
}

impl Coefficients for Exponential {
    fn drift(&self, x: &[f64], _mu: &MeasureView<'_>, _obs: Option<Observation<'_>>, out: &mut [f64]) {
        out[0] = -self.rate * x[0];
    }

    fn diffusion(&self, _x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn drift_jacobian(&self, _x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]) -> bool {
        out[0] = -self.rate;
        true
    }
}

pub fn preset_exponential(rate: f64) -> ModelSpec {
    let law = InitialLaw { mean: 2.0, std: 1.0 };
    let mut spec =
        ModelSpec::new("exponential", 1, 1, Arc::new(Exponential { rate }), law).expect("static dimensions");
    spec.mean_drift = Some(AffineMeanDrift { alpha: rate, beta: 0.0 });
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::w2_to_delta0;
    use crate::rng::{uniform, NoiseKey};

    fn mu_with_mean(m: f64) -> MeasureView<'static> {
        MeasureView::from_moments(vec![m], m * m)
    }

    #[test]
    fn opinion_examples() {
        let spec = preset_opinion(1.0, 2.5, 1.0);
        assert_eq!(spec.drift(&[2.0], &mu_with_mean(2.0), None), vec![-5.0]);
        let c = &spec.constants;
        assert_eq!((c.a1, c.a2, c.b1, c.b2), (Some(5.0), Some(1.0), Some(7.0), Some(2.0)));
        assert_eq!((c.k1, c.k2), (Some(5.0), Some(1.0)));
        assert_eq!(spec.initial_law, InitialLaw { mean: 2.0, std: 1.0 });

        let zero = preset_opinion(0.0, 0.0, 0.0);
        for x in [-3.0, 0.0, 7.5] {
            assert_eq!(zero.drift(&[x], &mu_with_mean(1.3), None), vec![0.0]);
            assert_eq!(zero.diffusion(&[x], &mu_with_mean(1.3)), vec![0.0]);
        }
        assert_eq!(zero.constants, RateConstants::default());
    }

    #[test]
    fn linear_examples() {
        let spec = preset_linear();
        assert_eq!(spec.drift(&[1.0], &mu_with_mean(2.0), None), vec![-1.5]);
        assert_eq!(spec.diffusion(&[1.0], &mu_with_mean(2.0)), vec![2.0]);
        assert_eq!(spec.drift(&[0.0], &MeasureView::delta_zero(1), None), vec![0.0]);
    }

    #[test]
    fn feedback_examples() {
        let mu = mu_with_mean(1.0);
        let free = preset_feedback(0.0, 0.0, 0.05).unwrap();
        let obs = Observation { state: &[4.0], mean: &[-2.0] };
        assert_eq!(free.drift(&[1.0], &mu, Some(obs)), vec![3.0]);

        let ctl = preset_feedback(12.0, 10.0, 0.05).unwrap();
        let obs = Observation { state: &[1.0], mean: &[1.0] };
        assert_eq!(ctl.drift(&[1.0], &mu, Some(obs)), vec![-19.0]);

        let ctl = preset_feedback(7.0, 8.0, 0.05).unwrap();
        let obs = Observation { state: &[0.0], mean: &[0.0] };
        assert_eq!(ctl.drift(&[0.0], &MeasureView::delta_zero(1), Some(obs)), vec![0.0]);

        assert!(preset_feedback(1.0, 1.0, 0.0).is_err());
        assert!(preset_feedback(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn cubic_examples() {
        let spec = preset_cubic(0.0, 1.0);
        assert_eq!(spec.drift(&[1.0], &mu_with_mean(0.0), None), vec![-6.0]);
        assert_eq!(spec.diffusion(&[2.0], &mu_with_mean(0.0)), vec![4.0]);
        assert_eq!(spec.drift_jacobian(&[1.0], &mu_with_mean(0.3)), Some(vec![-10.0]));
        assert_eq!(spec.initial_law, InitialLaw { mean: 0.0, std: 2.0 });
        assert_eq!(spec.constants.l1, None);
    }

    #[test]
    fn presets_by_name() {
        let p = Preset::from_name("opinion", &serde_json::json!({})).unwrap();
        assert_eq!(p, Preset::Opinion { f: 1.0, g: 2.5, sigma: 1.0 });
        let p = Preset::from_name("feedback", &serde_json::json!({"k1": 7, "k2": 8})).unwrap();
        assert_eq!(p, Preset::Feedback { k1: 7.0, k2: 8.0, delta_obs: 0.05 });
        assert!(Preset::from_name("cubic", &serde_json::Value::Null).is_ok());
        assert!(Preset::from_name("linear", &serde_json::Value::Null).is_ok());
        assert!(matches!(Preset::from_name("nope", &serde_json::Value::Null), Err(Error::Config(_))));
        assert!(Preset::from_name("cubic", &serde_json::json!({"rho3": 1})).is_err());
        for name in Preset::NAMES {
            let spec = Preset::from_name(name, &serde_json::Value::Null).unwrap().build().unwrap();
            assert_eq!(spec.name, name);
        }
    }

    #[test]
    fn constants_validation() {
        let bad_q = RateConstants { q: Some(1.5), ..Default::default() };
        assert!(bad_q.validate().is_err());
        let bad_p0 = RateConstants { p0: Some(2.0), ..Default::default() };
        assert!(bad_p0.validate().is_err());
        let neg = RateConstants { a1: Some(-1.0), ..Default::default() };
        assert!(neg.validate().is_err());
        assert!(preset_opinion(1.0, 2.5, 1.0).constants.validate().is_ok());
        assert!(preset_linear().constants.validate().is_ok());
    }

    /// Scalar cloud of 1..=16 atoms; every fourth sample is a Dirac mass.
    fn sampled_cloud(seed: u64, s: u32) -> Vec<f64> {
        let u = |slot: u32| uniform(NoiseKey::new(seed, 0, s, slot, 0));
        let n = 1 + (u(0) * 16.0) as usize;
        if s % 4 == 0 {
            vec![20.0 * u(1) - 10.0; n]
        } else {
            (0..n).map(|k| 20.0 * u(2 + k as u32) - 10.0).collect()
        }
    }

    #[test]
    fn coefficients_are_bit_deterministic() {
        let presets = [
            preset_opinion(1.0, 2.5, 1.0),
            preset_linear(),
            preset_feedback(7.0, 8.0, 0.05).unwrap(),
            preset_cubic(1.0, 0.5),
        ];
        for s in 0..500u32 {
            let atoms = sampled_cloud(3, s);
            let mu = MeasureView::from_atoms(&atoms, 1);
            let x = [20.0 * uniform(NoiseKey::new(4, 0, s, 0, 0)) - 10.0];
            let obs = Observation { state: &[0.5], mean: &[-0.25] };
            for p in &presets {
                let a = p.drift(&x, &mu, Some(obs));
                let b = p.drift(&x, &mu, Some(obs));
                assert_eq!(a[0].to_bits(), b[0].to_bits());
                let a = p.diffusion(&x, &mu);
                let b = p.diffusion(&x, &mu);
                assert_eq!(a[0].to_bits(), b[0].to_bits());
            }
        }
    }

    #[test]
    fn opinion_dissipativity_on_samples() {
        let spec = preset_opinion(1.0, 2.5, 1.0);
        for s in 0..10_000u32 {
            let atoms = sampled_cloud(11, s);
            let cloud = ParticleCloud::from_scalars(&atoms).unwrap();
            let mu = cloud.view().unwrap();
            let x = 20.0 * uniform(NoiseKey::new(12, 0, s, 0, 0)) - 10.0;
            let b = spec.drift(&[x], &mu, None)[0];
            let sig = spec.diffusion(&[x], &mu)[0];
            let w2 = w2_to_delta0(&cloud).unwrap();
            let lhs = 2.0 * x * b + sig * sig;
            let rhs = -5.0 * x * x + w2 * w2;
            assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "x={x} lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn cubic_one_sided_contractivity() {
        let spec = preset_cubic(0.3, 1.0);
        let mu = mu_with_mean(0.7);
        for s in 0..10_000u32 {
            let x = 20.0 * uniform(NoiseKey::new(21, 0, s, 0, 0)) - 10.0;
            let y = 20.0 * uniform(NoiseKey::new(21, 0, s, 1, 0)) - 10.0;
            let bx = spec.drift(&[x], &mu, None)[0];
            let by = spec.drift(&[y], &mu, None)[0];
            let lhs = (x - y) * (bx - by);
            assert!(lhs <= -4.0 * (x - y).powi(2) + 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
