//! Explicit and backward Euler-Maruyama stepping of the particle system.
//!
//! Both schemes freeze the empirical measure of the previous step, so the
//! backward scheme is implicit only in each particle's own drift and the
//! nonlinear solves are independent across particles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{sum_by, MeasureView, ParticleCloud};
use crate::model::{ModelSpec, Observation, ObservationSnapshot};
use crate::rng::{gaussian, initial_sample, NoiseKey};

/// Particles per work unit when a step is split across threads.
const PARTICLE_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[serde(alias = "explicit_em")]
    Em,
    #[serde(alias = "backward_em")]
    Bem,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Em => "em",
            SchemeKind::Bem => "bem",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub steps: u64,
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    pub implicit_tol: f64,
    pub implicit_max_iter: usize,
    /// Observation gap; falls back to the model's own gap.
    pub obs_gap: Option<f64>,
    pub divergence_threshold: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::Em,
            dt: 0.01,
            steps: 100,
            n: 100,
            paths: 1,
            seed: 0,
            implicit_tol: 1e-12,
            implicit_max_iter: 100,
            obs_gap: None,
            divergence_threshold: 1e12,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return Err(Error::invalid(format!("dt must lie in (0, 1), got {}", self.dt)));
        }
        if self.steps == 0 || self.steps >= u64::from(u32::MAX - 1) {
            return Err(Error::invalid(format!("steps must be in [1, 2^32 - 2), got {}", self.steps)));
        }
        if self.n == 0 || self.n > u32::MAX as usize {
            return Err(Error::invalid(format!("particle count must be in [1, 2^32), got {}", self.n)));
        }
        if self.paths == 0 || self.paths > u32::MAX as usize {
            return Err(Error::invalid(format!("path count must be in [1, 2^32), got {}", self.paths)));
        }
        if !(self.implicit_tol > 0.0) || self.implicit_max_iter == 0 {
            return Err(Error::invalid("implicit solver needs tol > 0 and max_iter >= 1"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::invalid("divergence threshold must be positive"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Steps between observations, if the model observes at all.
    pub fn obs_every(&self, model: &ModelSpec) -> Result<Option<u64>> {
        let Some(gap) = self.obs_gap.or(model.observation_gap) else {
            return Ok(None);
        };
        let ratio = gap / self.dt;
        let r = ratio.round();
        if !(r >= 1.0) || (ratio - r).abs() > 1e-9 * r {
            return Err(Error::invalid(format!(
                "observation gap {gap} must be a positive integer multiple of dt = {}",
                self.dt
            )));
        }
        Ok(Some(r as u64))
    }
}

/// Worst implicit-solve figures over the particles of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub implicit_iters: usize,
    pub implicit_residual: f64,
}

impl StepStats {
    fn join(self, other: StepStats) -> StepStats {
        StepStats {
            implicit_iters: self.implicit_iters.max(other.implicit_iters),
            implicit_residual: self.implicit_residual.max(other.implicit_residual),
        }
    }
}

/// Summary of one time step of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    pub mean_square: f64,
    pub mean: Vec<f64>,
    pub max_norm: f64,
    pub implicit_iters: usize,
    pub implicit_residual: f64,
    pub diverged: bool,
}

impl StepRecord {
    pub fn of(cloud: &ParticleCloud, stats: StepStats, threshold: f64) -> Self {
        let (n, d) = (cloud.n(), cloud.d());
        let atoms = cloud.atoms();
        let inv = 1.0 / n as f64;
        let mean_square = sum_by(atoms.len(), |i| atoms[i] * atoms[i]) * inv;
        let mean: Vec<f64> = (0..d).map(|c| sum_by(n, |i| atoms[i * d + c]) * inv).collect();
        let max_norm = (0..n)
            .map(|i| {
                let s: f64 = cloud.atom(i).iter().map(|v| v * v).sum();
                if s.is_nan() { f64::INFINITY } else { s.sqrt() }
            })
            .fold(0.0, f64::max);
        let diverged = cloud.diverged
            || !mean_square.is_finite()
            || max_norm > threshold
            || mean_square > threshold;
        Self {
            step: cloud.step,
            time: cloud.time,
            mean_square,
            mean,
            max_norm,
            implicit_iters: stats.implicit_iters,
            implicit_residual: stats.implicit_residual,
            diverged,
        }
    }
}

/// Where the Brownian increments of a step come from.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    /// Drawn from the counter-based generator.
    Keyed { seed: u64, path: u32, step: u32 },
    /// Supplied by the caller, `N * m` values already scaled by `sqrt(dt)`.
    Given(&'a [f64]),
}

/// Scratch space for the implicit solver.
#[derive(Debug, Clone)]
pub struct ImplicitWorkspace {
    d: usize,
    b: Vec<f64>,
    f: Vec<f64>,
    trial: Vec<f64>,
    step: Vec<f64>,
    jac: Vec<f64>,
    lu: Vec<f64>,
    bp: Vec<f64>,
    bm: Vec<f64>,
}

impl ImplicitWorkspace {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            b: vec![0.0; d],
            f: vec![0.0; d],
            trial: vec![0.0; d],
            step: vec![0.0; d],
            jac: vec![0.0; d * d],
            lu: vec![0.0; d * d],
            bp: vec![0.0; d],
            bm: vec![0.0; d],
        }
    }
}

/// Result of one implicit solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSolution {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `F(z) = z - dt b(z) - rhs` into `ws.f`; returns `(|F|, rounding floor)`.
fn residual(
    drift: &mut dyn FnMut(&[f64], &mut [f64]),
    z: &[f64],
    dt: f64,
    rhs: &[f64],
    b: &mut [f64],
    f: &mut [f64],
) -> (f64, f64) {
    drift(z, b);
    for r in 0..z.len() {
        f[r] = z[r] - dt * b[r] - rhs[r];
    }
    let scale = norm(z) + dt * norm(b) + norm(rhs);
    (norm(f), 4.0 * f64::EPSILON * scale)
}

/// Solves `A x = y` in place for a small dense system; `false` if singular.
fn solve_dense(a: &mut [f64], y: &mut [f64]) -> bool {
    let d = y.len();
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))
            .expect("nonempty range");
        if !(a[piv * d + col].abs() > 0.0) || !a[piv * d + col].is_finite() {
            return false;
        }
        if piv != col {
            for k in 0..d {
                a.swap(piv * d + k, col * d + k);
            }
            y.swap(piv, col);
        }
        let p = a[col * d + col];
        for row in col + 1..d {
            let factor = a[row * d + col] / p;
            if factor != 0.0 {
                for k in col..d {
                    a[row * d + k] -= factor * a[col * d + k];
                }
                y[row] -= factor * y[col];
            }
        }
    }
    for row in (0..d).rev() {
        let mut acc = y[row];
        for k in row + 1..d {
            acc -= a[row * d + k] * y[k];
        }
        y[row] = acc / a[row * d + row];
    }
    y.iter().all(|v| v.is_finite())
}

fn finite_difference_jacobian(
    drift: &mut dyn FnMut(&[f64], &mut [f64]),
    z: &[f64],
    ws: &mut ImplicitWorkspace,
) {
    let d = ws.d;
    ws.trial.copy_from_slice(z);
    for j in 0..d {
        let h = 1e-7f64.max(1e-7 * z[j].abs());
        ws.trial[j] = z[j] + h;
        drift(&ws.trial, &mut ws.bp);
        ws.trial[j] = z[j] - h;
        drift(&ws.trial, &mut ws.bm);
        ws.trial[j] = z[j];
        for r in 0..d {
            ws.jac[r * d + j] = (ws.bp[r] - ws.bm[r]) / (2.0 * h);
        }
    }
}

/// Solves `z - dt b(z) = rhs` starting from `z = rhs`.
///
/// Newton's method with the analytic Jacobian when `jacobian` returns `true`,
/// central differences otherwise. After two rejected Newton steps in a row
/// the solver switches to the damped fixed point
/// `z <- (1 - w) z + w (rhs + dt b(z))` with `w = 1 / (1 + dt L)`, where `L`
/// is the Frobenius norm of the local drift Jacobian.
///
/// Converges when `|F(z)| <= tol`, or when `|F(z)|` is at the rounding level
/// of its own terms (below which it carries no information). The residual
/// actually reached is returned.
pub fn solve_implicit_into(
    drift: &mut dyn FnMut(&[f64], &mut [f64]),
    jacobian: &mut dyn FnMut(&[f64], &mut [f64]) -> bool,
    dt: f64,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
    ws: &mut ImplicitWorkspace,
    z: &mut [f64],
) -> Result<(usize, f64)> {
    let d = rhs.len();
    debug_assert_eq!(ws.d, d);
    z.copy_from_slice(rhs);
    let (mut fnorm, mut floor) = residual(drift, z, dt, rhs, &mut ws.b, &mut ws.f);
    if fnorm <= tol.max(floor) {
        return Ok((0, fnorm));
    }
    let mut damping: Option<f64> = None;
    for it in 1..=max_iter {
        match damping {
            None => {
                if !jacobian(z, &mut ws.jac) {
                    finite_difference_jacobian(drift, z, ws);
                }
                for r in 0..d {
                    for c in 0..d {
                        let eye = if r == c { 1.0 } else { 0.0 };
                        ws.lu[r * d + c] = eye - dt * ws.jac[r * d + c];
                    }
                    ws.step[r] = -ws.f[r];
                }
                let mut accepted = false;
                if solve_dense(&mut ws.lu, &mut ws.step) {
                    for scale in [1.0, 0.5] {
                        for r in 0..d {
                            ws.trial[r] = z[r] + scale * ws.step[r];
                        }
                        let (tn, tf) = residual(drift, &ws.trial, dt, rhs, &mut ws.bp, &mut ws.bm);
                        if tn < fnorm || tn <= tol.max(tf) {
                            z.copy_from_slice(&ws.trial);
                            accepted = true;
                            break;
                        }
                    }
                }
                if !accepted {
                    let l = norm(&ws.jac);
                    damping = Some(1.0 / (1.0 + dt * l));
                }
            }
            Some(w) => {
                for r in 0..d {
                    z[r] = (1.0 - w) * z[r] + w * (rhs[r] + dt * ws.b[r]);
                }
            }
        }
        (fnorm, floor) = residual(drift, z, dt, rhs, &mut ws.b, &mut ws.f);
        if fnorm <= tol.max(floor) {
            return Ok((it, fnorm));
        }
    }
    Err(Error::ImplicitSolveFailure {
        particle: 0,
        residual: fnorm,
        iterations: max_iter,
    })
}

/// Allocating wrapper around [`solve_implicit_into`].
pub fn solve_implicit(
    mut drift: impl FnMut(&[f64], &mut [f64]),
    jacobian: Option<&mut dyn FnMut(&[f64], &mut [f64]) -> bool>,
    dt: f64,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<ImplicitSolution> {
    let mut ws = ImplicitWorkspace::new(rhs.len());
    let mut z = vec![0.0; rhs.len()];
    let mut none = |_: &[f64], _: &mut [f64]| false;
    let jac: &mut dyn FnMut(&[f64], &mut [f64]) -> bool = match jacobian {
        Some(j) => j,
        None => &mut none,
    };
    let (iterations, residual) = solve_implicit_into(&mut drift, jac, dt, rhs, tol, max_iter, &mut ws, &mut z)?;
    Ok(ImplicitSolution { z, iterations, residual })
}

/// Advances every particle one step against the frozen measure `mu`.
///
/// `x` holds the current atoms and `out` receives the next ones.
#[allow(clippy::too_many_arguments)]
pub fn advance(
    model: &ModelSpec,
    kind: SchemeKind,
    dt: f64,
    mu: &MeasureView<'_>,
    x: &[f64],
    out: &mut [f64],
    noise: Noise<'_>,
    obs: Option<&ObservationSnapshot>,
    tol: f64,
    max_iter: usize,
) -> Result<StepStats> {
    let (d, m) = (model.d, model.m);
    let n = x.len() / d;
    if out.len() != x.len() {
        return Err(Error::invalid("output buffer does not match the cloud"));
    }
    if let Noise::Given(w) = noise {
        if w.len() != n * m {
            return Err(Error::invalid(format!(
                "noise must hold N*m = {} values, got {}",
                n * m,
                w.len()
            )));
        }
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let coeffs = model.coefficients();
    let sqrt_dt = dt.sqrt();

    let run_chunk = |first: usize, out_chunk: &mut [f64]| -> Result<StepStats> {
        let mut stats = StepStats::default();
        let mut b = vec![0.0; d];
        let mut sig = vec![0.0; d * m];
        let mut dw = vec![0.0; m];
        let mut rhs = vec![0.0; d];
        let mut ws = ImplicitWorkspace::new(d);
        for (k, next) in out_chunk.chunks_exact_mut(d).enumerate() {
            let i = first + k;
            let xi = &x[i * d..(i + 1) * d];
            let oi: Option<Observation<'_>> = obs.map(|s| s.for_particle(i, d));
            match noise {
                Noise::Keyed { seed, path, step } => {
                    for (c, w) in dw.iter_mut().enumerate() {
                        *w = gaussian(NoiseKey::new(seed, path, i as u32, step, c as u32)) * sqrt_dt;
                    }
                }
                Noise::Given(w) => dw.copy_from_slice(&w[i * m..(i + 1) * m]),
            }
            coeffs.diffusion(xi, mu, &mut sig);
            match kind {
                SchemeKind::Em => {
                    coeffs.drift(xi, mu, oi, &mut b);
                    for r in 0..d {
                        let noise_term: f64 = (0..m).map(|c| sig[r * m + c] * dw[c]).sum();
                        next[r] = xi[r] + b[r] * dt + noise_term;
                    }
                }
                SchemeKind::Bem => {
                    for r in 0..d {
                        let noise_term: f64 = (0..m).map(|c| sig[r * m + c] * dw[c]).sum();
                        rhs[r] = xi[r] + noise_term;
                    }
                    if !rhs.iter().all(|v| v.is_finite()) {
                        next.copy_from_slice(&rhs);
                        continue;
                    }
                    let mut drift = |z: &[f64], o: &mut [f64]| coeffs.drift(z, mu, oi, o);
                    let mut jac = |z: &[f64], o: &mut [f64]| coeffs.drift_jacobian(z, mu, o);
                    let (iters, res) =
                        solve_implicit_into(&mut drift, &mut jac, dt, &rhs, tol, max_iter, &mut ws, next)
                            .map_err(|e| match e {
                                Error::ImplicitSolveFailure { residual, iterations, .. } => {
                                    Error::ImplicitSolveFailure { particle: i, residual, iterations }
                                }
                                other => other,
                            })?;
                    stats = stats.join(StepStats { implicit_iters: iters, implicit_residual: res });
                }
            }
        }
        Ok(stats)
    };

    if n >= 2 * PARTICLE_CHUNK {
        out.par_chunks_mut(PARTICLE_CHUNK * d)
            .enumerate()
            .map(|(c, chunk)| run_chunk(c * PARTICLE_CHUNK, chunk))
            .collect::<Vec<_>>()
            .into_iter()
            .try_fold(StepStats::default(), |acc, s| Ok(acc.join(s?)))
    } else {
        run_chunk(0, out)
    }
}

fn flag_divergence(cloud: &mut ParticleCloud, threshold: f64) {
    let bad = cloud
        .atoms()
        .iter()
        .any(|v| !v.is_finite() || v.abs() > threshold);
    cloud.diverged = bad;
}

/// One step of either scheme with caller-supplied increments (`N * m` values).
pub fn step(
    model: &ModelSpec,
    cloud: &ParticleCloud,
    cfg: &SchemeConfig,
    noise: &[f64],
    obs: Option<&ObservationSnapshot>,
) -> Result<(ParticleCloud, StepStats)> {
    if cloud.d() != model.d {
        return Err(Error::invalid(format!(
            "cloud dimension {} does not match model dimension {}",
            cloud.d(),
            model.d
        )));
    }
    let mu = cloud.view()?;
    let mut next = cloud.clone();
    let stats = advance(
        model,
        cfg.scheme,
        cfg.dt,
        &mu,
        cloud.atoms(),
        next.atoms_mut(),
        Noise::Given(noise),
        obs,
        cfg.implicit_tol,
        cfg.implicit_max_iter,
    )?;
    next.step = cloud.step + 1;
    next.time = next.step as f64 * cfg.dt;
    flag_divergence(&mut next, cfg.divergence_threshold);
    Ok((next, stats))
}

/// `Y_{k+1} = Y_k + b(Y_k, μ_k) dt + σ(Y_k, μ_k) ΔW_k` for every particle.
pub fn em_step(
    model: &ModelSpec,
    cloud: &ParticleCloud,
    dt: f64,
    noise: &[f64],
    obs: Option<&ObservationSnapshot>,
) -> Result<ParticleCloud> {
    let cfg = SchemeConfig { scheme: SchemeKind::Em, dt, ..SchemeConfig::default() };
    step(model, cloud, &cfg, noise, obs).map(|(c, _)| c)
}

/// `Z_{k+1} = Z_k + b(Z_{k+1}, μ_k) dt + σ(Z_k, μ_k) ΔW_k`, solved per particle.
pub fn bem_step(
    model: &ModelSpec,
    cloud: &ParticleCloud,
    cfg: &SchemeConfig,
    noise: &[f64],
    obs: Option<&ObservationSnapshot>,
) -> Result<(ParticleCloud, StepStats)> {
    let cfg = SchemeConfig { scheme: SchemeKind::Bem, ..cfg.clone() };
    step(model, cloud, &cfg, noise, obs)
}

/// Initial cloud of `n` particles for one path.
pub fn initial_cloud(model: &ModelSpec, seed: u64, path: u32, n: usize) -> Result<ParticleCloud> {
    let d = model.d;
    let mut atoms = vec![0.0; n * d];
    for (i, x) in atoms.chunks_exact_mut(d).enumerate() {
        initial_sample(seed, path, i as u32, model.initial_law, x);
    }
    ParticleCloud::new(atoms, d)
}

/// Runs one path, handing every step (including step 0) to `observer`.
///
/// Stops early once the cloud diverges; the last record then has
/// `diverged = true`. Returns the final cloud.
pub fn simulate(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    path: u32,
    observer: &mut dyn FnMut(&StepRecord, &ParticleCloud),
) -> Result<ParticleCloud> {
    cfg.validate()?;
    let obs_every = cfg.obs_every(model)?;
    let mut cur = initial_cloud(model, cfg.seed, path, cfg.n)?;
    let rec = StepRecord::of(&cur, StepStats::default(), cfg.divergence_threshold);
    cur.diverged = rec.diverged;
    observer(&rec, &cur);
    if rec.diverged {
        return Ok(cur);
    }
    let mut next = cur.clone();
    let mut snapshot: Option<ObservationSnapshot> = None;
    for k in 0..cfg.steps {
        let mu = cur.view()?;
        if let Some(every) = obs_every {
            if k % every == 0 {
                snapshot = Some(ObservationSnapshot::take(&cur, mu.mean()));
            }
        }
        let stats = advance(
            model,
            cfg.scheme,
            cfg.dt,
            &mu,
            cur.atoms(),
            next.atoms_mut(),
            Noise::Keyed { seed: cfg.seed, path, step: k as u32 },
            snapshot.as_ref(),
            cfg.implicit_tol,
            cfg.implicit_max_iter,
        )?;
        drop(mu);
        next.step = k + 1;
        next.time = (k + 1) as f64 * cfg.dt;
        flag_divergence(&mut next, cfg.divergence_threshold);
        std::mem::swap(&mut cur, &mut next);
        let rec = StepRecord::of(&cur, stats, cfg.divergence_threshold);
        cur.diverged = rec.diverged;
        observer(&rec, &cur);
        if rec.diverged {
            break;
        }
    }
    Ok(cur)
}

/// All records of one path.
pub fn simulate_records(model: &ModelSpec, cfg: &SchemeConfig, path: u32) -> Result<(Vec<StepRecord>, ParticleCloud)> {
    let mut records = Vec::with_capacity(cfg.steps as usize + 1);
    let cloud = simulate(model, cfg, path, &mut |r, _| records.push(r.clone()))?;
    Ok((records, cloud))
}

/// Per-step series of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    pub path: u32,
    pub mean_square: Vec<f64>,
    /// `len * d` values, row-major by step.
    pub mean: Vec<f64>,
    pub max_norm: Vec<f64>,
    pub implicit_iters: Vec<usize>,
    pub implicit_residual: Vec<f64>,
    pub diverged_at: Option<u64>,
}

impl PathSeries {
    pub fn len(&self) -> usize {
        self.mean_square.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_square.is_empty()
    }
}

/// Independent paths of one configuration.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub d: usize,
    pub dt: f64,
    pub paths: Vec<PathSeries>,
}

impl Ensemble {
    /// Steps available in every path.
    pub fn common_len(&self) -> usize {
        self.paths.iter().map(PathSeries::len).min().unwrap_or(0)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.common_len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn any_diverged(&self) -> bool {
        self.paths.iter().any(|p| p.diverged_at.is_some())
    }

    /// Path-averaged records; max-type fields take the worst path.
    pub fn averaged(&self) -> Vec<StepRecord> {
        let len = self.common_len();
        let mp = self.paths.len();
        let inv = 1.0 / mp as f64;
        (0..len)
            .map(|k| {
                let mean_square = sum_by(mp, |p| self.paths[p].mean_square[k]) * inv;
                let mean = (0..self.d)
                    .map(|c| sum_by(mp, |p| self.paths[p].mean[k * self.d + c]) * inv)
                    .collect();
                StepRecord {
                    step: k as u64,
                    time: k as f64 * self.dt,
                    mean_square,
                    mean,
                    max_norm: self.paths.iter().map(|p| p.max_norm[k]).fold(0.0, f64::max),
                    implicit_iters: self.paths.iter().map(|p| p.implicit_iters[k]).max().unwrap_or(0),
                    implicit_residual: self.paths.iter().map(|p| p.implicit_residual[k]).fold(0.0, f64::max),
                    diverged: self.paths.iter().any(|p| p.diverged_at == Some(k as u64)),
                }
            })
            .collect()
    }

    pub fn max_implicit_residual(&self) -> f64 {
        self.paths
            .iter()
            .flat_map(|p| p.implicit_residual.iter().copied())
            .fold(0.0, f64::max)
    }
}

fn run_path(model: &ModelSpec, cfg: &SchemeConfig, path: u32) -> Result<PathSeries> {
    let cap = cfg.steps as usize + 1;
    let mut s = PathSeries {
        path,
        mean_square: Vec::with_capacity(cap),
        mean: Vec::with_capacity(cap * model.d),
        max_norm: Vec::with_capacity(cap),
        implicit_iters: Vec::with_capacity(cap),
        implicit_residual: Vec::with_capacity(cap),
        diverged_at: None,
    };
    simulate(model, cfg, path, &mut |r, _| {
        s.mean_square.push(r.mean_square);
        s.mean.extend_from_slice(&r.mean);
        s.max_norm.push(r.max_norm);
        s.implicit_iters.push(r.implicit_iters);
        s.implicit_residual.push(r.implicit_residual);
        if r.diverged {
            s.diverged_at = Some(r.step);
        }
    })?;
    Ok(s)
}

/// Runs `cfg.paths` independent paths in parallel.
pub fn simulate_paths(model: &ModelSpec, cfg: &SchemeConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let paths = (0..cfg.paths as u32)
        .into_par_iter()
        .map(|p| run_path(model, cfg, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { d: model.d, dt: cfg.dt, paths })
}

/// Stand-in for the non-interacting limit system in coupled runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    /// Each particle is driven by the limit law's mean, propagated by the
    /// same scheme. Needs a drift that is affine in the mean.
    MeanOde,
    /// A large interacting system whose first `N` particles serve as the reference.
    Proxy {
        #[serde(default)]
        n_ref: Option<usize>,
    },
}

/// Propagation-of-chaos error `e_N(t_k) = E[(1/N) Σ_i |X^{i,N}_k - X^i_k|^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledResult {
    pub n_values: Vec<usize>,
    pub dt: f64,
    pub paths: usize,
    pub reference: Reference,
    pub n_ref: Option<usize>,
    /// `[n index][step]`, averaged over paths.
    pub error: Vec<Vec<f64>>,
    /// Standard error of the path average, same layout.
    pub std_error: Vec<Vec<f64>>,
}

impl CoupledResult {
    pub fn error_at(&self, n_index: usize, step: usize) -> (f64, f64) {
        (self.error[n_index][step], self.std_error[n_index][step])
    }
}

struct System {
    cloud: ParticleCloud,
    next: ParticleCloud,
    snapshot: Option<ObservationSnapshot>,
}

impl System {
    fn new(cloud: ParticleCloud) -> Self {
        Self { next: cloud.clone(), cloud, snapshot: None }
    }

    fn step(
        &mut self,
        model: &ModelSpec,
        cfg: &SchemeConfig,
        path: u32,
        k: u64,
        obs_every: Option<u64>,
        surrogate: Option<&MeasureView<'_>>,
    ) -> Result<()> {
        let own = self.cloud.view()?;
        let mu = surrogate.unwrap_or(&own);
        if let Some(every) = obs_every {
            if k % every == 0 {
                self.snapshot = Some(ObservationSnapshot::take(&self.cloud, own.mean()));
            }
        }
        advance(
            model,
            cfg.scheme,
            cfg.dt,
            mu,
            self.cloud.atoms(),
            self.next.atoms_mut(),
            Noise::Keyed { seed: cfg.seed, path, step: k as u32 },
            self.snapshot.as_ref(),
            cfg.implicit_tol,
            cfg.implicit_max_iter,
        )?;
        drop(own);
        self.next.step = k + 1;
        self.next.time = (k + 1) as f64 * cfg.dt;
        flag_divergence(&mut self.next, cfg.divergence_threshold);
        std::mem::swap(&mut self.cloud, &mut self.next);
        if self.cloud.diverged {
            return Err(Error::DivergedCloud);
        }
        Ok(())
    }
}

fn pair_error(a: &[f64], b: &[f64], n: usize, d: usize) -> f64 {
    sum_by(n * d, |i| (a[i] - b[i]) * (a[i] - b[i])) / n as f64
}

fn coupled_path(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    n_values: &[usize],
    reference: &Reference,
    n_ref: Option<usize>,
    path: u32,
) -> Result<Vec<Vec<f64>>> {
    let d = model.d;
    let steps = cfg.steps as usize;
    let obs_every = cfg.obs_every(model)?;
    let mut errors = vec![Vec::with_capacity(steps + 1); n_values.len()];
    match reference {
        Reference::MeanOde => {
            let md = model.mean_drift.ok_or_else(|| {
                Error::invalid(format!("model `{}` has no closed mean dynamics", model.name))
            })?;
            let factor = match cfg.scheme {
                SchemeKind::Em => 1.0 - md.rate() * cfg.dt,
                SchemeKind::Bem => (1.0 + md.beta * cfg.dt) / (1.0 + md.alpha * cfg.dt),
            };
            for (ni, &n) in n_values.iter().enumerate() {
                let init = initial_cloud(model, cfg.seed, path, n)?;
                let mut inter = System::new(init.clone());
                let mut limit = System::new(init);
                let mut m = vec![model.initial_law.mean; d];
                errors[ni].push(0.0);
                for k in 0..cfg.steps {
                    let law = MeasureView::from_moments(m.clone(), f64::NAN);
                    inter.step(model, cfg, path, k, obs_every, None)?;
                    limit.step(model, cfg, path, k, obs_every, Some(&law))?;
                    m.iter_mut().for_each(|v| *v *= factor);
                    errors[ni].push(pair_error(inter.cloud.atoms(), limit.cloud.atoms(), n, d));
                }
            }
        }
        Reference::Proxy { .. } => {
            let n_ref = n_ref.expect("resolved by caller");
            let mut proxy = System::new(initial_cloud(model, cfg.seed, path, n_ref)?);
            let mut systems = n_values
                .iter()
                .map(|&n| Ok(System::new(initial_cloud(model, cfg.seed, path, n)?)))
                .collect::<Result<Vec<_>>>()?;
            for (ni, &n) in n_values.iter().enumerate() {
                errors[ni].push(pair_error(systems[ni].cloud.atoms(), proxy.cloud.atoms(), n, d));
            }
            for k in 0..cfg.steps {
                proxy.step(model, cfg, path, k, obs_every, None)?;
                for (ni, &n) in n_values.iter().enumerate() {
                    systems[ni].step(model, cfg, path, k, obs_every, None)?;
                    errors[ni].push(pair_error(systems[ni].cloud.atoms(), proxy.cloud.atoms(), n, d));
                }
            }
        }
    }
    Ok(errors)
}

/// Runs each `N` in `n_values` coupled to a reference system through shared
/// initial draws and Brownian increments, for `cfg.paths` paths.
pub fn simulate_coupled(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    n_values: &[usize],
    reference: &Reference,
) -> Result<CoupledResult> {
    cfg.validate()?;
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(Error::invalid("coupled runs need at least one positive N"));
    }
    let max_n = *n_values.iter().max().expect("nonempty");
    let n_ref = match reference {
        Reference::MeanOde => {
            if model.uses_observations() {
                return Err(Error::invalid("the mean-ODE reference does not support observed feedback"));
            }
            None
        }
        Reference::Proxy { n_ref } => {
            let r = n_ref.unwrap_or(8 * max_n);
            if r < max_n {
                return Err(Error::invalid(format!("proxy size {r} is below the largest N = {max_n}")));
            }
            Some(r)
        }
    };
    let per_path = (0..cfg.paths as u32)
        .into_par_iter()
        .map(|p| coupled_path(model, cfg, n_values, reference, n_ref, p))
        .collect::<Result<Vec<_>>>()?;
    let mp = cfg.paths;
    let len = cfg.steps as usize + 1;
    let mut error = Vec::with_capacity(n_values.len());
    let mut std_error = Vec::with_capacity(n_values.len());
    for ni in 0..n_values.len() {
        let mean: Vec<f64> = (0..len)
            .map(|k| sum_by(mp, |p| per_path[p][ni][k]) / mp as f64)
            .collect();
        let se: Vec<f64> = (0..len)
            .map(|k| {
                if mp < 2 {
                    return f64::NAN;
                }
                let var = sum_by(mp, |p| (per_path[p][ni][k] - mean[k]).powi(2)) / (mp - 1) as f64;
                (var / mp as f64).sqrt()
            })
            .collect();
        error.push(mean);
        std_error.push(se);
    }
    Ok(CoupledResult {
        n_values: n_values.to_vec(),
        dt: cfg.dt,
        paths: mp,
        reference: reference.clone(),
        n_ref,
        error,
        std_error,
    })
}
