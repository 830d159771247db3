//! Generative models for confounded treatment/outcome point processes.
//!
//! A latent zero-mean Gaussian process `U` confounds two conditional
//! intensities:
//!
//! ```text
//! lambda_N(t) = mu_n + phi_b0( alpha(t; a_n, b_n) * z + U(t) )
//! lambda_Y(t) = phi_b2( phi_b1( mu_y + sum_{s in N} alpha(t - s; a_y, b_y) )
//!                     + phi_b1( U(t - d_u) ) )
//! ```
//!
//! where `alpha(t; a, b) = b a^2 t e^{-a t}` and `phi_b(x) = x^b`. The
//! instrument level `z` shifts the treatment intensity only. Both intensities
//! are clamped at zero before sampling (the clamp rate is reported in
//! [`ClampStats`]), and event times are drawn by thinning against a
//! piecewise-constant dominating rate.

use std::cell::Cell;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{interp_slice, Curve, TimeGrid};
use crate::error::{Error, Result};
use crate::events::EventTimes;
use crate::linalg::Cholesky;
use crate::rng::{derive_seed, rng_from_seed};

/// Internal sampling step for the latent confounder path.
pub const U_GRID_DT: f64 = 0.005;

/// Squared-exponential kernel of the latent confounder:
/// `cov(U(t), U(t+d)) = sigma^2 exp(-d^2 / (2 l^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpKernel {
    pub sigma: f64,
    pub length_scale: f64,
}

impl GpKernel {
    pub fn new(sigma: f64, length_scale: f64) -> Result<Self> {
        let k = Self {
            sigma,
            length_scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.length_scale > 0.0) || !self.length_scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel length_scale must be > 0, got {}",
                self.length_scale
            )));
        }
        Ok(())
    }
}

/// Named generative settings; see [`ScenarioConfig::preset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    S1a,
    S1b,
    S2a,
    S2b,
    S3,
}

impl Scenario {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "1a" => Some(Self::S1a),
            "1b" => Some(Self::S1b),
            "2a" => Some(Self::S2a),
            "2b" => Some(Self::S2b),
            "3" => Some(Self::S3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::S1a => "1a",
            Self::S1b => "1b",
            Self::S2a => "2a",
            Self::S2b => "2b",
            Self::S3 => "3",
        }
    }

    pub fn all() -> [Scenario; 5] {
        [Self::S1a, Self::S1b, Self::S2a, Self::S2b, Self::S3]
    }
}

/// Full parameterization of the generative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mu_n: f64,
    pub mu_y: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub a_y: f64,
    pub b_y: f64,
    pub d_u: f64,
    pub kernel: GpKernel,
    pub beta0: u32,
    pub beta1: u32,
    pub beta2: u32,
    pub single_point: bool,
    pub horizon: f64,
    pub u_start: f64,
}

impl ScenarioConfig {
    fn base(single_point: bool, beta0: u32, beta1: u32, beta2: u32) -> Self {
        Self {
            mu_n: 0.2,
            mu_y: 0.2,
            a_n: 10.0,
            b_n: 0.5,
            a_y: 8.0,
            b_y: 1.0,
            d_u: 0.5,
            kernel: GpKernel {
                sigma: 0.2,
                length_scale: 0.1,
            },
            beta0,
            beta1,
            beta2,
            single_point,
            horizon: 3.0,
            u_start: -1.0,
        }
    }

    pub fn preset(scenario: Scenario) -> Self {
        match scenario {
            Scenario::S1a => Self::base(true, 1, 1, 1),
            Scenario::S1b => Self::base(true, 1, 2, 1),
            Scenario::S2a => Self::base(false, 1, 1, 1),
            Scenario::S2b => Self::base(false, 3, 2, 1),
            Scenario::S3 => Self::base(false, 1, 1, 3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.u_start > 0.0 {
            return Err(Error::InvalidInput(format!(
                "u_start must be <= 0, got {}",
                self.u_start
            )));
        }
        if self.u_start > -self.d_u {
            return Err(Error::InvalidInput(format!(
                "confounder must cover the delayed term: need u_start <= -d_u, got u_start = {} with d_u = {}",
                self.u_start, self.d_u
            )));
        }
        if !(self.a_n > 0.0) || !(self.a_y > 0.0) {
            return Err(Error::InvalidInput(
                "kernel rates a_n, a_y must be positive".into(),
            ));
        }
        if self.d_u < 0.0 {
            return Err(Error::InvalidInput(format!(
                "confounder delay must be >= 0, got {}",
                self.d_u
            )));
        }
        for (name, beta) in [
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if beta == 0 {
                return Err(Error::InvalidInput(format!(
                    "unsupported exponent: {name} must be a positive integer"
                )));
            }
        }
        Ok(())
    }
}

/// One experimental unit: instrument level plus realized event times of the
/// treatment and outcome processes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub z: u32,
    pub n_events: EventTimes,
    pub y_events: EventTimes,
}

/// A collection of i.i.d. trials observed on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trials: Vec<Trial>,
    horizon: f64,
}

impl Dataset {
    pub fn new(trials: Vec<Trial>, horizon: f64) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::NoTrials);
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let tol = horizon + 1e-12;
        for trial in &trials {
            let within = |ev: &EventTimes| ev.last().is_none_or(|t| t <= tol);
            if !within(&trial.n_events) || !within(&trial.y_events) {
                return Err(Error::InvalidInput(
                    "trial holds events beyond the horizon".into(),
                ));
            }
        }
        Ok(Self { trials, horizon })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn trials_at(&self, level: u32) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(move |t| t.z == level)
    }

    /// Distinct instrument levels present, ascending.
    pub fn levels(&self) -> Vec<u32> {
        let mut levels: Vec<u32> = self.trials.iter().map(|t| t.z).collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }
}

/// Causal unimodal kernel `b a^2 t e^{-a t}` for `t > 0`, zero otherwise.
pub fn alpha_fn(t: f64, a: f64, b: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        b * a * a * t * (-a * t).exp()
    }
}

/// Integer power `x^beta` by repeated multiplication; sign-preserving for odd
/// exponents.
pub fn power_link(x: f64, beta: u32) -> f64 {
    debug_assert!(beta >= 1, "power_link expects a positive integer exponent");
    x.powi(beta as i32)
}

/// One draw of a zero-mean Gaussian process on `grid` with the
/// squared-exponential covariance of `kernel`. Deterministic given `seed`.
pub fn sample_gp(kernel: &GpKernel, grid: &TimeGrid, seed: u64) -> Result<Curve> {
    kernel.validate()?;
    if grid.len() > 10_000 {
        return Err(Error::InvalidInput(format!(
            "dense Cholesky sampling is limited to 10^4 grid points, got {}",
            grid.len()
        )));
    }
    if kernel.sigma == 0.0 {
        return Ok(Curve::zeros(*grid));
    }
    let chol = factor_se_correlation(kernel.length_scale, grid)?;
    let values = gp_draw(&chol, kernel.sigma, grid.len(), seed);
    Curve::new(*grid, values)
}

/// Cholesky factor of the unit-variance squared-exponential correlation
/// matrix on `grid`, with diagonal jitter escalating from 1e-10 to 1e-6.
pub(crate) fn factor_se_correlation(length_scale: f64, grid: &TimeGrid) -> Result<Cholesky> {
    let n = grid.len();
    let inv_2l2 = 1.0 / (2.0 * length_scale * length_scale);
    let mut corr = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let d = (i - j) as f64 * grid.dt();
            let c = (-d * d * inv_2l2).exp();
            corr[i * n + j] = c;
            corr[j * n + i] = c;
        }
    }
    let mut jitter = 1e-10;
    while jitter <= 1e-6 {
        let mut work = corr.clone();
        for i in 0..n {
            work[i * n + i] += jitter;
        }
        if let Some(chol) = Cholesky::factor(&work, n) {
            return Ok(chol);
        }
        jitter *= 10.0;
    }
    Err(Error::CovarianceFactorization)
}

pub(crate) fn gp_draw(chol: &Cholesky, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = vec![0.0; n];
    chol.lower_matvec(&z, &mut out);
    for v in &mut out {
        *v *= sigma;
    }
    out
}

/// Piecewise-constant dominating-rate strategy for [`thinning`].
///
/// The bound over each window is the supremum of the intensity on a refined
/// sample of the window (plus optional lattice points, so that kinks of an
/// interpolated confounder path are hit exactly), inflated by `headroom`.
/// It is recomputed after every accepted event and every elapsed window.
#[derive(Debug, Clone, Copy)]
pub struct BoundStrategy {
    pub window: f64,
    pub refine: usize,
    pub headroom: f64,
    pub lattice: Option<f64>,
}

impl Default for BoundStrategy {
    fn default() -> Self {
        Self {
            window: 0.05,
            refine: 10,
            headroom: 1.1,
            lattice: None,
        }
    }
}

impl BoundStrategy {
    fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) || self.refine == 0 || !(self.headroom >= 1.0) {
            return Err(Error::InvalidInput(
                "bound strategy needs window > 0, refine >= 1, headroom >= 1".into(),
            ));
        }
        Ok(())
    }

    fn sup<F>(&self, intensity: &F, history: &[f64], lo: f64, hi: f64) -> f64
    where
        F: Fn(f64, &[f64]) -> f64,
    {
        let mut sup = 0.0f64;
        let step = (hi - lo) / self.refine as f64;
        for i in 0..=self.refine {
            let t = if i == self.refine {
                hi
            } else {
                lo + i as f64 * step
            };
            sup = sup.max(intensity(t, history));
        }
        if let Some(lat) = self.lattice {
            let mut j = (lo / lat).floor() as i64 + 1;
            loop {
                let t = j as f64 * lat;
                if t >= hi {
                    break;
                }
                if t > lo {
                    sup = sup.max(intensity(t, history));
                }
                j += 1;
            }
        }
        sup * self.headroom
    }
}

/// Ogata thinning against the dominating rate of `bound`.
///
/// `intensity(t, history)` must return the conditional intensity given the
/// events accepted so far. A proposal whose intensity exceeds the current
/// bound raises [`Error::BoundViolated`] rather than silently biasing the
/// draw. Deterministic given `seed`.
pub fn thinning<F>(
    intensity: F,
    bound: &BoundStrategy,
    horizon: f64,
    seed: u64,
) -> Result<EventTimes>
where
    F: Fn(f64, &[f64]) -> f64,
{
    bound.validate()?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut events: Vec<f64> = Vec::new();
    let mut t = 0.0f64;
    while t < horizon {
        let w_end = (t + bound.window).min(horizon);
        let m = bound.sup(&intensity, &events, t, w_end);
        if m <= 1e-12 {
            t = w_end;
            continue;
        }
        let u: f64 = rng.random();
        let gap = -(1.0 - u).ln() / m;
        let prop = t + gap;
        if prop > w_end {
            t = w_end;
            continue;
        }
        if prop <= t {
            // Zero-width gap from u == 0; skip rather than duplicate a time.
            t = w_end;
            continue;
        }
        let lam = intensity(prop, &events);
        if lam > m {
            return Err(Error::BoundViolated {
                t: prop,
                intensity: lam,
                bound: m,
            });
        }
        let v: f64 = rng.random();
        if v * m < lam {
            events.push(prop);
        }
        t = prop;
    }
    EventTimes::new(events)
}

/// Counts of intensity evaluations and how many were clamped at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampStats {
    pub evaluations: u64,
    pub clamped: u64,
}

impl ClampStats {
    pub fn merge(&mut self, other: &ClampStats) {
        self.evaluations += other.evaluations;
        self.clamped += other.clamped;
    }

    pub fn fraction(&self) -> f64 {
        if self.evaluations == 0 {
            0.0
        } else {
            self.clamped as f64 / self.evaluations as f64
        }
    }
}

/// Reusable simulator for one [`ScenarioConfig`]: the confounder covariance
/// is factored once and shared across trials.
pub struct TrialSimulator {
    cfg: ScenarioConfig,
    u_grid: TimeGrid,
    u_factor: Option<Cholesky>,
    bound: BoundStrategy,
}

impl TrialSimulator {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let u_grid = TimeGrid::covering(cfg.u_start, cfg.horizon, U_GRID_DT)?;
        let u_factor = if cfg.kernel.sigma > 0.0 {
            Some(factor_se_correlation(cfg.kernel.length_scale, &u_grid)?)
        } else {
            None
        };
        let bound = BoundStrategy {
            lattice: Some(U_GRID_DT),
            ..BoundStrategy::default()
        };
        Ok(Self {
            cfg: cfg.clone(),
            u_grid,
            u_factor,
            bound,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn simulate_trial(&self, z: u32, seed: u64) -> Result<Trial> {
        Ok(self.simulate_trial_with_stats(z, seed)?.0)
    }

    /// Draws the confounder path, then the treatment process, then the
    /// outcome process driven by the realized treatment events.
    pub fn simulate_trial_with_stats(&self, z: u32, seed: u64) -> Result<(Trial, ClampStats)> {
        let cfg = &self.cfg;
        let u_values = match &self.u_factor {
            Some(chol) => gp_draw(
                chol,
                cfg.kernel.sigma,
                self.u_grid.len(),
                derive_seed(seed, 0),
            ),
            None => vec![0.0; self.u_grid.len()],
        };
        let u_at = |x: f64| interp_slice(&self.u_grid, &u_values, x);

        let evaluations = Cell::new(0u64);
        let clamped = Cell::new(0u64);
        let clamp = |raw: f64| {
            evaluations.set(evaluations.get() + 1);
            if raw < 0.0 {
                clamped.set(clamped.get() + 1);
                0.0
            } else {
                raw
            }
        };

        let z_f = z as f64;
        let lambda_n = |t: f64, history: &[f64]| {
            if cfg.single_point && !history.is_empty() {
                return 0.0;
            }
            clamp(cfg.mu_n + power_link(alpha_fn(t, cfg.a_n, cfg.b_n) * z_f + u_at(t), cfg.beta0))
        };
        let n_events = thinning(lambda_n, &self.bound, cfg.horizon, derive_seed(seed, 1))?;

        let n_times = n_events.times().to_vec();
        let lambda_y = |t: f64, _history: &[f64]| {
            let mut drive = cfg.mu_y;
            for s in &n_times {
                drive += alpha_fn(t - s, cfg.a_y, cfg.b_y);
            }
            let inner = power_link(drive, cfg.beta1) + power_link(u_at(t - cfg.d_u), cfg.beta1);
            clamp(power_link(inner, cfg.beta2))
        };
        let y_events = thinning(lambda_y, &self.bound, cfg.horizon, derive_seed(seed, 2))?;

        let stats = ClampStats {
            evaluations: evaluations.get(),
            clamped: clamped.get(),
        };
        Ok((
            Trial {
                z,
                n_events,
                y_events,
            },
            stats,
        ))
    }

    pub fn simulate_dataset(&self, m: usize, seed: u64) -> Result<Dataset> {
        Ok(self.simulate_dataset_with_stats(m, seed)?.0)
    }

    /// `m` trials, the first half at `z = 1` and the rest at `z = 0`, each
    /// driven by a per-trial seed substream so trials can run in parallel.
    pub fn simulate_dataset_with_stats(
        &self,
        m: usize,
        seed: u64,
    ) -> Result<(Dataset, ClampStats)> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "trial count must be even and >= 2, got {m}"
            )));
        }
        let results: Result<Vec<(Trial, ClampStats)>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let z = if i < m / 2 { 1 } else { 0 };
                self.simulate_trial_with_stats(z, derive_seed(seed, i as u64))
            })
            .collect();
        let results = results?;
        let mut stats = ClampStats::default();
        let mut trials = Vec::with_capacity(m);
        for (trial, s) in results {
            stats.merge(&s);
            trials.push(trial);
        }
        Ok((Dataset::new(trials, self.cfg.horizon)?, stats))
    }
}

/// One-off convenience wrapper around [`TrialSimulator::simulate_trial`].
pub fn simulate_trial(cfg: &ScenarioConfig, z: u32, seed: u64) -> Result<Trial> {
    TrialSimulator::new(cfg)?.simulate_trial(z, seed)
}

/// One-off convenience wrapper around [`TrialSimulator::simulate_dataset`].
pub fn simulate_dataset(cfg: &ScenarioConfig, m: usize, seed: u64) -> Result<Dataset> {
    TrialSimulator::new(cfg)?.simulate_dataset(m, seed)
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `trial_id,z,stream,time` rows (one per event) and the companion
/// `trial_id,z` table listing every trial.
pub fn write_dataset_csv<WE: Write, WT: Write>(
    dataset: &Dataset,
    events_out: &mut WE,
    trials_out: &mut WT,
) -> Result<()> {
    writeln!(events_out, "trial_id,z,stream,time")?;
    writeln!(trials_out, "trial_id,z")?;
    for (id, trial) in dataset.trials().iter().enumerate() {
        writeln!(trials_out, "{},{}", id, trial.z)?;
        for t in trial.n_events.times() {
            writeln!(events_out, "{},{},N,{}", id, trial.z, fmt17(*t))?;
        }
        for t in trial.y_events.times() {
            writeln!(events_out, "{},{},Y,{}", id, trial.z, fmt17(*t))?;
        }
    }
    Ok(())
}

/// Parses the CSV pair produced by [`write_dataset_csv`].
pub fn read_dataset_csv(events_csv: &str, trials_csv: &str, horizon: f64) -> Result<Dataset> {
    let mut trial_lines = trials_csv.lines();
    match trial_lines.next() {
        Some("trial_id,z") => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header trial_id,z, got {other:?}"
            )))
        }
    }
    let mut ids: Vec<(usize, u32)> = Vec::new();
    for line in trial_lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id: usize = parse_field(parts.next(), "trial_id")?;
        let z: u32 = parse_field(parts.next(), "z")?;
        if parts.next().is_some() {
            return Err(Error::Parse(format!(
                "too many fields in trials row: {line}"
            )));
        }
        ids.push((id, z));
    }
    ids.sort_unstable_by_key(|(id, _)| *id);
    let mut index_of = std::collections::HashMap::new();
    for (pos, (id, _)) in ids.iter().enumerate() {
        if index_of.insert(*id, pos).is_some() {
            return Err(Error::Parse(format!("duplicate trial_id {id}")));
        }
    }

    let mut n_times: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    let mut y_times: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    let mut event_lines = events_csv.lines();
    match event_lines.next() {
        Some("trial_id,z,stream,time") => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header trial_id,z,stream,time, got {other:?}"
            )))
        }
    }
    for line in event_lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id: usize = parse_field(parts.next(), "trial_id")?;
        let z: u32 = parse_field(parts.next(), "z")?;
        let stream = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("missing stream in: {line}")))?;
        let time: f64 = parse_field(parts.next(), "time")?;
        let pos = *index_of
            .get(&id)
            .ok_or_else(|| Error::Parse(format!("event references unknown trial_id {id}")))?;
        if ids[pos].1 != z {
            return Err(Error::Parse(format!(
                "event row disagrees with trials table on z for trial {id}"
            )));
        }
        match stream {
            "N" => n_times[pos].push(time),
            "Y" => y_times[pos].push(time),
            other => return Err(Error::Parse(format!("unknown stream {other:?}"))),
        }
    }

    let mut trials = Vec::with_capacity(ids.len());
    for (pos, (_, z)) in ids.iter().enumerate() {
        let mut n = std::mem::take(&mut n_times[pos]);
        let mut y = std::mem::take(&mut y_times[pos]);
        n.sort_by(|a, b| a.partial_cmp(b).unwrap());
        y.sort_by(|a, b| a.partial_cmp(b).unwrap());
        trials.push(Trial {
            z: *z,
            n_events: EventTimes::new(n)?,
            y_events: EventTimes::new(y)?,
        });
    }
    Dataset::new(trials, horizon)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::Parse(format!("missing field {name}")))?
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse field {name}")))
}
