//! Uncertainty and diagnostics: studentized bootstrap confidence bands for
//! the fitted effect-rate curve, and the survival-dominance check that can
//! falsify instrument monotonicity.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::curve::{Curve, TimeGrid};
use crate::error::{Error, Result};
use crate::estimate::{fit_acer, itt_from_trials, FitConfig};
use crate::events::count_at;
use crate::rng::{derive_seed, rng_from_seed};
use crate::simulate::{Dataset, Trial};

/// How the half-width multiplies the pointwise bootstrap spread.
///
/// `RootM` applies an extra `m^{-1/2}` factor on top of the bootstrap
/// standard deviation (a display convention that keeps bands tight at large
/// trial counts); `Plain` uses the bootstrap standard deviation directly
/// and is the scale under which the band is wide enough to interpret as
/// covering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandScale {
    RootM,
    Plain,
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub fit: FitConfig,
    pub b_reps: usize,
    pub alpha: f64,
    pub band_scale: BandScale,
}

impl BootstrapConfig {
    pub fn new(fit: FitConfig, b_reps: usize, alpha: f64) -> Self {
        Self {
            fit,
            b_reps,
            alpha,
            band_scale: BandScale::RootM,
        }
    }
}

/// Symmetric confidence band around the point estimate.
#[derive(Debug, Clone)]
pub struct ConfidenceBand {
    pub center: Curve,
    pub lower: Curve,
    pub upper: Curve,
    pub alpha: f64,
    /// Bootstrap quantile of the studentized sup statistic.
    pub q_alpha: f64,
    pub b_reps: usize,
}

fn cmp_times(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("event times are finite") {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Canonical arm ordering so resampling is invariant to how trials were
/// stored.
fn canonical_arm<'a>(data: &'a Dataset, level: u32) -> Vec<&'a Trial> {
    let mut arm: Vec<&Trial> = data.trials_at(level).collect();
    arm.sort_by(|a, b| {
        cmp_times(a.n_events.times(), b.n_events.times())
            .then_with(|| cmp_times(a.y_events.times(), b.y_events.times()))
    });
    arm
}

/// Nonparametric bootstrap band: trials are resampled with replacement
/// within each instrument arm and the full pipeline is refitted with the
/// fixed basis and penalty of `cfg.fit` (no re-selection inside replicates).
///
/// The half-width is `q_alpha * scale * sd_g(t)` where `q_alpha` is the
/// empirical `(1 - alpha)` quantile of the studentized sup statistic
/// `max_t |g_b(t) - mean_g(t)| / sd_g(t)` across replicates.
pub fn bootstrap_band(data: &Dataset, cfg: &BootstrapConfig, seed: u64) -> Result<ConfidenceBand> {
    if cfg.b_reps < 100 {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs at least 100 replicates, got {}",
            cfg.b_reps
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must be in (0, 1), got {}",
            cfg.alpha
        )));
    }
    let center = cfg.fit.fit(data)?.acer;
    let hi = canonical_arm(data, cfg.fit.level_hi);
    let lo = canonical_arm(data, cfg.fit.level_lo);
    if hi.is_empty() {
        return Err(Error::MissingLevel(cfg.fit.level_hi));
    }
    if lo.is_empty() {
        return Err(Error::MissingLevel(cfg.fit.level_lo));
    }

    let replicates: Result<Vec<Vec<f64>>> = (0..cfg.b_reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let hi_sample: Vec<&Trial> = (0..hi.len())
                .map(|_| hi[rng.random_range(0..hi.len())])
                .collect();
            let lo_sample: Vec<&Trial> = (0..lo.len())
                .map(|_| lo[rng.random_range(0..lo.len())])
                .collect();
            let (f_b, h_b) = itt_from_trials(
                &hi_sample,
                &lo_sample,
                &cfg.fit.grid,
                cfg.fit.level_hi,
                cfg.fit.level_lo,
            )?;
            let fit = fit_acer(&f_b, &h_b, &cfg.fit.spec, cfg.fit.eta)?;
            Ok(fit.acer.into_values())
        })
        .collect();
    let replicates = replicates?;

    let n = cfg.fit.grid.len();
    let b_count = cfg.b_reps as f64;
    let mut mean = vec![0.0; n];
    for rep in &replicates {
        for (m, v) in mean.iter_mut().zip(rep) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= b_count;
    }
    let mut sd = vec![0.0; n];
    for rep in &replicates {
        for (s, (v, m)) in sd.iter_mut().zip(rep.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut sd {
        *s = (*s / (b_count - 1.0)).sqrt();
    }
    if sd.iter().all(|s| *s == 0.0) {
        return Err(Error::DegenerateBootstrap);
    }

    // Studentization floor keeps the sup statistic finite where the spread
    // vanishes (outside the basis support, degenerate boundary points).
    let mut q_stats: Vec<f64> = replicates
        .iter()
        .map(|rep| {
            rep.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((v, m), s)| (v - m).abs() / s.max(1e-12))
                .fold(0.0, f64::max)
        })
        .collect();
    q_stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((1.0 - cfg.alpha) * b_count).ceil().clamp(1.0, b_count) as usize;
    let q_alpha = q_stats[rank - 1];

    let scale = match cfg.band_scale {
        BandScale::RootM => (data.len() as f64).powf(-0.5),
        BandScale::Plain => 1.0,
    };
    let grid = cfg.fit.grid;
    let half: Vec<f64> = sd.iter().map(|s| q_alpha * scale * s).collect();
    let lower = Curve::new(
        grid,
        center
            .values()
            .iter()
            .zip(&half)
            .map(|(c, h)| c - h)
            .collect(),
    )?;
    let upper = Curve::new(
        grid,
        center
            .values()
            .iter()
            .zip(&half)
            .map(|(c, h)| c + h)
            .collect(),
    )?;
    Ok(ConfidenceBand {
        center,
        lower,
        upper,
        alpha: cfg.alpha,
        q_alpha,
        b_reps: cfg.b_reps,
    })
}

/// CSV export `delta,center,lower,upper` at full precision.
pub fn write_band_csv<W: std::io::Write>(band: &ConfidenceBand, out: &mut W) -> Result<()> {
    writeln!(out, "delta,center,lower,upper")?;
    let grid = band.center.grid();
    for (k, t) in grid.points().enumerate() {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            t,
            band.center.values()[k],
            band.lower.values()[k],
            band.upper.values()[k]
        )?;
    }
    Ok(())
}

/// Empirical survival curves of the first treatment event per arm, and the
/// largest violation of the dominance required by instrument monotonicity.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub survival_hi: Curve,
    pub survival_lo: Curve,
    pub max_violation: f64,
    /// Grid times attaining the maximal violation (empty when none).
    pub violation_times: Vec<f64>,
}

impl MonotonicityReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "max_violation": self.max_violation,
            "violation_times": self.violation_times,
        })
    }

    /// CSV export `tau,survival_hi,survival_lo`.
    pub fn write_survival_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "tau,survival_hi,survival_lo")?;
        let grid = self.survival_hi.grid();
        for (k, t) in grid.points().enumerate() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                t,
                self.survival_hi.values()[k],
                self.survival_lo.values()[k]
            )?;
        }
        Ok(())
    }
}

fn survival_curve(trials: &[&Trial], grid: &TimeGrid) -> Result<Curve> {
    let m = trials.len() as f64;
    let values = grid
        .points()
        .map(|tau| {
            let surviving = trials
                .iter()
                .filter(|t| count_at(&t.n_events, tau) == 0)
                .count();
            surviving as f64 / m
        })
        .collect();
    Curve::new(*grid, values)
}

/// Compares the first-treatment-event survival functions of the two binary
/// instrument arms. Under monotonicity the stimulated-arm survival can never
/// exceed the unstimulated one; a positive `max_violation` beyond sampling
/// noise falsifies it. Trials with no treatment event survive through the
/// whole window.
pub fn monotonicity_check(data: &Dataset, grid: &TimeGrid) -> Result<MonotonicityReport> {
    let hi: Vec<&Trial> = data.trials_at(1).collect();
    let lo: Vec<&Trial> = data.trials_at(0).collect();
    if hi.is_empty() {
        return Err(Error::MissingLevel(1));
    }
    if lo.is_empty() {
        return Err(Error::MissingLevel(0));
    }
    let survival_hi = survival_curve(&hi, grid)?;
    let survival_lo = survival_curve(&lo, grid)?;
    let mut max_violation = 0.0f64;
    for (h, l) in survival_hi.values().iter().zip(survival_lo.values()) {
        max_violation = max_violation.max(h - l);
    }
    let mut violation_times = Vec::new();
    if max_violation > 0.0 {
        for (k, (h, l)) in survival_hi
            .values()
            .iter()
            .zip(survival_lo.values())
            .enumerate()
        {
            if h - l >= max_violation - 1e-12 {
                violation_times.push(grid.point(k));
            }
        }
    }
    Ok(MonotonicityReport {
        survival_hi,
        survival_lo,
        max_violation,
        violation_times,
    })
}
