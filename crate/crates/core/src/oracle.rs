//! Ground-truth effect rates and evaluation metrics.
//!
//! Closed forms cover the additive-confounding outcome models; the
//! non-additive case has no closed form and is evaluated by Monte Carlo over
//! confounder draws. The quality criterion `r` is the integrated squared
//! estimation error normalized by the integrated squared truth.

use rayon::prelude::*;

use crate::curve::{integrate, interp_slice, Curve, TimeGrid};
use crate::error::{Error, Result};
use crate::events::{count_at, EventTimes};
use crate::rng::derive_seed;
use crate::simulate::{alpha_fn, factor_se_correlation, gp_draw, power_link, ScenarioConfig};

/// Effect rate implied by a linear outcome model without self-excitation:
/// the negated event kernel.
pub fn true_acer_linear(g: &Curve) -> Curve {
    debug_assert!(g.values()[0].abs() < 1e-12, "event kernel must be causal");
    g.scaled(-1.0)
}

/// Effect rate under a power-link outcome model with additive confounding:
/// `mu_y^beta1 - (mu_y + g(delta))^beta1` pointwise.
pub fn true_acer_model2(mu_y: f64, beta1: u32, g: &Curve) -> Curve {
    if beta1 == 1 {
        // Identity link: the baseline cancels exactly, not just to rounding.
        return true_acer_linear(g);
    }
    let base = power_link(mu_y, beta1);
    Curve::new(
        g.grid(),
        g.values()
            .iter()
            .map(|v| base - power_link(mu_y + v, beta1))
            .collect(),
    )
    .expect("finite transform of a finite curve")
}

/// Closed-form effect rate of a generative scenario, when one exists
/// (requires an identity outer link).
pub fn scenario_truth(cfg: &ScenarioConfig, grid: &TimeGrid) -> Result<Curve> {
    if cfg.beta2 != 1 {
        return Err(Error::InvalidInput(format!(
            "no closed-form effect rate with outer exponent beta2 = {}; use the Monte Carlo surface",
            cfg.beta2
        )));
    }
    let g = Curve::from_fn(*grid, |t| alpha_fn(t, cfg.a_y, cfg.b_y))?;
    Ok(true_acer_model2(cfg.mu_y, cfg.beta1, &g))
}

/// Derivative of the alpha kernel with respect to a shift of its onset:
/// `d/dtau alpha(t - tau; a, b)` evaluated at lag `delta = t - tau`.
///
/// Right-continuous at zero lag (the value there is `-b a^2`), zero for
/// negative lags.
pub fn alpha_shift_deriv(delta: f64, a: f64, b: f64) -> f64 {
    if delta < 0.0 {
        0.0
    } else {
        b * a * a * (a * delta - 1.0) * (-a * delta).exp()
    }
}

/// Effect-rate surface over `(t, tau)` pairs with per-point Monte Carlo
/// standard errors.
#[derive(Debug, Clone)]
pub struct AcerSurface {
    tau_grid: Vec<f64>,
    t_grid: Vec<f64>,
    values: Vec<f64>,
    mc_se: Vec<f64>,
}

impl AcerSurface {
    pub fn tau_grid(&self) -> &[f64] {
        &self.tau_grid
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    fn index(&self, t_idx: usize, tau_idx: usize) -> usize {
        t_idx * self.tau_grid.len() + tau_idx
    }

    pub fn value(&self, t_idx: usize, tau_idx: usize) -> f64 {
        self.values[self.index(t_idx, tau_idx)]
    }

    pub fn se(&self, t_idx: usize, tau_idx: usize) -> f64 {
        self.mc_se[self.index(t_idx, tau_idx)]
    }

    /// CSV export `t,tau,acer,mc_se` at full precision.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,tau,acer,mc_se")?;
        for (ti, t) in self.t_grid.iter().enumerate() {
            for (taui, tau) in self.tau_grid.iter().enumerate() {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    t,
                    tau,
                    self.value(ti, taui),
                    self.se(ti, taui)
                )?;
            }
        }
        Ok(())
    }
}

/// Refinement of the inner time integral relative to the output grid step.
const MC_QUADRATURE_REFINE: usize = 8;
/// Confounder paths per parallel block; blocks are combined in a fixed
/// order so the result does not depend on scheduling.
const MC_BLOCK: usize = 256;

/// Monte Carlo effect-rate surface for a non-additive-confounding outcome
/// (outer power link with exponent >= 2, identity inner links).
///
/// For each `(t, tau)` with `t > tau` the surface is the expectation over
/// confounder paths `U` of
///
/// ```text
/// int_tau^t  d_alpha(s - tau) * beta2 * (mu_y + alpha(s - tau) + U(s - d_u))^(beta2 - 1)  ds
/// ```
///
/// where `d_alpha` is [`alpha_shift_deriv`] with the outcome-kernel
/// parameters. The integral runs on a refined trapezoid grid; the
/// expectation and its standard error come from `n_mc` independent paths.
pub fn mc_acer_scenario3(
    cfg: &ScenarioConfig,
    tau_grid: &[f64],
    t_grid: &TimeGrid,
    n_mc: usize,
    seed: u64,
) -> Result<AcerSurface> {
    cfg.validate()?;
    if cfg.beta0 != 1 || cfg.beta1 != 1 {
        return Err(Error::InvalidInput(
            "Monte Carlo surface requires identity inner links (beta0 = beta1 = 1)".into(),
        ));
    }
    if cfg.beta2 < 2 {
        return Err(Error::InvalidInput(
            "beta2 < 2: use closed form instead".into(),
        ));
    }
    if n_mc < 1000 {
        return Err(Error::InvalidInput(format!(
            "need at least 1000 Monte Carlo draws, got {n_mc}"
        )));
    }
    if t_grid.t0() != 0.0 {
        return Err(Error::InvalidInput(
            "surface time grid must start at 0".into(),
        ));
    }
    if tau_grid.is_empty() {
        return Err(Error::InvalidInput("empty tau grid".into()));
    }
    let fine_dt = t_grid.dt() / MC_QUADRATURE_REFINE as f64;
    let n_fine = (t_grid.len() - 1) * MC_QUADRATURE_REFINE + 1;
    let mut tau_fine_idx = Vec::with_capacity(tau_grid.len());
    for tau in tau_grid {
        if *tau < 0.0 || *tau > t_grid.t_end() {
            return Err(Error::InvalidInput(format!(
                "tau {tau} outside the surface window"
            )));
        }
        let idx = t_grid.lattice_index(*tau).ok_or_else(|| {
            Error::InvalidInput(format!("tau {tau} does not lie on the surface time grid"))
        })?;
        tau_fine_idx.push(idx * MC_QUADRATURE_REFINE);
    }

    // Kernel and shift-derivative values depend only on the lag, shared by
    // every tau and every draw.
    let drive: Vec<f64> = (0..n_fine)
        .map(|l| cfg.mu_y + alpha_fn(l as f64 * fine_dt, cfg.a_y, cfg.b_y))
        .collect();
    let deriv: Vec<f64> = (0..n_fine)
        .map(|l| alpha_shift_deriv(l as f64 * fine_dt, cfg.a_y, cfg.b_y))
        .collect();

    // Confounder sampled where the delayed argument needs it.
    let u_grid = TimeGrid::covering(
        -cfg.d_u,
        t_grid.t_end() - cfg.d_u + 1e-12,
        crate::simulate::U_GRID_DT,
    )?;
    let u_chol = if cfg.kernel.sigma > 0.0 {
        Some(factor_se_correlation(cfg.kernel.length_scale, &u_grid)?)
    } else {
        None
    };

    let n_tau = tau_grid.len();
    let n_t = t_grid.len();
    let cells = n_t * n_tau;
    let beta2 = cfg.beta2;
    let pow = beta2 - 1;

    let n_blocks = n_mc.div_ceil(MC_BLOCK);
    let block_sums: Vec<(Vec<f64>, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let lo = block * MC_BLOCK;
            let hi = (lo + MC_BLOCK).min(n_mc);
            let mut sum = vec![0.0; cells];
            let mut sumsq = vec![0.0; cells];
            let mut u_vals = vec![0.0; u_grid.len()];
            let mut draw_vals = vec![0.0; cells];
            for k in lo..hi {
                match &u_chol {
                    Some(chol) => {
                        u_vals = gp_draw(
                            chol,
                            cfg.kernel.sigma,
                            u_grid.len(),
                            derive_seed(seed, k as u64),
                        );
                    }
                    None => u_vals.fill(0.0),
                }
                draw_vals.fill(0.0);
                for (tau_idx, &j0) in tau_fine_idx.iter().enumerate() {
                    // Composite Simpson over pairs of fine steps; every
                    // output node sits on an even offset since tau lies on
                    // the coarse lattice and the refinement is even.
                    let integrand = |l: usize| {
                        let s = (j0 + l) as f64 * fine_dt;
                        deriv[l]
                            * beta2 as f64
                            * power_link(
                                drive[l] + interp_slice(&u_grid, &u_vals, s - cfg.d_u),
                                pow,
                            )
                    };
                    let max_offset = n_fine - 1 - j0;
                    let mut cum = 0.0;
                    let mut f_left = integrand(0);
                    let mut l = 0;
                    while l + 2 <= max_offset {
                        let f_mid = integrand(l + 1);
                        let f_right = integrand(l + 2);
                        cum += (f_left + 4.0 * f_mid + f_right) * fine_dt / 3.0;
                        f_left = f_right;
                        l += 2;
                        let jf = j0 + l;
                        if jf % MC_QUADRATURE_REFINE == 0 {
                            let t_idx = jf / MC_QUADRATURE_REFINE;
                            draw_vals[t_idx * n_tau + tau_idx] = cum;
                        }
                    }
                }
                for (cell, v) in draw_vals.iter().enumerate() {
                    sum[cell] += v;
                    sumsq[cell] += v * v;
                }
            }
            (sum, sumsq)
        })
        .collect();

    let mut sum = vec![0.0; cells];
    let mut sumsq = vec![0.0; cells];
    for (bs, bq) in &block_sums {
        for c in 0..cells {
            sum[c] += bs[c];
            sumsq[c] += bq[c];
        }
    }
    let n = n_mc as f64;
    let mut values = vec![0.0; cells];
    let mut mc_se = vec![0.0; cells];
    for c in 0..cells {
        let mean = sum[c] / n;
        values[c] = mean;
        let var = ((sumsq[c] - n * mean * mean) / (n - 1.0)).max(0.0);
        mc_se[c] = (var / n).sqrt();
    }
    Ok(AcerSurface {
        tau_grid: tau_grid.to_vec(),
        t_grid: t_grid.points().collect(),
        values,
        mc_se,
    })
}

/// Proportion of integrated squared error:
/// `int_lo^hi (estimate - truth)^2 / int_lo^hi truth^2`.
pub fn criterion_r(estimate: &Curve, truth: &Curve, lo: f64, hi: f64) -> Result<f64> {
    let diff_sq = estimate.zip_with(truth, |a, b| (a - b) * (a - b))?;
    let truth_sq = truth.zip_with(truth, |a, _| a * a)?;
    let denom = integrate(&truth_sq, lo, hi)?;
    if denom == 0.0 {
        return Err(Error::NullTruth);
    }
    Ok(integrate(&diff_sq, lo, hi)? / denom)
}

/// Effect of one realized treatment path against another at time `t`:
/// `-int_0^t acer(t - tau) * (n(tau) - n'(tau)) dtau` by grid quadrature,
/// where `n` is the cumulative count of each path.
pub fn multi_event_ace(
    acer: &Curve,
    n_path: &EventTimes,
    n_path_alt: &EventTimes,
    t: f64,
) -> Result<f64> {
    let grid = acer.grid();
    if !grid.contains(t) || t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "evaluation time {t} outside grid"
        )));
    }
    let integrand = |tau: f64| {
        let diff = count_at(n_path, tau) as f64 - count_at(n_path_alt, tau) as f64;
        acer.interp(t - tau) * diff
    };
    let dt = grid.dt();
    let mut total = 0.0;
    let mut tau = 0.0;
    let mut prev = integrand(0.0);
    loop {
        let next = (tau + dt).min(t);
        if next <= tau {
            break;
        }
        let val = integrand(next);
        total += (prev + val) / 2.0 * (next - tau);
        prev = val;
        tau = next;
        if tau >= t {
            break;
        }
    }
    Ok(-total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{Scenario, ScenarioConfig};

    const E: f64 = std::f64::consts::E;

    fn grid601() -> TimeGrid {
        TimeGrid::new(0.0, 0.005, 601).unwrap()
    }

    fn alpha_curve(grid: &TimeGrid, a: f64, b: f64) -> Curve {
        Curve::from_fn(*grid, |t| alpha_fn(t, a, b)).unwrap()
    }

    #[test]
    fn linear_truth_negates_kernel() {
        let g = alpha_curve(&grid601(), 8.0, 1.0);
        let acer = true_acer_linear(&g);
        assert_eq!(acer.values()[0], 0.0);
        for (a, k) in acer.values().iter().zip(g.values()) {
            assert_eq!(*a, -*k);
        }
        let zero = true_acer_linear(&Curve::zeros(grid601()));
        assert!(zero.max_abs() == 0.0);
    }

    #[test]
    fn model2_truth_values() {
        let g = alpha_curve(&grid601(), 8.0, 1.0);
        let acer = true_acer_model2(0.2, 2, &g);
        // Zero lag: the kernel vanishes so the difference cancels.
        assert_eq!(acer.values()[0], 0.0);
        let k = grid601().lattice_index(0.125).unwrap();
        let expected = 0.04 - (0.2 + 8.0 / E) * (0.2 + 8.0 / E);
        assert!((acer.values()[k] - expected).abs() < 1e-12);
        assert!((expected + 9.839).abs() < 1e-3, "peak value {expected}");
    }

    #[test]
    fn model2_with_identity_link_reduces_to_linear() {
        let g = alpha_curve(&grid601(), 8.0, 1.0);
        let lin = true_acer_linear(&g);
        let m2 = true_acer_model2(0.2, 1, &g);
        for (a, b) in lin.values().iter().zip(m2.values()) {
            assert_eq!(*a, *b);
        }
    }

    #[test]
    fn scenario_truths() {
        let g = grid601();
        let t_1a = scenario_truth(&ScenarioConfig::preset(Scenario::S1a), &g).unwrap();
        let neg_alpha = alpha_curve(&g, 8.0, 1.0).scaled(-1.0);
        for (a, b) in t_1a.values().iter().zip(neg_alpha.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(scenario_truth(&ScenarioConfig::preset(Scenario::S3), &g).is_err());
    }

    #[test]
    fn alpha_shift_deriv_matches_finite_differences() {
        let (a, b) = (8.0, 1.0);
        let h = 1e-6;
        for delta in [0.05, 0.125, 0.4, 1.0] {
            let analytic = alpha_shift_deriv(delta, a, b);
            let fd = (alpha_fn(delta - h, a, b) - alpha_fn(delta + h, a, b)) / (2.0 * h);
            assert!(
                (analytic - fd).abs() < 1e-5,
                "at {delta}: {analytic} vs {fd}"
            );
        }
        assert_eq!(alpha_shift_deriv(-0.2, a, b), 0.0);
        assert!((alpha_shift_deriv(0.0, a, b) + b * a * a).abs() < 1e-12);
    }

    fn scenario3_cfg(sigma: f64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::preset(Scenario::S3);
        cfg.kernel.sigma = sigma;
        cfg
    }

    #[test]
    fn mc_surface_rejects_wrong_links_and_small_samples() {
        let t_grid = TimeGrid::new(0.0, 0.01, 101).unwrap();
        let mut cfg = scenario3_cfg(0.2);
        cfg.beta2 = 1;
        assert!(mc_acer_scenario3(&cfg, &[0.0], &t_grid, 1000, 1).is_err());
        let cfg = scenario3_cfg(0.2);
        assert!(mc_acer_scenario3(&cfg, &[0.0], &t_grid, 10, 1).is_err());
    }

    #[test]
    fn mc_surface_vanishes_at_or_before_tau() {
        let t_grid = TimeGrid::new(0.0, 0.01, 101).unwrap();
        let cfg = scenario3_cfg(0.1);
        let surface = mc_acer_scenario3(&cfg, &[0.0, 0.5], &t_grid, 1000, 3).unwrap();
        for (ti, t) in surface.t_grid().iter().enumerate() {
            if *t <= 0.5 {
                assert_eq!(surface.value(ti, 1), 0.0);
            }
        }
        assert_eq!(surface.value(0, 0), 0.0);
    }

    #[test]
    fn mc_surface_degenerate_confounder_matches_closed_form() {
        let t_grid = TimeGrid::new(0.0, 0.01, 301).unwrap();
        let cfg = scenario3_cfg(0.0);
        let taus = [0.0, 0.25, 0.5];
        let surface = mc_acer_scenario3(&cfg, &taus, &t_grid, 1000, 5).unwrap();
        let g = alpha_curve(&t_grid, cfg.a_y, cfg.b_y);
        let closed = true_acer_model2(cfg.mu_y, 3, &g);
        for (taui, tau) in taus.iter().enumerate() {
            for (ti, t) in surface.t_grid().iter().enumerate() {
                if *t <= *tau {
                    continue;
                }
                // All draws coincide; the accumulated variance is pure
                // floating-point cancellation noise.
                assert!(surface.se(ti, taui) < 1e-6);
                let lag_idx = t_grid.lattice_index(t - tau).unwrap();
                let want = closed.values()[lag_idx];
                let got = surface.value(ti, taui);
                assert!(
                    (got - want).abs() < 1e-3,
                    "surface({t}, {tau}) = {got} vs closed form {want}"
                );
            }
        }
    }

    #[test]
    fn mc_surface_depends_on_confounder_scale() {
        let t_grid = TimeGrid::new(0.0, 0.02, 101).unwrap();
        let taus = [0.0, 0.5];
        let lo = mc_acer_scenario3(&scenario3_cfg(0.1), &taus, &t_grid, 2000, 7).unwrap();
        let hi = mc_acer_scenario3(&scenario3_cfg(0.3), &taus, &t_grid, 2000, 8).unwrap();
        let mut best_z: f64 = 0.0;
        for ti in 0..lo.t_grid().len() {
            for taui in 0..taus.len() {
                let gap = (lo.value(ti, taui) - hi.value(ti, taui)).abs();
                let se = (lo.se(ti, taui).powi(2) + hi.se(ti, taui).powi(2)).sqrt();
                if se > 0.0 {
                    best_z = best_z.max(gap / se);
                }
            }
        }
        assert!(
            best_z > 3.0,
            "surfaces statistically indistinguishable (max z = {best_z})"
        );
    }

    #[test]
    fn mc_surface_error_scales_with_draw_count() {
        let t_grid = TimeGrid::new(0.0, 0.02, 51).unwrap();
        let taus = [0.0];
        let small = mc_acer_scenario3(&scenario3_cfg(0.2), &taus, &t_grid, 1000, 9).unwrap();
        let large = mc_acer_scenario3(&scenario3_cfg(0.2), &taus, &t_grid, 4000, 10).unwrap();
        let mean_se = |s: &AcerSurface| {
            let mut tot = 0.0;
            let mut cnt = 0;
            for ti in 0..s.t_grid().len() {
                if s.se(ti, 0) > 0.0 {
                    tot += s.se(ti, 0);
                    cnt += 1;
                }
            }
            tot / cnt as f64
        };
        let ratio = mean_se(&small) / mean_se(&large);
        assert!(
            ratio > 1.6 && ratio < 2.4,
            "quadrupling draws should roughly halve the standard error, ratio {ratio}"
        );
    }

    #[test]
    fn mc_surface_is_deterministic() {
        let t_grid = TimeGrid::new(0.0, 0.02, 51).unwrap();
        let a = mc_acer_scenario3(&scenario3_cfg(0.2), &[0.0, 0.26], &t_grid, 1000, 11).unwrap();
        let b = mc_acer_scenario3(&scenario3_cfg(0.2), &[0.0, 0.26], &t_grid, 1000, 11).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.mc_se, b.mc_se);
    }

    #[test]
    fn criterion_r_examples() {
        let g = grid601();
        let truth = alpha_curve(&g, 8.0, 1.0).scaled(-1.0);
        assert_eq!(criterion_r(&truth, &truth, 0.0, 1.0).unwrap(), 0.0);
        let zero = Curve::zeros(g);
        assert!((criterion_r(&zero, &truth, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let double = truth.scaled(2.0);
        assert!((criterion_r(&double, &truth, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            criterion_r(&truth, &zero, 0.0, 1.0),
            Err(Error::NullTruth)
        ));
    }

    #[test]
    fn multi_event_ace_identical_paths() {
        let acer = alpha_curve(&grid601(), 8.0, 1.0).scaled(-1.0);
        let path = EventTimes::new(vec![0.2, 0.5]).unwrap();
        let v = multi_event_ace(&acer, &path, &path, 1.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn multi_event_ace_single_event_reduction() {
        let acer = alpha_curve(&grid601(), 8.0, 1.0).scaled(-1.0);
        let one = EventTimes::new(vec![0.3]).unwrap();
        let none = EventTimes::empty();
        let t = 1.0;
        let got = multi_event_ace(&acer, &one, &none, t).unwrap();
        // Independent quadrature of -int_{tau1}^t acer(t - tau) dtau.
        let steps = 20_000;
        let h = (t - 0.3) / steps as f64;
        let mut want = 0.0;
        for i in 0..steps {
            let tau = 0.3 + (i as f64 + 0.5) * h;
            want -= acer.interp(t - tau) * h;
        }
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn multi_event_ace_is_additive() {
        let acer = alpha_curve(&grid601(), 8.0, 1.0).scaled(-1.0);
        let both = EventTimes::new(vec![0.2, 0.5]).unwrap();
        let first = EventTimes::new(vec![0.2]).unwrap();
        let second = EventTimes::new(vec![0.5]).unwrap();
        let none = EventTimes::empty();
        let t = 1.0;
        let combined = multi_event_ace(&acer, &both, &none, t).unwrap();
        let split = multi_event_ace(&acer, &first, &none, t).unwrap()
            + multi_event_ace(&acer, &second, &none, t).unwrap();
        assert!((combined - split).abs() < 1e-10);
    }

    #[test]
    fn multi_event_ace_rejects_out_of_grid_time() {
        let acer = alpha_curve(&grid601(), 8.0, 1.0).scaled(-1.0);
        let path = EventTimes::new(vec![0.2]).unwrap();
        assert!(multi_event_ace(&acer, &path, &EventTimes::empty(), 5.0).is_err());
    }
}
