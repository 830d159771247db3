//! The generalised Wald estimation pipeline.
//!
//! Mean cumulative counts per instrument arm give the intention-to-treat
//! curves `f` (treatment) and `h` (outcome). The causal effect rate solves
//! the convolution identity `h = -ACER * f`, which we invert by expanding the
//! ACER in a B-spline basis and minimizing
//!
//! ```text
//! || h + sum_j (psi_j * f) beta_j ||^2  +  eta ||beta||^2
//! ```
//!
//! over the coefficient vector. Design columns are scaled by `sqrt(dt)` so
//! the discrete norm approximates the L2 norm and `eta` keeps a
//! grid-resolution-independent meaning.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::curve::{convolve, Curve, TimeGrid};
use crate::error::{Error, Result};
use crate::events::step_curve;
use crate::linalg::{spd_condition_estimate, Cholesky};
use crate::rng::rng_from_seed;
use crate::simulate::{Dataset, Trial};

/// B-spline basis layout on the effect support `[0, S]`: clamped uniform
/// knots, `num_interior_knots + degree + 1` basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub degree: usize,
    pub num_interior_knots: usize,
    pub support: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            degree: 3,
            num_interior_knots: 6,
            support: 1.0,
        }
    }
}

impl BasisSpec {
    pub fn new(degree: usize, num_interior_knots: usize, support: f64) -> Result<Self> {
        let spec = Self {
            degree,
            num_interior_knots,
            support,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.support > 0.0) || !self.support.is_finite() {
            return Err(Error::InvalidInput(format!(
                "basis support must be positive, got {}",
                self.support
            )));
        }
        Ok(())
    }

    pub fn num_basis(&self) -> usize {
        self.num_interior_knots + self.degree + 1
    }

    /// Clamped knot vector: the boundary knots repeated `degree + 1` times
    /// around evenly spaced interior knots.
    pub fn knot_vector(&self) -> Vec<f64> {
        let k = self.num_interior_knots;
        let p = self.degree;
        let mut knots = Vec::with_capacity(2 * (p + 1) + k);
        knots.extend(std::iter::repeat_n(0.0, p + 1));
        for i in 1..=k {
            knots.push(self.support * i as f64 / (k + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(self.support, p + 1));
        knots
    }
}

/// Evaluates every basis function at `x in [0, S]` into `row` (length J).
fn bspline_row(knots: &[f64], degree: usize, x: f64, row: &mut [f64]) {
    let p = degree;
    let num_basis = knots.len() - p - 1;
    debug_assert_eq!(row.len(), num_basis);
    row.fill(0.0);

    // Knot span index: largest mu with knots[mu] <= x < knots[mu+1], clamped
    // to the last nonempty span at the right boundary.
    let last_span = num_basis - 1;
    let mut span = p;
    while span < last_span && x >= knots[span + 1] {
        span += 1;
    }

    // Triangular recursion over the p+1 basis functions alive on this span.
    let mut vals = vec![0.0; p + 1];
    vals[0] = 1.0;
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { vals[r] / denom } else { 0.0 };
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    for (r, v) in vals.iter().enumerate() {
        row[span - p + r] = *v;
    }
}

/// The `J` basis functions of `spec` sampled on `grid`, zero outside the
/// support interval.
pub fn bspline_basis(spec: &BasisSpec, grid: &TimeGrid) -> Result<Vec<Curve>> {
    spec.validate()?;
    if spec.support > grid.t_end() + 1e-9 * grid.dt() || grid.t0() > 0.0 {
        return Err(Error::InvalidInput(format!(
            "basis support [0, {}] must lie within the grid range [{}, {}]",
            spec.support,
            grid.t0(),
            grid.t_end()
        )));
    }
    if spec.support <= spec.degree as f64 * grid.dt() {
        return Err(Error::SupportTooSmall);
    }
    let knots = spec.knot_vector();
    let j_count = spec.num_basis();
    let mut columns = vec![vec![0.0; grid.len()]; j_count];
    let mut row = vec![0.0; j_count];
    for (k, x) in grid.points().enumerate() {
        if x < 0.0 || x > spec.support {
            continue;
        }
        bspline_row(&knots, spec.degree, x, &mut row);
        for (j, col) in columns.iter_mut().enumerate() {
            col[k] = row[j];
        }
    }
    columns.into_iter().map(|c| Curve::new(*grid, c)).collect()
}

/// Empirical intention-to-treat curves between two instrument levels:
/// per-arm mean cumulative counts of the treatment (`f`) and outcome (`h`)
/// processes, differenced `level_hi` minus `level_lo`.
pub fn itt_curves(
    data: &Dataset,
    grid: &TimeGrid,
    level_hi: u32,
    level_lo: u32,
) -> Result<(Curve, Curve)> {
    let hi: Vec<&Trial> = data.trials_at(level_hi).collect();
    let lo: Vec<&Trial> = data.trials_at(level_lo).collect();
    itt_from_trials(&hi, &lo, grid, level_hi, level_lo)
}

pub(crate) fn itt_from_trials(
    hi: &[&Trial],
    lo: &[&Trial],
    grid: &TimeGrid,
    level_hi: u32,
    level_lo: u32,
) -> Result<(Curve, Curve)> {
    if hi.is_empty() {
        return Err(Error::MissingLevel(level_hi));
    }
    if lo.is_empty() {
        return Err(Error::MissingLevel(level_lo));
    }
    let n_hi = step_curve(hi.iter().map(|t| &t.n_events), grid)?;
    let n_lo = step_curve(lo.iter().map(|t| &t.n_events), grid)?;
    let y_hi = step_curve(hi.iter().map(|t| &t.y_events), grid)?;
    let y_lo = step_curve(lo.iter().map(|t| &t.y_events), grid)?;
    Ok((n_hi.minus(&n_lo)?, y_hi.minus(&y_lo)?))
}

/// Solves `min_c ||y - sum_j c_j col_j||^2 + eta ||c||^2` and reports a
/// condition diagnostic of the penalized normal matrix.
fn ridge_solve(columns: &[Vec<f64>], y: &[f64], eta: f64) -> Result<(Vec<f64>, f64)> {
    let j_count = columns.len();
    let mut normal = vec![0.0; j_count * j_count];
    for a in 0..j_count {
        for b in 0..=a {
            let dot: f64 = columns[a].iter().zip(&columns[b]).map(|(x, y)| x * y).sum();
            normal[a * j_count + b] = dot;
            normal[b * j_count + a] = dot;
        }
    }
    for d in 0..j_count {
        normal[d * j_count + d] += eta;
    }
    let chol = Cholesky::factor(&normal, j_count).ok_or(Error::IllPosed)?;
    let mut rhs: Vec<f64> = columns
        .iter()
        .map(|col| col.iter().zip(y).map(|(c, v)| c * v).sum())
        .collect();
    chol.solve_in_place(&mut rhs);
    let condition = spd_condition_estimate(&normal, &chol);
    Ok((rhs, condition))
}

/// A fitted basis expansion of the causal effect rate.
#[derive(Debug, Clone)]
pub struct AcerFit {
    pub beta: Vec<f64>,
    pub basis: BasisSpec,
    pub eta: f64,
    /// Reconstructed effect-rate curve `sum_j psi_j(delta) beta_j` on the
    /// fitting grid, zero outside the basis support.
    pub acer: Curve,
    pub design_condition: f64,
}

fn reconstruct(basis: &[Curve], beta: &[f64], grid: &TimeGrid) -> Curve {
    let mut values = vec![0.0; grid.len()];
    for (psi, b) in basis.iter().zip(beta) {
        for (v, p) in values.iter_mut().zip(psi.values()) {
            *v += p * b;
        }
    }
    Curve::new(*grid, values).expect("finite combination of basis curves")
}

/// Penalized deconvolution fit of the effect rate from ITT curves.
///
/// The design column for basis function `psi_j` is `(psi_j * f_hat)`, so the
/// fitted coefficients satisfy `h_hat ~ -sum_j (psi_j * f_hat) beta_j` and
/// the reconstructed curve targets the effect rate itself.
pub fn fit_acer(f_hat: &Curve, h_hat: &Curve, spec: &BasisSpec, eta: f64) -> Result<AcerFit> {
    if f_hat.grid() != h_hat.grid() {
        return Err(Error::GridMismatch);
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "penalty must be >= 0, got {eta}"
        )));
    }
    let grid = f_hat.grid();
    let basis = bspline_basis(spec, &grid)?;
    let sqrt_dt = grid.dt().sqrt();
    let columns: Vec<Vec<f64>> = basis
        .iter()
        .map(|psi| {
            convolve(psi, f_hat)
                .map(|c| c.values().iter().map(|v| v * sqrt_dt).collect::<Vec<f64>>())
        })
        .collect::<Result<_>>()?;
    let target: Vec<f64> = h_hat.values().iter().map(|v| -v * sqrt_dt).collect();
    let (beta, design_condition) = ridge_solve(&columns, &target, eta)?;
    let acer = reconstruct(&basis, &beta, &grid);
    Ok(AcerFit {
        beta,
        basis: *spec,
        eta,
        acer,
        design_condition,
    })
}

/// Everything needed to run the fixed fitting pipeline on a dataset.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub grid: TimeGrid,
    pub spec: BasisSpec,
    pub eta: f64,
    pub level_hi: u32,
    pub level_lo: u32,
}

impl FitConfig {
    pub fn new(grid: TimeGrid, spec: BasisSpec, eta: f64) -> Self {
        Self {
            grid,
            spec,
            eta,
            level_hi: 1,
            level_lo: 0,
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<AcerFit> {
        let (f_hat, h_hat) = itt_curves(data, &self.grid, self.level_hi, self.level_lo)?;
        fit_acer(&f_hat, &h_hat, &self.spec, self.eta)
    }
}

/// Selects a basis by k-fold cross-validation, stratified by instrument arm.
///
/// Both ITT curves are re-estimated inside every fold (they are
/// data-dependent), the candidate is scored by the validation-fold residual
/// of the convolution identity, and ties break toward fewer knots.
pub fn cross_validate(
    data: &Dataset,
    base: &FitConfig,
    candidates: &[BasisSpec],
    folds: usize,
    seed: u64,
) -> Result<BasisSpec> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no basis candidates".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs >= 2 folds, got {folds}"
        )));
    }
    let hi: Vec<&Trial> = data.trials_at(base.level_hi).collect();
    let lo: Vec<&Trial> = data.trials_at(base.level_lo).collect();
    if hi.is_empty() {
        return Err(Error::MissingLevel(base.level_hi));
    }
    if lo.is_empty() {
        return Err(Error::MissingLevel(base.level_lo));
    }
    for (level, arm) in [(base.level_hi, &hi), (base.level_lo, &lo)] {
        if arm.len() < folds {
            return Err(Error::Stratification(format!(
                "level {level} has {} trials, fewer than {folds} folds",
                arm.len()
            )));
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut hi_order: Vec<usize> = (0..hi.len()).collect();
    let mut lo_order: Vec<usize> = (0..lo.len()).collect();
    hi_order.shuffle(&mut rng);
    lo_order.shuffle(&mut rng);

    let grid = base.grid;
    let sqrt_dt = grid.dt().sqrt();
    let mut best: Option<(f64, BasisSpec)> = None;
    for cand in candidates {
        let basis = bspline_basis(cand, &grid)?;
        let mut total = 0.0;
        for fold in 0..folds {
            let in_fold = |pos: usize| pos % folds == fold;
            let hi_train: Vec<&Trial> = hi_order
                .iter()
                .enumerate()
                .filter(|(p, _)| !in_fold(*p))
                .map(|(_, i)| hi[*i])
                .collect();
            let hi_val: Vec<&Trial> = hi_order
                .iter()
                .enumerate()
                .filter(|(p, _)| in_fold(*p))
                .map(|(_, i)| hi[*i])
                .collect();
            let lo_train: Vec<&Trial> = lo_order
                .iter()
                .enumerate()
                .filter(|(p, _)| !in_fold(*p))
                .map(|(_, i)| lo[*i])
                .collect();
            let lo_val: Vec<&Trial> = lo_order
                .iter()
                .enumerate()
                .filter(|(p, _)| in_fold(*p))
                .map(|(_, i)| lo[*i])
                .collect();

            let (f_train, h_train) =
                itt_from_trials(&hi_train, &lo_train, &grid, base.level_hi, base.level_lo)?;
            let fit = fit_acer(&f_train, &h_train, cand, base.eta)?;
            let (f_val, h_val) =
                itt_from_trials(&hi_val, &lo_val, &grid, base.level_hi, base.level_lo)?;

            let mut residual: Vec<f64> = h_val.values().to_vec();
            for (psi, b) in basis.iter().zip(&fit.beta) {
                let col = convolve(psi, &f_val)?;
                for (r, c) in residual.iter_mut().zip(col.values()) {
                    *r += c * b;
                }
            }
            total += residual
                .iter()
                .map(|r| (r * sqrt_dt) * (r * sqrt_dt))
                .sum::<f64>();
        }
        let loss = total / folds as f64;
        let better = match &best {
            None => true,
            Some((best_loss, best_spec)) => {
                loss < *best_loss
                    || (loss == *best_loss
                        && cand.num_interior_knots < best_spec.num_interior_knots)
            }
        };
        if better {
            best = Some((loss, *cand));
        }
    }
    Ok(best.expect("candidates nonempty").1)
}

/// The scalar Wald ratio `(y1 - y0) / (n1 - n0)`.
pub fn wald_binary(mean_y1: f64, mean_y0: f64, mean_n1: f64, mean_n0: f64) -> Result<f64> {
    if mean_n1 == mean_n0 {
        return Err(Error::WeakInstrument);
    }
    Ok((mean_y1 - mean_y0) / (mean_n1 - mean_n0))
}

/// Observational comparator fitted without the instrument.
#[derive(Debug, Clone)]
pub struct ObservationalFit {
    pub beta: Vec<f64>,
    /// Coefficient on the linear-in-t baseline term.
    pub intercept: f64,
    pub basis: BasisSpec,
    pub eta: f64,
    /// Reconstructed event-response curve `g`.
    pub g_hat: Curve,
    pub design_condition: f64,
}

/// Fits the no-confounding working model `h'(t) = mu t + (g * f')(t)` on
/// pooled mean counts over all trials (no instrument split). Note the sign:
/// here `g` enters positively.
pub fn fit_observational(
    data: &Dataset,
    grid: &TimeGrid,
    spec: &BasisSpec,
    eta: f64,
) -> Result<ObservationalFit> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "penalty must be >= 0, got {eta}"
        )));
    }
    let f_pooled = step_curve(data.trials().iter().map(|t| &t.n_events), grid)?;
    let h_pooled = step_curve(data.trials().iter().map(|t| &t.y_events), grid)?;
    let basis = bspline_basis(spec, grid)?;
    let sqrt_dt = grid.dt().sqrt();
    let mut columns: Vec<Vec<f64>> = basis
        .iter()
        .map(|psi| {
            convolve(psi, &f_pooled)
                .map(|c| c.values().iter().map(|v| v * sqrt_dt).collect::<Vec<f64>>())
        })
        .collect::<Result<_>>()?;
    columns.push(grid.points().map(|t| t * sqrt_dt).collect());
    let target: Vec<f64> = h_pooled.values().iter().map(|v| v * sqrt_dt).collect();
    let (mut coeffs, design_condition) = ridge_solve(&columns, &target, eta)?;
    let intercept = coeffs.pop().expect("t column present");
    let g_hat = reconstruct(&basis, &coeffs, grid);
    Ok(ObservationalFit {
        beta: coeffs,
        intercept,
        basis: *spec,
        eta,
        g_hat,
        design_condition,
    })
}

/// JSON export of a fit: coefficients, knots, penalty, support, grid, and
/// the reconstructed curve.
pub fn fit_to_json(fit: &AcerFit) -> serde_json::Value {
    json!({
        "beta": fit.beta,
        "knots": fit.basis.knot_vector(),
        "eta": fit.eta,
        "support": [0.0, fit.basis.support],
        "grid": fit.acer.grid(),
        "acer": fit.acer.values(),
        "design_condition": fit.design_condition,
    })
}

/// CSV export `delta,<name>` of a curve at full precision.
pub fn write_curve_csv<W: std::io::Write>(curve: &Curve, name: &str, out: &mut W) -> Result<()> {
    writeln!(out, "delta,{name}")?;
    for (k, t) in curve.grid().points().enumerate() {
        writeln!(out, "{:.16e},{:.16e}", t, curve.values()[k])?;
    }
    Ok(())
}
