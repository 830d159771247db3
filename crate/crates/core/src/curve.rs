//! Uniform time grids and sampled curves, with the quadrature primitives
//! (convolution, integration) used throughout the estimation pipeline.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform grid `t0 + k*dt`, `k = 0..n-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !t0.is_finite() || !dt.is_finite() {
            return Err(Error::InvalidInput("grid parameters must be finite".into()));
        }
        if dt <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "grid step must be positive, got {dt}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points, got {n}"
            )));
        }
        Ok(Self { t0, dt, n })
    }

    /// Smallest grid starting at `t0` with step `dt` whose last point reaches
    /// at least `t_end`.
    pub fn covering(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > t0) {
            return Err(Error::InvalidInput("grid end must exceed start".into()));
        }
        let span = (t_end - t0) / dt;
        let n = (span - 1e-9).ceil() as usize + 1;
        Self::new(t0, dt, n.max(2))
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.point(self.n - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.point(k))
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 - 1e-9 * self.dt && t <= self.t_end() + 1e-9 * self.dt
    }

    /// Index of the grid point closest to `t`, if `t` lies on the lattice to
    /// within a relative tolerance.
    pub fn lattice_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let k = x.round();
        if k < 0.0 || k as usize >= self.n {
            return None;
        }
        if (x - k).abs() < 1e-6 {
            Some(k as usize)
        } else {
            None
        }
    }
}

/// A real-valued function sampled on a [`TimeGrid`]. Immutable: operations
/// return new curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "curve length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "curve holds non-finite value {bad}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().map(&f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation between grid points; constant extrapolation by
    /// the edge values outside the grid range.
    pub fn interp(&self, t: f64) -> f64 {
        interp_slice(&self.grid, &self.values, t)
    }

    pub fn scaled(&self, c: f64) -> Curve {
        Curve {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn plus(&self, other: &Curve) -> Result<Curve> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn minus(&self, other: &Curve) -> Result<Curve> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Curve, f: impl Fn(f64, f64) -> f64) -> Result<Curve> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Curve::new(self.grid, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Linear interpolation of `values` sampled on `grid`, clamped at the edges.
pub(crate) fn interp_slice(grid: &TimeGrid, values: &[f64], x: f64) -> f64 {
    let pos = (x - grid.t0()) / grid.dt();
    if pos <= 0.0 {
        return values[0];
    }
    let last = values.len() - 1;
    if pos >= last as f64 {
        return values[last];
    }
    let k = pos.floor() as usize;
    let w = pos - k as f64;
    values[k] * (1.0 - w) + values[k + 1] * w
}

/// Causal Riemann-sum convolution `c(t_k) = dt * sum_{j<=k} a(t_j) b(t_k - t_j)`.
///
/// Left-endpoint quadrature keeps the output at `t_k` a function of inputs up
/// to `t_k` only. Both curves must share a grid starting at 0.
pub fn convolve(a: &Curve, b: &Curve) -> Result<Curve> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    if a.grid.t0() != 0.0 {
        return Err(Error::InvalidInput(
            "convolution requires a grid starting at t0 = 0".into(),
        ));
    }
    let n = a.grid.len();
    let dt = a.grid.dt();
    let av = a.values();
    let bv = b.values();
    let mut out = vec![0.0; n];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..=k {
            acc += av[j] * bv[k - j];
        }
        *slot = acc * dt;
    }
    Curve::new(a.grid, out)
}

/// Trapezoid-rule integral of `c` over `[lo, hi]`, with linear interpolation
/// at off-grid bounds.
pub fn integrate(c: &Curve, lo: f64, hi: f64) -> Result<f64> {
    let grid = c.grid();
    if lo > hi {
        return Err(Error::InvalidInput(format!(
            "integration bounds out of order: {lo} > {hi}"
        )));
    }
    if !grid.contains(lo) || !grid.contains(hi) {
        return Err(Error::InvalidInput(format!(
            "integration bounds [{lo}, {hi}] outside grid range [{}, {}]",
            grid.t0(),
            grid.t_end()
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let dt = grid.dt();
    let x_lo = ((lo - grid.t0()) / dt).max(0.0);
    let x_hi = ((hi - grid.t0()) / dt).min((grid.len() - 1) as f64);
    let k_lo = x_lo.ceil() as usize;
    let k_hi = x_hi.floor() as usize;

    // Both bounds inside one cell.
    if k_lo > k_hi {
        let mid = (c.interp(lo) + c.interp(hi)) / 2.0;
        return Ok(mid * (hi - lo));
    }

    let v = c.values();
    let mut total = 0.0;
    // Partial cell before the first full grid point.
    if x_lo < k_lo as f64 {
        let left = c.interp(lo);
        total += (left + v[k_lo]) / 2.0 * (grid.point(k_lo) - lo);
    }
    // Full interior cells.
    for k in k_lo..k_hi {
        total += (v[k] + v[k + 1]) / 2.0 * dt;
    }
    // Partial cell after the last full grid point.
    if x_hi > k_hi as f64 {
        let right = c.interp(hi);
        total += (v[k_hi] + right) / 2.0 * (hi - grid.point(k_hi));
    }
    Ok(total)
}
