//! Fourier-domain machinery: discrete transforms scaled to approximate the
//! continuous transform, spectral-division deconvolution, and the
//! self-exciting-outcome closed form.
//!
//! Curves are treated as identically zero outside their grid, which must
//! start at `t0 = 0`; transforms zero-pad by an integer factor to suppress
//! circular wraparound.

use num_complex::Complex64;

use crate::curve::{Curve, TimeGrid};
use crate::error::{Error, Result};

/// Discrete spectrum on a symmetric frequency axis (cycles per second).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    freqs: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Spectrum {
    pub fn new(freqs: Vec<f64>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if freqs.len() != re.len() || freqs.len() != im.len() {
            return Err(Error::InvalidInput(
                "spectrum component lengths differ".into(),
            ));
        }
        if freqs.len() < 2 {
            return Err(Error::InvalidInput("spectrum needs at least 2 bins".into()));
        }
        Ok(Self { freqs, re, im })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn bin(&self, k: usize) -> Complex64 {
        Complex64::new(self.re[k], self.im[k])
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        self.bin(k).norm()
    }

    /// Frequency resolution of the first bin step.
    fn dnu(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    fn max_magnitude(&self) -> f64 {
        (0..self.len())
            .map(|k| self.magnitude(k))
            .fold(0.0, f64::max)
    }

    fn check_hermitian(&self) -> Result<()> {
        let n = self.len();
        let scale = self.max_magnitude().max(1e-300);
        for k in 0..n {
            let mirror = (n - k) % n;
            let a = self.bin(k);
            let b = self.bin(mirror).conj();
            if (a - b).norm() > 1e-9 * scale {
                return Err(Error::NonHermitian);
            }
        }
        Ok(())
    }
}

/// Frequency of bin `k` in an `n`-point transform with resolution `dnu`,
/// using the signed convention (bins past Nyquist are negative).
fn bin_freq(k: usize, n: usize, dnu: f64) -> f64 {
    if 2 * k <= n {
        k as f64 * dnu
    } else {
        (k as f64 - n as f64) * dnu
    }
}

/// Discrete transform of `c` zero-padded to `pad_factor * n` samples and
/// scaled by `dt`, approximating the continuous transform.
pub fn dft(c: &Curve, pad_factor: usize) -> Result<Spectrum> {
    if pad_factor < 1 {
        return Err(Error::InvalidInput("pad_factor must be >= 1".into()));
    }
    if c.grid().t0() != 0.0 {
        return Err(Error::InvalidInput(
            "transforms require a grid starting at t0 = 0".into(),
        ));
    }
    let n = c.grid().len();
    let n_pad = n * pad_factor;
    let dt = c.grid().dt();
    let dnu = 1.0 / (n_pad as f64 * dt);
    let values = c.values();

    let mut freqs = Vec::with_capacity(n_pad);
    let mut re = Vec::with_capacity(n_pad);
    let mut im = Vec::with_capacity(n_pad);
    for k in 0..n_pad {
        let theta = -2.0 * std::f64::consts::PI * k as f64 / n_pad as f64;
        let w = Complex64::from_polar(1.0, theta);
        let mut z = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for v in values {
            acc += z * v;
            z *= w;
        }
        acc *= dt;
        freqs.push(bin_freq(k, n_pad, dnu));
        re.push(acc.re);
        im.push(acc.im);
    }
    Spectrum::new(freqs, re, im)
}

/// Inverse transform of a Hermitian-symmetric spectrum back to a real curve
/// on `[0, (n-1) dt]`.
pub fn idft(s: &Spectrum) -> Result<Curve> {
    s.check_hermitian()?;
    let n = s.len();
    let dnu = s.dnu();
    if !(dnu > 0.0) {
        return Err(Error::InvalidInput(
            "spectrum frequency axis is not increasing".into(),
        ));
    }
    let dt = 1.0 / (n as f64 * dnu);
    let mut values = Vec::with_capacity(n);
    for j in 0..n {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let w = Complex64::from_polar(1.0, theta);
        let mut z = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += z * s.bin(k);
            z *= w;
        }
        values.push(acc.re * dnu);
    }
    Curve::new(TimeGrid::new(0.0, dt, n)?, values)
}

/// Within-window first difference, divided by the step so it samples the
/// derivative: `d_0 = x_0 / dt`, `d_j = (x_j - x_{j-1}) / dt`.
fn first_difference(c: &Curve) -> Curve {
    let v = c.values();
    let inv_dt = 1.0 / c.grid().dt();
    let mut d = Vec::with_capacity(v.len());
    d.push(v[0] * inv_dt);
    for j in 1..v.len() {
        d.push((v[j] - v[j - 1]) * inv_dt);
    }
    Curve::new(c.grid(), d).expect("difference of finite values")
}

/// Recovers the effect rate from ITT curves by spectral division
/// `G = (dft h) / (dft f)`, returning `-idft(G)` truncated to the original
/// window with the zero-lag sample forced to zero.
///
/// The ratio is formed from the first differences of the two curves: in the
/// continuum `(dft h')/(dft f') = (dft h)/(dft f)` identically, and on a
/// finite window the differences decay even though the cumulative counting
/// curves plateau, so the division is not corrupted by the truncation at
/// the window end.
///
/// Bins where the (differenced) `|dft f|` falls below `eps` times its
/// maximum are zeroed (spectral-cutoff regularization) since division there
/// only amplifies estimation noise.
pub fn deconvolve_spectral(
    f_hat: &Curve,
    h_hat: &Curve,
    eps: f64,
    pad_factor: usize,
) -> Result<Curve> {
    if f_hat.grid() != h_hat.grid() {
        return Err(Error::GridMismatch);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "spectral floor must be positive, got {eps}"
        )));
    }
    let f_spec = dft(&first_difference(f_hat), pad_factor)?;
    let h_spec = dft(&first_difference(h_hat), pad_factor)?;
    let f_max = f_spec.max_magnitude();
    if f_max == 0.0 {
        return Err(Error::NoInstrumentEffect);
    }
    let floor = eps * f_max;
    let n_pad = f_spec.len();
    let mut re = Vec::with_capacity(n_pad);
    let mut im = Vec::with_capacity(n_pad);
    for k in 0..n_pad {
        let fk = f_spec.bin(k);
        let g = if fk.norm() >= floor {
            h_spec.bin(k) / fk
        } else {
            Complex64::new(0.0, 0.0)
        };
        re.push(g.re);
        im.push(g.im);
    }
    let g_time = idft(&Spectrum::new(f_spec.freqs().to_vec(), re, im)?)?;
    let n = f_hat.grid().len();
    let mut values: Vec<f64> = g_time.values()[..n].iter().map(|v| -v).collect();
    // No effect at or before zero lag.
    values[0] = 0.0;
    Curve::new(f_hat.grid(), values)
}

/// Effect rate implied by a linear self-exciting outcome model with event
/// kernel `g` and self-excitation kernel `omega`:
/// `-idft( dft(g) / (1 + dft(omega)) )`.
///
/// With `omega == 0` this reduces to `-g` exactly.
pub fn model1_closed_form(g: &Curve, omega: &Curve, pad_factor: usize) -> Result<Curve> {
    if g.grid() != omega.grid() {
        return Err(Error::GridMismatch);
    }
    let g_spec = dft(g, pad_factor)?;
    let w_spec = dft(omega, pad_factor)?;
    let n_pad = g_spec.len();
    let mut re = Vec::with_capacity(n_pad);
    let mut im = Vec::with_capacity(n_pad);
    for k in 0..n_pad {
        let denom = Complex64::new(1.0, 0.0) + w_spec.bin(k);
        if denom.norm() < 1e-6 {
            return Err(Error::ResonantSelfExcitation);
        }
        let v = g_spec.bin(k) / denom;
        re.push(v.re);
        im.push(v.im);
    }
    let acer_time = idft(&Spectrum::new(g_spec.freqs().to_vec(), re, im)?)?;
    let n = g.grid().len();
    let values: Vec<f64> = acer_time.values()[..n].iter().map(|v| -v).collect();
    Curve::new(g.grid(), values)
}

/// CSV export `freq,re,im` at full precision.
pub fn write_spectrum_csv<W: std::io::Write>(s: &Spectrum, out: &mut W) -> Result<()> {
    writeln!(out, "freq,re,im")?;
    for k in 0..s.len() {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e}",
            s.freqs()[k],
            s.re()[k],
            s.im()[k]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::convolve;
    use crate::simulate::alpha_fn;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn dft_of_zero_is_zero() {
        let g = TimeGrid::new(0.0, 0.01, 128).unwrap();
        let s = dft(&Curve::zeros(g), 2).unwrap();
        for k in 0..s.len() {
            assert_eq!(s.magnitude(k), 0.0);
        }
    }

    #[test]
    fn dft_of_indicator_matches_analytic_transform() {
        // 600 samples of height 1 at step 0.005 represent the indicator of
        // [0, 3] under the left-endpoint quadrature the transform uses.
        let g = TimeGrid::new(0.0, 0.005, 600).unwrap();
        let c = Curve::constant(g, 1.0).unwrap();
        let s = dft(&c, 4).unwrap();
        assert!(
            (s.magnitude(0) - 3.0).abs() < 1e-6,
            "dc bin {}",
            s.magnitude(0)
        );
        for k in 1..50 {
            let nu = s.freqs()[k];
            let envelope = ((3.0 * PI * nu).sin() / (PI * nu)).abs();
            assert!(
                (s.magnitude(k) - envelope).abs() < 1e-3 * envelope.max(1e-3),
                "bin {k}: {} vs {envelope}",
                s.magnitude(k)
            );
        }
    }

    #[test]
    fn parseval_identity() {
        let g = TimeGrid::new(0.0, 0.02, 150).unwrap();
        let c = Curve::from_fn(g, |t| (2.0 * t).sin() + 0.3 * t * t).unwrap();
        let s = dft(&c, 3).unwrap();
        let time_energy: f64 = c.values().iter().map(|v| v * v).sum::<f64>() * g.dt();
        let dnu = s.freqs()[1] - s.freqs()[0];
        let freq_energy: f64 = (0..s.len()).map(|k| s.magnitude(k).powi(2)).sum::<f64>() * dnu;
        assert!(
            (time_energy - freq_energy).abs() < 1e-9 * time_energy,
            "{time_energy} vs {freq_energy}"
        );
    }

    #[test]
    fn idft_inverts_dft() {
        let g = TimeGrid::new(0.0, 0.01, 101).unwrap();
        let c = Curve::from_fn(g, |t| (t - 0.4).tanh()).unwrap();
        for pad in [1usize, 3] {
            let back = idft(&dft(&c, pad).unwrap()).unwrap();
            for (orig, got) in c.values().iter().zip(back.values()) {
                assert!((orig - got).abs() < 1e-10);
            }
            // Padding region holds only zeros.
            for v in &back.values()[c.grid().len()..] {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn idft_of_zero_spectrum_is_zero() {
        let n = 64;
        let freqs: Vec<f64> = (0..n).map(|k| bin_freq(k, n, 0.5)).collect();
        let s = Spectrum::new(freqs, vec![0.0; n], vec![0.0; n]).unwrap();
        let c = idft(&s).unwrap();
        assert!(c.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn idft_shifted_delta_concentrates_at_tau() {
        // Phase ramp e^{-i 2 pi nu tau0} is the transform of a delta at tau0.
        let n = 200;
        let dt = 0.01;
        let dnu = 1.0 / (n as f64 * dt);
        let tau0 = 0.75;
        let mut freqs = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        for k in 0..n {
            let nu = bin_freq(k, n, dnu);
            freqs.push(nu);
            re.push((2.0 * PI * nu * tau0).cos());
            im.push(-(2.0 * PI * nu * tau0).sin());
        }
        let c = idft(&Spectrum::new(freqs, re, im).unwrap()).unwrap();
        let spike = c.grid().lattice_index(tau0).unwrap();
        assert!((c.values()[spike] - 1.0 / dt).abs() < 1e-6);
        for (k, v) in c.values().iter().enumerate() {
            if k != spike {
                assert!(v.abs() < 1e-6, "leakage {v} at sample {k}");
            }
        }
    }

    #[test]
    fn idft_rejects_non_hermitian() {
        let n = 16;
        let freqs: Vec<f64> = (0..n).map(|k| bin_freq(k, n, 1.0)).collect();
        let mut im = vec![0.0; n];
        im[1] = 1.0; // no conjugate partner at the mirrored bin
        let s = Spectrum::new(freqs, vec![0.0; n], im).unwrap();
        assert!(matches!(idft(&s), Err(Error::NonHermitian)));
    }

    /// Smooth nonnegative curve rising from 0 to a plateau, with the slope
    /// dying out well before the window end (like a counting-mean curve
    /// whose instrument effect vanishes in finite time).
    fn plateau_curve(g: TimeGrid, a: f64) -> Curve {
        Curve::from_fn(g, move |t| 0.5 * (1.0 - (-a * t).exp() * (1.0 + a * t))).unwrap()
    }

    #[test]
    fn deconvolve_round_trip_recovers_kernel() {
        // h = -(g0 * f) encodes an effect rate equal to g0 itself.
        let g = TimeGrid::new(0.0, 0.005, 601).unwrap();
        let g0 = Curve::from_fn(g, |t| alpha_fn(t, 8.0, 1.0)).unwrap();
        let f = plateau_curve(g, 10.0);
        let h = convolve(&g0, &f).unwrap().scaled(-1.0);
        let rec = deconvolve_spectral(&f, &h, 1e-6, 4).unwrap();
        let r = crate::oracle::criterion_r(&rec, &g0, 0.0, 1.0).unwrap();
        assert!(r < 1e-2, "spectral round-trip r = {r}");
    }

    #[test]
    fn deconvolve_agrees_with_ridge_fit_on_forward_model() {
        // Both inversion routes see the same noiseless forward model with
        // the truth inside the spline span; at their minimal stable
        // regularization they must agree.
        use crate::estimate::{bspline_basis, fit_acer, BasisSpec};
        let g = TimeGrid::new(0.0, 0.005, 601).unwrap();
        let spec = BasisSpec::default();
        let basis = bspline_basis(&spec, &g).unwrap();
        let beta0: Vec<f64> = (0..spec.num_basis())
            .map(|j| -1.0 + 0.3 * (j as f64).sin())
            .collect();
        let f = plateau_curve(g, 10.0);
        let mut h = Curve::zeros(g);
        for (psi, b) in basis.iter().zip(&beta0) {
            h = h.plus(&convolve(psi, &f).unwrap().scaled(-b)).unwrap();
        }
        let fit = fit_acer(&f, &h, &spec, 0.0).unwrap();
        let rec = deconvolve_spectral(&f, &h, 1e-6, 4).unwrap();
        let r = crate::oracle::criterion_r(&fit.acer, &rec, 0.0, 1.0).unwrap();
        assert!(r < 1e-2, "route disagreement r = {r}");
    }

    #[test]
    fn deconvolve_null_outcome_gives_null_effect() {
        let g = TimeGrid::new(0.0, 0.005, 601).unwrap();
        let f = Curve::from_fn(g, |t| alpha_fn(t, 5.0, 1.0)).unwrap();
        let rec = deconvolve_spectral(&f, &Curve::zeros(g), 1e-6, 4).unwrap();
        assert!(rec.max_abs() < 1e-12);
    }

    #[test]
    fn deconvolve_step_and_ramp() {
        // f a unit step and h(t) = -t: the effect rate integrates to the
        // ramp, so it is 1 on the interior.
        let g = TimeGrid::new(0.0, 0.01, 301).unwrap();
        let f = Curve::constant(g, 1.0).unwrap();
        let h = Curve::from_fn(g, |t| -t).unwrap();
        let rec = deconvolve_spectral(&f, &h, 1e-6, 4).unwrap();
        let mut max_dev: f64 = 0.0;
        for (k, t) in g.points().enumerate() {
            if t >= 0.3 && t <= 2.5 {
                max_dev = max_dev.max((rec.values()[k] - 1.0).abs());
            }
        }
        assert!(max_dev < 0.05, "interior deviation from 1 was {max_dev}");
    }

    #[test]
    fn deconvolve_errors_on_null_instrument_effect() {
        let g = TimeGrid::new(0.0, 0.01, 101).unwrap();
        let f = Curve::zeros(g);
        let h = Curve::from_fn(g, |t| t).unwrap();
        assert!(matches!(
            deconvolve_spectral(&f, &h, 1e-6, 4),
            Err(Error::NoInstrumentEffect)
        ));
    }

    #[test]
    fn deconvolve_is_linear_in_h() {
        let g = TimeGrid::new(0.0, 0.005, 301).unwrap();
        let f = Curve::from_fn(g, |t| alpha_fn(t, 5.0, 1.0)).unwrap();
        let h = Curve::from_fn(g, |t| -(t * 1.7).min(1.0)).unwrap();
        let one = deconvolve_spectral(&f, &h, 1e-3, 4).unwrap();
        let three = deconvolve_spectral(&f, &h.scaled(3.0), 1e-3, 4).unwrap();
        for (a, b) in one.values().iter().zip(three.values()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn deconvolve_output_vanishes_at_zero_lag() {
        let g = TimeGrid::new(0.0, 0.005, 301).unwrap();
        let f = Curve::from_fn(g, |t| alpha_fn(t, 5.0, 1.0)).unwrap();
        let h = convolve(&f, &f).unwrap().scaled(-0.5);
        let rec = deconvolve_spectral(&f, &h, 1e-6, 4).unwrap();
        assert_eq!(rec.values()[0], 0.0);
    }

    #[test]
    fn model1_reduces_to_minus_g_without_self_excitation() {
        let g = TimeGrid::new(0.0, 0.005, 601).unwrap();
        let kernel = Curve::from_fn(g, |t| alpha_fn(t, 8.0, 1.0)).unwrap();
        let acer = model1_closed_form(&kernel, &Curve::zeros(g), 4).unwrap();
        for (a, k) in acer.values().iter().zip(kernel.values()) {
            assert!((a + k).abs() < 1e-9);
        }
    }

    #[test]
    fn model1_zero_kernel_gives_zero_effect() {
        let g = TimeGrid::new(0.0, 0.005, 301).unwrap();
        let omega = Curve::from_fn(g, |t| 0.5 * alpha_fn(t, 8.0, 1.0)).unwrap();
        let acer = model1_closed_form(&Curve::zeros(g), &omega, 4).unwrap();
        assert!(acer.max_abs() < 1e-12);
    }

    #[test]
    fn model1_satisfies_time_domain_fixed_point() {
        let g = TimeGrid::new(0.0, 0.005, 601).unwrap();
        let kernel = Curve::from_fn(g, |t| alpha_fn(t, 8.0, 1.0)).unwrap();
        let omega = kernel.scaled(0.5);
        let acer = model1_closed_form(&kernel, &omega, 4).unwrap();

        // Independent route: iterate acer <- -g - omega * acer to a fixed
        // point (the iteration contracts since omega has mass 1/2).
        let mut iterate = kernel.scaled(-1.0);
        for _ in 0..200 {
            let conv = convolve(&omega, &iterate).unwrap();
            iterate = kernel.scaled(-1.0).minus(&conv).unwrap();
        }
        let mut max_dev: f64 = 0.0;
        for (a, b) in acer.values().iter().zip(iterate.values()) {
            max_dev = max_dev.max((a - b).abs());
        }
        assert!(max_dev < 1e-4, "fixed-point deviation {max_dev}");

        // And the residual of the fixed-point equation itself.
        let residual = acer
            .plus(&kernel)
            .unwrap()
            .plus(&convolve(&omega, &acer).unwrap())
            .unwrap();
        assert!(residual.max_abs() < 1e-4, "residual {}", residual.max_abs());
    }

    #[test]
    fn model1_detects_resonance() {
        let g = TimeGrid::new(0.0, 0.005, 601).unwrap();
        let kernel = Curve::from_fn(g, |t| alpha_fn(t, 8.0, 1.0)).unwrap();
        // Self-excitation whose discrete mass is exactly -1 makes
        // 1 + dft(omega) vanish at nu = 0.
        let mass: f64 = kernel.values().iter().sum::<f64>() * g.dt();
        let omega = kernel.scaled(-1.0 / mass);
        assert!(matches!(
            model1_closed_form(&kernel, &omega, 4),
            Err(Error::ResonantSelfExcitation)
        ));
    }
}
