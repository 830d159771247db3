//! Minimal dense symmetric linear algebra: Cholesky factorization, solves,
//! and a condition-number estimate. Matrices are row-major `Vec<f64>`.

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Returns `None` if a pivot is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place via forward/backward substitution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * b[k];
            }
            b[i] = sum / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in (i + 1)..n {
                sum -= self.l[k * n + i] * b[k];
            }
            b[i] = sum / self.l[i * n + i];
        }
    }

    /// `out = L x`, used to turn i.i.d. normals into correlated draws.
    pub fn lower_matvec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        assert_eq!(out.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i + 1];
            let mut acc = 0.0;
            for (lik, xk) in row.iter().zip(&x[..=i]) {
                acc += lik * xk;
            }
            out[i] = acc;
        }
    }
}

pub(crate) fn symmetric_matvec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += a[i * n + j] * x[j];
        }
        out[i] = acc;
    }
}

/// Two-sided power-iteration estimate of the spectral condition number of a
/// symmetric positive-definite matrix with a known Cholesky factor.
pub(crate) fn spd_condition_estimate(a: &[f64], chol: &Cholesky) -> f64 {
    let n = chol.n();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut lambda_max = 0.0;
    for _ in 0..50 {
        symmetric_matvec(a, n, &v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        lambda_max = norm;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    let mut u = vec![1.0 / (n as f64).sqrt(); n];
    let mut inv_lambda_min = 0.0;
    for _ in 0..50 {
        chol.solve_in_place(&mut u);
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        inv_lambda_min = norm;
        for x in &mut u {
            *x /= norm;
        }
    }
    lambda_max * inv_lambda_min
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_and_solve_roundtrip() {
        // A = M M^T for a fixed nonsingular M, so A is SPD.
        let m = [2.0, 0.0, 0.0, -1.0, 1.5, 0.0, 0.3, 0.4, 0.9];
        let n = 3;
        let mut a = vec![0.0; 9];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    a[i * n + j] += m[i * n + k] * m[j * n + k];
                }
            }
        }
        let chol = Cholesky::factor(&a, n).expect("SPD");
        let x_true = [1.0, -2.0, 0.5];
        let mut b = vec![0.0; n];
        symmetric_matvec(&a, n, &x_true, &mut b);
        chol.solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0]; // eigenvalues 3 and -1
        assert!(Cholesky::factor(&a, 2).is_none());
    }

    #[test]
    fn condition_of_identity_is_one() {
        let n = 4;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let chol = Cholesky::factor(&a, n).unwrap();
        let cond = spd_condition_estimate(&a, &chol);
        assert!((cond - 1.0).abs() < 1e-9);
    }

    #[test]
    fn condition_tracks_diagonal_spread() {
        let n = 3;
        let mut a = vec![0.0; n * n];
        a[0] = 100.0;
        a[4] = 10.0;
        a[8] = 0.01;
        let chol = Cholesky::factor(&a, n).unwrap();
        let cond = spd_condition_estimate(&a, &chol);
        assert!((cond - 10000.0).abs() / 10000.0 < 1e-6);
    }
}
