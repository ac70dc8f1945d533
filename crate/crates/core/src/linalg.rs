//! Dense matrices and the orthogonal-decomposition least-squares solver
//! shared by the spherical-harmonic and cap-harmonic fits.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    /// `selfᵀ · diag(w) · self`.
    pub fn weighted_gram(&self, weights: &[T]) -> Result<Matrix<T>> {
        if weights.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: weights.len(),
            });
        }
        let n = self.cols;
        let mut g = Matrix::zeros(n, n);
        for (i, &w) in weights.iter().enumerate() {
            let r = self.row(i);
            for a in 0..n {
                let wa = w * r[a];
                for b in a..n {
                    let v = g.get(a, b) + wa * r[b];
                    g.set(a, b, v);
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                let v = g.get(b, a);
                g.set(a, b, v);
            }
        }
        Ok(g)
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix<T> {
        Matrix::from_fn(self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }
}

/// Options for [`LeastSquares`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Tikhonov term `λ ≥ 0` added as `λ‖c‖²` to the objective.
    pub ridge: f64,
    /// Fits whose condition estimate exceeds this bound are rejected.
    pub max_condition: f64,
    /// With `ridge = 0`, a basis over the bound is refactored with the
    /// smallest ridge bringing its condition to half the bound instead of
    /// being rejected.
    pub auto_ridge: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            max_condition: 1e8,
            auto_ridge: false,
        }
    }
}

/// Householder QR factorization of a tall basis matrix, reusable for any
/// number of right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    rows: usize,
    data_rows: usize,
    cols: usize,
    // Column-major; the Householder vectors live on and below the diagonal.
    qr: Vec<T>,
    r_diag: Vec<T>,
    betas: Vec<T>,
    condition: f64,
    sigma_max: f64,
    ridge: f64,
}

impl<T: Real> LeastSquares<T> {
    pub fn new(basis: &Matrix<T>, options: FitOptions) -> Result<Self> {
        if options.auto_ridge && options.ridge == 0.0 {
            let plain = Self::factor(
                basis,
                FitOptions {
                    max_condition: f64::INFINITY,
                    ..options
                },
            )?;
            if plain.condition <= options.max_condition {
                return Ok(plain);
            }
            // augmented singular values are sqrt(sigma^2 + ridge)
            let floor = 2.0 * plain.sigma_max / options.max_condition;
            return Self::factor(
                basis,
                FitOptions {
                    ridge: floor * floor,
                    ..options
                },
            );
        }
        Self::factor(basis, options)
    }

    fn factor(basis: &Matrix<T>, options: FitOptions) -> Result<Self> {
        let (s, n) = (basis.rows(), basis.cols());
        if n == 0 {
            return Err(Error::Invalid("basis has no columns".into()));
        }
        if options.ridge < 0.0 || !options.ridge.is_finite() {
            return Err(Error::Invalid("ridge must be finite and >= 0".into()));
        }
        let ridge_rows = if options.ridge > 0.0 { n } else { 0 };
        if s + ridge_rows < n {
            return Err(Error::Underdetermined { rows: s, cols: n });
        }
        let m = s + ridge_rows;
        let mut qr = vec![T::zero(); m * n];
        for j in 0..n {
            let col = &mut qr[j * m..(j + 1) * m];
            for i in 0..s {
                col[i] = basis.get(i, j);
            }
            if ridge_rows > 0 {
                col[s + j] = T::lit(options.ridge.sqrt());
            }
        }
        let mut r_diag = vec![T::zero(); n];
        let mut betas = vec![T::zero(); n];
        for j in 0..n {
            let (head, tail) = qr.split_at_mut((j + 1) * m);
            let v = &mut head[j * m + j..(j + 1) * m];
            let norm = v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
            if norm == T::zero() {
                r_diag[j] = T::zero();
                betas[j] = T::zero();
                continue;
            }
            let alpha = if v[0] > T::zero() { -norm } else { norm };
            v[0] -= alpha;
            let vtv = v.iter().fold(T::zero(), |a, &x| a + x * x);
            let beta = if vtv > T::zero() {
                T::lit(2.0) / vtv
            } else {
                T::zero()
            };
            r_diag[j] = alpha;
            betas[j] = beta;
            if beta == T::zero() {
                continue;
            }
            for c in 0..(n - j - 1) {
                let target = &mut tail[c * m + j..(c + 1) * m];
                let dot = v.iter().zip(target.iter()).fold(T::zero(), |a, (&x, &y)| a + x * y);
                let scale = beta * dot;
                for (t, &x) in target.iter_mut().zip(v.iter()) {
                    *t -= scale * x;
                }
            }
        }
        let mut ls = Self {
            rows: m,
            data_rows: s,
            cols: n,
            qr,
            r_diag,
            betas,
            condition: f64::INFINITY,
            sigma_max: 0.0,
            ridge: options.ridge,
        };
        (ls.condition, ls.sigma_max) = ls.estimate_condition();
        if !(ls.condition <= options.max_condition) {
            return Err(Error::RankDeficient {
                condition: ls.condition,
                bound: options.max_condition,
            });
        }
        Ok(ls)
    }

    pub fn rows(&self) -> usize {
        self.data_rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// 2-norm condition estimate of the basis (power and inverse iteration on `RᵀR`).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> T {
        if i == j {
            self.r_diag[i]
        } else {
            self.qr[j * self.rows + i]
        }
    }

    fn r_mul(&self, x: &[T]) -> Vec<T> {
        let n = self.cols;
        (0..n)
            .map(|i| (i..n).fold(T::zero(), |a, j| a + self.r(i, j) * x[j]))
            .collect()
    }

    fn rt_mul(&self, x: &[T]) -> Vec<T> {
        let n = self.cols;
        (0..n)
            .map(|j| (0..=j).fold(T::zero(), |a, i| a + self.r(i, j) * x[i]))
            .collect()
    }

    fn r_solve(&self, y: &mut [T]) {
        let n = self.cols;
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.r(i, j) * y[j];
            }
            y[i] = s / self.r_diag[i];
        }
    }

    fn rt_solve(&self, y: &mut [T]) {
        let n = self.cols;
        for j in 0..n {
            let mut s = y[j];
            for i in 0..j {
                s -= self.r(i, j) * y[i];
            }
            y[j] = s / self.r_diag[j];
        }
    }

    /// Largest singular value of the (augmented) basis.
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Ridge actually applied, including an automatically chosen one.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn estimate_condition(&self) -> (f64, f64) {
        let n = self.cols;
        if self.r_diag.iter().any(|&d| d == T::zero() || !d.is_finite()) {
            return (f64::INFINITY, 0.0);
        }
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i * 7919) % 13) as f64 / 13.0).collect();
        let normalize = |v: &mut Vec<f64>| {
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if s > 0.0 {
                v.iter_mut().for_each(|x| *x /= s);
            }
            s
        };
        let to_t = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let to_f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();

        let mut v = start.clone();
        normalize(&mut v);
        let mut lambda_max = 0.0;
        for _ in 0..60 {
            let w = to_f(&self.rt_mul(&self.r_mul(&to_t(&v))));
            let mut w = w;
            lambda_max = normalize(&mut w);
            v = w;
        }
        let mut v = start;
        normalize(&mut v);
        let mut inv_lambda_min = 0.0;
        for _ in 0..60 {
            let mut y = to_t(&v);
            self.rt_solve(&mut y);
            self.r_solve(&mut y);
            let mut w = to_f(&y);
            inv_lambda_min = normalize(&mut w);
            v = w;
        }
        let c = (lambda_max * inv_lambda_min).sqrt();
        if c.is_finite() {
            (c, lambda_max.sqrt())
        } else {
            (f64::INFINITY, lambda_max.sqrt())
        }
    }

    /// Coefficients minimizing `‖samples − basis·c‖₂` (plus the ridge term).
    pub fn solve(&self, samples: &[T]) -> Result<Vec<T>> {
        if samples.len() != self.data_rows {
            return Err(Error::DimensionMismatch {
                expected: self.data_rows,
                got: samples.len(),
            });
        }
        let m = self.rows;
        let mut b = vec![T::zero(); m];
        b[..self.data_rows].copy_from_slice(samples);
        for j in 0..self.cols {
            let beta = self.betas[j];
            if beta == T::zero() {
                continue;
            }
            let v = &self.qr[j * m + j..(j + 1) * m];
            let target = &mut b[j..];
            let dot = v.iter().zip(target.iter()).fold(T::zero(), |a, (&x, &y)| a + x * y);
            let scale = beta * dot;
            for (t, &x) in target.iter_mut().zip(v) {
                *t -= scale * x;
            }
        }
        let mut c = b[..self.cols].to_vec();
        self.r_solve(&mut c);
        Ok(c)
    }
}

/// One-shot least-squares fit of `samples ≈ basis · c`.
pub fn least_squares_fit<T: Real>(
    basis: &Matrix<T>,
    samples: &[T],
    options: FitOptions,
) -> Result<Vec<T>> {
    LeastSquares::new(basis, options)?.solve(samples)
}

/// Euclidean norm of `samples − basis · coeffs`.
pub fn residual_norm<T: Real>(basis: &Matrix<T>, coeffs: &[T], samples: &[T]) -> Result<T> {
    let fit = basis.matvec(coeffs)?;
    if samples.len() != fit.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.len(),
            got: samples.len(),
        });
    }
    Ok(fit
        .iter()
        .zip(samples)
        .fold(T::zero(), |a, (&f, &s)| a + (s - f) * (s - f))
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_basis_returns_samples() {
        let eye = Matrix::<f64>::identity(5);
        let f = vec![1.0, -2.0, 3.5, 0.0, 7.25];
        let c = least_squares_fit(&eye, &f, FitOptions::default()).unwrap();
        for (a, b) in c.iter().zip(&f) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_normal_equations_on_random_tall_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Matrix::from_fn(30, 4, |_, _| rng.gen_range(-1.0..1.0));
        let f: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = least_squares_fit(&a, &f, FitOptions::default()).unwrap();
        // Normal equations solved by Gaussian elimination as an independent route.
        let g = a.weighted_gram(&vec![1.0; 30]).unwrap();
        let mut rhs: Vec<f64> = (0..4).map(|j| (0..30).map(|i| a.get(i, j) * f[i]).sum()).collect();
        let mut m: Vec<Vec<f64>> = (0..4).map(|i| g.row(i).to_vec()).collect();
        for k in 0..4 {
            for i in (k + 1)..4 {
                let r = m[i][k] / m[k][k];
                for j in k..4 {
                    m[i][j] -= r * m[k][j];
                }
                rhs[i] -= r * rhs[k];
            }
        }
        let mut x = vec![0.0; 4];
        for i in (0..4).rev() {
            x[i] = (rhs[i] - ((i + 1)..4).map(|j| m[i][j] * x[j]).sum::<f64>()) / m[i][i];
        }
        for (a, b) in c.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rank_deficient_basis_is_rejected_with_condition() {
        let a = Matrix::from_fn(10, 3, |i, j| if j == 2 { i as f64 } else { (i * (j + 1)) as f64 });
        // column 0 is i, column 2 is i: exactly dependent
        match LeastSquares::new(&a, FitOptions::default()) {
            Err(Error::RankDeficient { condition, .. }) => assert!(condition > 1e8),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn auto_ridge_caps_condition() {
        let a = Matrix::from_fn(20, 3, |i, j| {
            let x = i as f64 / 19.0;
            match j {
                0 => 1.0,
                1 => x,
                _ => 1.0 + x + 1e-12 * x * x,
            }
        });
        let opts = FitOptions {
            auto_ridge: true,
            ..Default::default()
        };
        let ls = LeastSquares::new(&a, opts).unwrap();
        assert!(ls.ridge() > 0.0);
        assert!(ls.condition() <= 1e8);
        assert!((ls.condition() - 5e7).abs() < 5e6, "{}", ls.condition());
        let well = Matrix::<f64>::identity(3);
        assert_eq!(LeastSquares::new(&well, opts).unwrap().ridge(), 0.0);
    }

    #[test]
    fn underdetermined_is_rejected() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            LeastSquares::new(&a, FitOptions::default()),
            Err(Error::Underdetermined { .. })
        ));
    }

    #[test]
    fn ridge_shrinks_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::from_fn(20, 3, |_, _| rng.gen_range(-1.0..1.0));
        let f: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let plain = least_squares_fit(&a, &f, FitOptions::default()).unwrap();
        let ridge = least_squares_fit(
            &a,
            &f,
            FitOptions {
                ridge: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(n(&ridge) < n(&plain));
    }

    #[test]
    fn condition_estimate_of_diagonal_matrix() {
        let a = Matrix::from_fn(3, 3, |i, j| if i == j { [1.0, 10.0, 100.0][i] } else { 0.0 });
        let ls = LeastSquares::new(&a, FitOptions::default()).unwrap();
        assert!((ls.condition() - 100.0).abs() < 1e-6);
    }
}
