//! Real spherical harmonics: associated Legendre polynomials, basis matrices,
//! least-squares transforms and reconstruction.
//!
//! Coefficients are ordered `(0,0), (1,−1), (1,0), (1,1), …, (L,L)`, i.e. the
//! pair `(l, m)` lives at index `l² + l + m`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::{FitOptions, LeastSquares, Matrix};
use crate::scalar::Real;
use crate::sphere::DirectionSet;

/// Number of coefficients of an order-`L` expansion.
pub const fn coefficient_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Canonical column index of `(l, m)`.
pub fn sh_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Inverse of [`sh_index`].
pub fn sh_degree_order(index: usize) -> (usize, i64) {
    let l = (index as f64).sqrt().floor() as usize;
    let l = if (l + 1) * (l + 1) <= index { l + 1 } else { l };
    (l, index as i64 - (l * l + l) as i64)
}

/// Associated Legendre polynomial `P_l^m(x)` including the Condon–Shortley
/// phase `(−1)^m`. Negative `m` follows the usual reflection formula.
pub fn assoc_legendre<T: Real>(l: usize, m: i64, x: T) -> Result<T> {
    if x.abs() > T::one() || !x.is_finite() {
        return Err(Error::Domain(format!("|x| must be <= 1, got {x}")));
    }
    if m.unsigned_abs() as usize > l {
        return Err(Error::Domain(format!("|m|={} exceeds l={l}", m.abs())));
    }
    let ma = m.unsigned_abs() as usize;
    let p = legendre_column(l, ma, x);
    if m >= 0 {
        Ok(p)
    } else {
        // P_l^{-m} = (-1)^m (l-m)!/(l+m)! P_l^m
        let sign = if ma % 2 == 0 { T::one() } else { -T::one() };
        Ok(sign * factorial_ratio::<T>(l, ma) * p)
    }
}

/// `(l−m)!/(l+m)!` as a product, avoiding factorial overflow.
fn factorial_ratio<T: Real>(l: usize, m: usize) -> T {
    let mut r = T::one();
    for j in (l - m + 1)..=(l + m) {
        r /= T::from_usize_lossy(j);
    }
    r
}

/// `P_l^m(x)` for fixed `m ≥ 0` via upward recurrence in `l`.
fn legendre_column<T: Real>(l: usize, m: usize, x: T) -> T {
    let somx2 = ((T::one() - x) * (T::one() + x)).max(T::zero()).sqrt();
    let mut pmm = T::one();
    let mut fact = T::one();
    for _ in 0..m {
        pmm = -pmm * fact * somx2;
        fact += T::lit(2.0);
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * T::from_usize_lossy(2 * m + 1) * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = T::zero();
    for ll in (m + 2)..=l {
        pll = (x * T::from_usize_lossy(2 * ll - 1) * pmmp1 - T::from_usize_lossy(ll + m - 1) * pmm)
            / T::from_usize_lossy(ll - m);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// All `P_l^m(x)` for `0 ≤ m ≤ l ≤ lmax`, stored at `l(l+1)/2 + m`.
fn legendre_triangle<T: Real>(lmax: usize, x: T, out: &mut Vec<T>) {
    out.clear();
    out.resize((lmax + 1) * (lmax + 2) / 2, T::zero());
    let tri = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let somx2 = ((T::one() - x) * (T::one() + x)).max(T::zero()).sqrt();
    let mut pmm = T::one();
    for m in 0..=lmax {
        if m > 0 {
            pmm = -pmm * T::from_usize_lossy(2 * m - 1) * somx2;
        }
        out[tri(m, m)] = pmm;
        if m < lmax {
            out[tri(m + 1, m)] = x * T::from_usize_lossy(2 * m + 1) * pmm;
        }
        for l in (m + 2)..=lmax {
            let v = (x * T::from_usize_lossy(2 * l - 1) * out[tri(l - 1, m)]
                - T::from_usize_lossy(l + m - 1) * out[tri(l - 2, m)])
                / T::from_usize_lossy(l - m);
            out[tri(l, m)] = v;
        }
    }
}

/// Orthonormal normalization `√((2l+1)/(4π) · (l−m)!/(l+m)!)`.
fn sh_norm<T: Real>(l: usize, m: usize) -> T {
    (T::from_usize_lossy(2 * l + 1) / (T::lit(4.0) * T::PI()) * factorial_ratio::<T>(l, m)).sqrt()
}

/// Evaluated real SH basis: one row per direction, `(L+1)²` columns.
#[derive(Debug, Clone)]
pub struct ShBasis<T> {
    order: usize,
    matrix: Matrix<T>,
    directions: DirectionSet,
}

/// Builds the orthonormal real SH basis matrix of order `order`.
///
/// The Condon–Shortley phase carried by [`assoc_legendre`] is cancelled, so
/// `Y_{1,1} ∝ +x`, `Y_{1,−1} ∝ +y`, `Y_{1,0} ∝ +z`.
pub fn real_sh_basis<T: Real>(order: usize, directions: &DirectionSet) -> ShBasis<T> {
    let n = coefficient_count(order);
    let mut matrix = Matrix::zeros(directions.len(), n);
    let norms: Vec<T> = (0..=order)
        .flat_map(|l| (0..=l).map(move |m| (l, m)))
        .map(|(l, m)| sh_norm::<T>(l, m))
        .collect();
    let sqrt2 = T::lit(2f64.sqrt());
    let mut p = Vec::new();
    for (i, d) in directions.iter().enumerate() {
        let theta = T::lit(d.polar());
        let phi = T::lit(d.azimuth());
        legendre_triangle(order, theta.cos(), &mut p);
        let row = matrix.row_mut(i);
        for l in 0..=order {
            let base = l * l + l;
            let tri = l * (l + 1) / 2;
            row[base] = norms[tri] * p[tri];
            for m in 1..=l {
                let cs = if m % 2 == 0 { T::one() } else { -T::one() };
                let common = sqrt2 * norms[tri + m] * p[tri + m] * cs;
                let mf = T::from_usize_lossy(m);
                row[base + m] = common * (mf * phi).cos();
                row[base - m] = common * (mf * phi).sin();
            }
        }
    }
    ShBasis {
        order,
        matrix,
        directions: directions.clone(),
    }
}

impl<T: Real> ShBasis<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    /// Factorizes the basis once for repeated fits.
    pub fn fitter(&self, options: FitOptions) -> Result<ShFitter<T>> {
        Ok(ShFitter {
            order: self.order,
            solver: LeastSquares::new(&self.matrix, options)?,
        })
    }

    /// One-shot least-squares transform of `samples`.
    pub fn fit(&self, samples: &[T]) -> Result<ShCoefficients<T>> {
        self.fitter(FitOptions::default())?.fit(samples)
    }

    /// Synthesizes sample values `f = Y c`.
    pub fn reconstruct(&self, coeffs: &ShCoefficients<T>) -> Result<Vec<T>> {
        if coeffs.order() != self.order {
            return Err(Error::DimensionMismatch {
                expected: coefficient_count(self.order),
                got: coeffs.values().len(),
            });
        }
        self.matrix.matvec(coeffs.values())
    }
}

/// A factorized SH basis.
#[derive(Debug, Clone)]
pub struct ShFitter<T> {
    order: usize,
    solver: LeastSquares<T>,
}

impl<T: Real> ShFitter<T> {
    pub fn fit(&self, samples: &[T]) -> Result<ShCoefficients<T>> {
        ShCoefficients::new(self.order, self.solver.solve(samples)?)
    }

    pub fn condition(&self) -> f64 {
        self.solver.condition()
    }
}

/// Coefficient vector of an order-`L` expansion in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients<T> {
    order: usize,
    values: Vec<T>,
}

impl<T: Real> ShCoefficients<T> {
    pub fn new(order: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != coefficient_count(order) {
            return Err(Error::DimensionMismatch {
                expected: coefficient_count(order),
                got: values.len(),
            });
        }
        Ok(Self { order, values })
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            values: vec![T::zero(); coefficient_count(order)],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, l: usize, m: i64) -> T {
        self.values[sh_index(l, m)]
    }

    /// Writes `u32 L` followed by the coefficients as little-endian `f64`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_coefficient_record(w, self.order, &self.values)
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let (order, values) = read_coefficient_record(r, coefficient_count)?;
        Ok(Self { order, values })
    }
}

/// Shared record layout: `u32` order then `count(order)` little-endian `f64`s.
pub fn write_coefficient_record<W: Write, T: Real>(
    w: &mut W,
    order: usize,
    values: &[T],
) -> std::io::Result<()> {
    w.write_all(&(order as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_coefficient_record<R: Read, T: Real>(
    r: &mut R,
    count: impl Fn(usize) -> usize,
) -> std::io::Result<(usize, Vec<T>)> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let order = u32::from_le_bytes(b4) as usize;
    let n = count(order);
    let mut values = Vec::with_capacity(n);
    let mut b8 = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        values.push(T::lit(f64::from_le_bytes(b8)));
    }
    Ok((order, values))
}
