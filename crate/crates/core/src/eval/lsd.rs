//! Log-spectral distortion.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Whether magnitudes are linear amplitudes or already in dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnitudeScale {
    Linear,
    Db,
}

/// Global LSD with its per-direction and per-frequency breakdowns (dB).
#[derive(Debug, Clone, PartialEq)]
pub struct Lsd<T> {
    pub global: T,
    /// RMS over frequencies, one value per direction.
    pub per_direction: Vec<T>,
    /// RMS over directions, one value per frequency.
    pub per_frequency: Vec<T>,
}

/// `√(mean_{s,k} (20·log10|H/Ĥ|)²)` over a directions × frequencies grid.
pub fn lsd<T: Real>(h: &Matrix<T>, h_hat: &Matrix<T>, scale: MagnitudeScale) -> Result<Lsd<T>> {
    if h.rows() != h_hat.rows() || h.cols() != h_hat.cols() {
        return Err(Error::DimensionMismatch {
            expected: h.rows() * h.cols(),
            got: h_hat.rows() * h_hat.cols(),
        });
    }
    let (s, k) = (h.rows(), h.cols());
    if s == 0 || k == 0 {
        return Err(Error::Invalid("LSD needs a non-empty grid".into()));
    }
    let twenty = T::lit(20.0);
    let mut sq = Matrix::zeros(s, k);
    for i in 0..s {
        for j in 0..k {
            let (a, b) = (h.get(i, j), h_hat.get(i, j));
            let d = match scale {
                MagnitudeScale::Db => a - b,
                MagnitudeScale::Linear => {
                    if !(a > T::zero()) || !(b > T::zero()) {
                        return Err(Error::Domain(format!(
                            "non-positive magnitude at direction {i}, frequency {j}"
                        )));
                    }
                    twenty * (a / b).log10()
                }
            };
            sq.set(i, j, d * d);
        }
    }
    let per_direction = (0..s)
        .map(|i| (sq.row(i).iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(k)).sqrt())
        .collect();
    let per_frequency = (0..k)
        .map(|j| ((0..s).fold(T::zero(), |a, i| a + sq.get(i, j)) / T::from_usize_lossy(s)).sqrt())
        .collect();
    let total = sq.as_slice().iter().fold(T::zero(), |a, &b| a + b);
    Ok(Lsd {
        global: (total / T::from_usize_lossy(s * k)).sqrt(),
        per_direction,
        per_frequency,
    })
}

/// LSD between `[direction][frequency]` dB tables.
pub fn lsd_db_rows(reference: &[Vec<f64>], predicted: &[Vec<f64>]) -> Result<Lsd<f64>> {
    let k = reference.first().map_or(0, |r| r.len());
    let to_matrix = |rows: &[Vec<f64>]| -> Result<Matrix<f64>> {
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix::from_vec(rows.len(), k, data)
    };
    lsd(&to_matrix(reference)?, &to_matrix(predicted)?, MagnitudeScale::Db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        let h = Matrix::from_fn(4, 3, |i, j| 1.0 + i as f64 + 0.5 * j as f64);
        assert_eq!(lsd(&h, &h, MagnitudeScale::Linear).unwrap().global, 0.0);
    }

    #[test]
    fn halving_is_six_db() {
        let h = Matrix::from_fn(4, 3, |i, j| 1.0 + i as f64 + 0.5 * j as f64);
        let half = Matrix::from_fn(4, 3, |i, j| h.get(i, j) / 2.0);
        let l = lsd(&h, &half, MagnitudeScale::Linear).unwrap();
        assert!((l.global - 6.020599913279624).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_positive() {
        let h = Matrix::from_fn(2, 2, |_, _| 1.0);
        let z = Matrix::from_fn(2, 2, |i, _| i as f64);
        assert!(matches!(lsd(&h, &z, MagnitudeScale::Linear), Err(Error::Domain(_))));
    }
}
