//! Log-frequency dB magnitudes of HRIRs.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::archive::HrirArchive;
use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::sphere::DirectionSet;

/// Magnitudes below this (in dB) are clamped.
pub const DB_FLOOR: f64 = -100.0;
/// Minimum transform length before rounding up to a power of two.
pub const MIN_FFT_LEN: usize = 4096;

/// `n` geometrically spaced frequencies from `lo` to `hi`, both included.
pub fn log_frequencies(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let ratio = (hi / lo).ln();
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo * (ratio * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// The default 41-bin grid from 170 Hz to 17 kHz.
pub fn default_frequencies() -> Vec<f64> {
    log_frequencies(41, 170.0, 17_000.0)
}

/// dB magnitudes laid out `[direction][frequency][ear]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeTensor {
    freqs: Vec<f64>,
    directions: DirectionSet,
    values: Vec<f64>,
}

impl MagnitudeTensor {
    pub fn new(freqs: Vec<f64>, directions: DirectionSet, values: Vec<f64>) -> Result<Self> {
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("frequencies must be strictly increasing".into()));
        }
        let expected = directions.len() * freqs.len() * 2;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            freqs,
            directions,
            values,
        })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn get(&self, direction: usize, freq: usize, side: Side) -> f64 {
        self.values[(direction * self.freqs.len() + freq) * 2 + side.index()]
    }

    /// Spatial pattern over all directions at one frequency and ear.
    pub fn pattern(&self, freq: usize, side: Side) -> Vec<f64> {
        (0..self.directions.len()).map(|d| self.get(d, freq, side)).collect()
    }

    /// `[direction][frequency]` dB values for one ear.
    pub fn ear_matrix(&self, side: Side) -> Vec<Vec<f64>> {
        (0..self.directions.len())
            .map(|d| (0..self.freqs.len()).map(|f| self.get(d, f, side)).collect())
            .collect()
    }
}

pub fn to_db(magnitude: f64) -> f64 {
    (20.0 * magnitude.log10()).max(DB_FLOOR)
}

/// Interpolates a one-sided magnitude spectrum (bin spacing `df`) at `f`,
/// linearly in log-frequency between the bracketing bins.
fn interpolate(mag: &[f64], df: f64, f: f64) -> f64 {
    let pos = f / df;
    let k = pos.floor() as usize;
    if k + 1 >= mag.len() {
        return mag[mag.len() - 1];
    }
    if k == 0 {
        // no log axis below the first bin
        return mag[0] + (mag[1] - mag[0]) * pos;
    }
    let (f0, f1) = (k as f64 * df, (k + 1) as f64 * df);
    let t = (f.ln() - f0.ln()) / (f1.ln() - f0.ln());
    mag[k] + (mag[k + 1] - mag[k]) * t
}

/// dB magnitude at `freqs` for every IR. The subject spectrum is read at
/// `f / factor`, mapping a head `factor` times the reference size onto the
/// reference frequency axis.
pub fn magnitude_extract(archive: &HrirArchive, freqs: &[f64], factor: f64) -> Result<MagnitudeTensor> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Invalid(format!("normalization factor {factor} must be positive")));
    }
    let fs = archive.sample_rate();
    let nyquist = fs / 2.0;
    let scaled: Vec<f64> = freqs.iter().map(|&f| f / factor).collect();
    if let Some((&f, _)) = freqs.iter().zip(&scaled).find(|(_, &s)| s > nyquist || s <= 0.0) {
        return Err(Error::FrequencyOutOfRange {
            freq: f / factor,
            nyquist,
        });
    }
    let n = archive.ir_length().max(MIN_FFT_LEN).next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let df = fs / n as f64;
    let dirs = archive.directions().len();
    let mut values = vec![0.0; dirs * freqs.len() * 2];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut mag = vec![0.0; n / 2 + 1];
    for d in 0..dirs {
        for side in Side::BOTH {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (b, &x) in buf.iter_mut().zip(archive.ir(d, side)) {
                b.re = x;
            }
            fft.process(&mut buf);
            for (m, c) in mag.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (fi, &f) in scaled.iter().enumerate() {
                values[(d * freqs.len() + fi) * 2 + side.index()] = to_db(interpolate(&mag, df, f));
            }
        }
    }
    MagnitudeTensor::new(freqs.to_vec(), archive.directions().clone(), values)
}
