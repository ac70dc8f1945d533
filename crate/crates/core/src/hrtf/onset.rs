//! Onset detection on sinc-upsampled HRIRs and interaural time differences.

use serde::{Deserialize, Serialize};

use super::archive::HrirArchive;
use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::sphere::DirectionSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnsetOptions {
    /// Fraction of the absolute peak that marks the onset.
    pub threshold: f64,
    pub upsample: usize,
    /// Required ratio of peak to the RMS of the leading 10% of samples.
    pub min_peak_to_noise: f64,
}

impl Default for OnsetOptions {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            upsample: 10,
            min_peak_to_noise: 10.0,
        }
    }
}

/// Per-direction onsets (µs) for both ears.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetField {
    directions: DirectionSet,
    /// `[direction][ear]`.
    onsets: Vec<[f64; 2]>,
    /// Direction kept for fitting but left out of evaluation.
    excluded: Option<usize>,
}

impl OnsetField {
    /// The bottom pole of `directions`, if it has exactly one, is excluded.
    pub fn new(directions: DirectionSet, onsets: Vec<[f64; 2]>) -> Result<Self> {
        if onsets.len() != directions.len() {
            return Err(Error::DimensionMismatch {
                expected: directions.len(),
                got: onsets.len(),
            });
        }
        let poles = directions.bottom_pole_indices();
        let excluded = if poles.len() == 1 { Some(poles[0]) } else { None };
        Ok(Self {
            directions,
            onsets,
            excluded,
        })
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn onset(&self, direction: usize, side: Side) -> f64 {
        self.onsets[direction][side.index()]
    }

    pub fn ear(&self, side: Side) -> Vec<f64> {
        self.onsets.iter().map(|o| o[side.index()]).collect()
    }

    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    pub fn with_excluded(mut self, excluded: Option<usize>) -> Self {
        self.excluded = excluded;
        self
    }

    /// Interaural time difference `onset_left − onset_right` (µs): positive
    /// for sources on the right.
    pub fn itd(&self) -> Vec<f64> {
        self.onsets.iter().map(|o| o[0] - o[1]).collect()
    }
}

/// `x[n]` resampled at `t = numerator / factor` samples by ideal band-limited
/// interpolation over the finite IR. Integer arithmetic keeps shifts exact.
fn sinc_at(x: &[f64], numerator: i64, factor: usize) -> f64 {
    let f = factor as i64;
    let phase = numerator.rem_euclid(f);
    if phase == 0 {
        let n = numerator / f;
        return if (0..x.len() as i64).contains(&n) { x[n as usize] } else { 0.0 };
    }
    // sin(π(k − f·n)/f) = (−1)^n · sin(πk/f)
    let wrapped = numerator.rem_euclid(2 * f);
    let s = (std::f64::consts::PI * wrapped as f64 / f as f64).sin();
    let mut acc = 0.0;
    for (n, &v) in x.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let k = (numerator - f * n as i64) as f64;
        let term = v / k;
        if n % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc * s * f as f64 / std::f64::consts::PI
}

/// Onset time of one IR in samples.
pub fn onset_samples(ir: &[f64], options: &OnsetOptions) -> Option<f64> {
    let f = options.upsample.max(1);
    let lead = (ir.len() / 10).max(1);
    let noise = (ir[..lead].iter().map(|x| x * x).sum::<f64>() / lead as f64).sqrt();
    let (ipk, raw_peak) = ir
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
    if raw_peak == 0.0 || raw_peak < options.min_peak_to_noise * noise {
        return None;
    }
    // the band-limited peak lies within a sample of the largest raw sample
    let lo = (ipk as i64 - 1) * f as i64;
    let hi = (ipk as i64 + 1) * f as i64;
    let peak = (lo..=hi).map(|k| sinc_at(ir, k, f).abs()).fold(raw_peak, f64::max);
    let level = options.threshold * peak;
    let end = (ir.len() * f) as i64;
    (0..end)
        .find(|&k| sinc_at(ir, k, f).abs() >= level)
        .map(|k| k as f64 / f as f64)
}

/// Onsets (µs) for every direction and ear of `archive`.
pub fn detect_onsets(archive: &HrirArchive, options: &OnsetOptions) -> Result<OnsetField> {
    let us_per_sample = 1e6 / archive.sample_rate();
    let mut onsets = Vec::with_capacity(archive.directions().len());
    for d in 0..archive.directions().len() {
        let mut pair = [0.0; 2];
        for side in Side::BOTH {
            let t = onset_samples(archive.ir(d, side), options).ok_or_else(|| Error::NoOnset {
                direction: d,
                ear: side.to_string(),
            })?;
            pair[side.index()] = t * us_per_sample;
        }
        onsets.push(pair);
    }
    OnsetField::new(archive.directions().clone(), onsets)
}

/// ITD per direction, `onset_left − onset_right` in µs.
pub fn itd_from_onsets(field: &OnsetField) -> Vec<f64> {
    field.itd()
}
