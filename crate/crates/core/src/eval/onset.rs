//! Onset and ITD error fields.

use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::hrtf::OnsetField;

/// Absolute per-direction errors; the excluded direction stays in the
/// vectors but is left out of every statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetReport {
    /// `[direction][ear]`, µs.
    pub onset_error: Vec<[f64; 2]>,
    /// µs.
    pub itd_error: Vec<f64>,
    pub excluded: Option<usize>,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

pub fn stats(values: impl Iterator<Item = f64>) -> Stats {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return Stats { mean: f64::NAN, std: f64::NAN };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Stats { mean, std: var.sqrt() }
}

impl OnsetReport {
    fn included(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.itd_error.len()).filter(move |&i| Some(i) != self.excluded)
    }

    pub fn onset_stats(&self, side: Side) -> Stats {
        stats(self.included().map(|i| self.onset_error[i][side.index()]))
    }

    pub fn itd_stats(&self) -> Stats {
        stats(self.included().map(|i| self.itd_error[i]))
    }
}

pub fn onset_itd_errors(predicted: &OnsetField, reference: &OnsetField) -> Result<OnsetReport> {
    let n = reference.directions().len();
    if predicted.directions().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: predicted.directions().len(),
        });
    }
    for (i, (a, b)) in predicted.directions().iter().zip(reference.directions().iter()).enumerate() {
        if a.angle_to(b) > 1e-9 {
            return Err(Error::Invalid(format!("direction {i} differs between onset fields")));
        }
    }
    let (pi, ri) = (predicted.itd(), reference.itd());
    Ok(OnsetReport {
        onset_error: (0..n)
            .map(|d| {
                [
                    (predicted.onset(d, Side::Left) - reference.onset(d, Side::Left)).abs(),
                    (predicted.onset(d, Side::Right) - reference.onset(d, Side::Right)).abs(),
                ]
            })
            .collect(),
        itd_error: pi.iter().zip(&ri).map(|(a, b)| (a - b).abs()).collect(),
        excluded: reference.excluded(),
    })
}
