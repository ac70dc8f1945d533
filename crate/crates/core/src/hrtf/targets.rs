//! SH training targets: per-frequency magnitude patterns and onset fields.

use std::path::Path;

use super::magnitude::MagnitudeTensor;
use super::onset::OnsetField;
use crate::binio::{put_f64s, put_u32, Reader};
use crate::error::{Error, Result};
use crate::eval::lsd_db_rows;
use crate::geometry::Side;
use crate::linalg::FitOptions;
use crate::sh::{coefficient_count, real_sh_basis, ShBasis, ShFitter};
use crate::sphere::DirectionSet;

pub const MAGNITUDE_ORDER: usize = 7;
pub const ONSET_ORDER: usize = 5;
const MAGIC: &[u8; 8] = b"SHTGT01\0";

/// SH coefficients of one subject's magnitudes (per frequency) and onsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ShTargets {
    pub freqs: Vec<f64>,
    pub magnitude_order: usize,
    pub onset_order: usize,
    pub norm_factor: f64,
    /// `[ear][freq][coef]`.
    magnitude: Vec<f64>,
    /// `[ear][coef]`.
    onset: Vec<f64>,
}

/// How much the truncated SH expansion deviates from its input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingError {
    /// dB LSD between input and reconstructed magnitudes, per ear.
    pub lsd_db: [f64; 2],
    /// Mean absolute onset deviation (µs, excluded direction left out), per ear.
    pub onset_us: [f64; 2],
}

impl ShTargets {
    pub fn new(
        freqs: Vec<f64>,
        magnitude_order: usize,
        onset_order: usize,
        norm_factor: f64,
        magnitude: Vec<f64>,
        onset: Vec<f64>,
    ) -> Result<Self> {
        let nm = coefficient_count(magnitude_order);
        let no = coefficient_count(onset_order);
        if magnitude.len() != 2 * freqs.len() * nm {
            return Err(Error::DimensionMismatch {
                expected: 2 * freqs.len() * nm,
                got: magnitude.len(),
            });
        }
        if onset.len() != 2 * no {
            return Err(Error::DimensionMismatch {
                expected: 2 * no,
                got: onset.len(),
            });
        }
        Ok(Self {
            freqs,
            magnitude_order,
            onset_order,
            norm_factor,
            magnitude,
            onset,
        })
    }

    pub fn magnitude_count(&self) -> usize {
        coefficient_count(self.magnitude_order)
    }

    pub fn onset_count(&self) -> usize {
        coefficient_count(self.onset_order)
    }

    pub fn magnitude(&self, side: Side, freq: usize) -> &[f64] {
        let n = self.magnitude_count();
        let start = (side.index() * self.freqs.len() + freq) * n;
        &self.magnitude[start..start + n]
    }

    pub fn onset(&self, side: Side) -> &[f64] {
        let n = self.onset_count();
        &self.onset[side.index() * n..(side.index() + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, self.freqs.len() as u32);
        put_u32(&mut out, self.magnitude_order as u32);
        put_u32(&mut out, self.onset_order as u32);
        put_f64s(&mut out, &[self.norm_factor]);
        put_f64s(&mut out, &self.freqs);
        put_f64s(&mut out, &self.magnitude);
        put_f64s(&mut out, &self.onset);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "targets");
        r.magic(MAGIC)?;
        let nf = r.u32()? as usize;
        let mo = r.u32()? as usize;
        let oo = r.u32()? as usize;
        let norm_factor = r.f64s(1)?[0];
        let freqs = r.f64s(nf)?;
        let magnitude = r.f64s(2 * nf * coefficient_count(mo))?;
        let onset = r.f64s(2 * coefficient_count(oo))?;
        r.finish()?;
        Self::new(freqs, mo, oo, norm_factor, magnitude, onset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Shared SH bases over one direction set, factored once.
#[derive(Debug, Clone)]
pub struct TargetExtractor {
    magnitude_basis: ShBasis<f64>,
    onset_basis: ShBasis<f64>,
    magnitude_fitter: ShFitter<f64>,
    onset_fitter: ShFitter<f64>,
}

impl TargetExtractor {
    pub fn new(directions: &DirectionSet, magnitude_order: usize, onset_order: usize, options: FitOptions) -> Result<Self> {
        let magnitude_basis = real_sh_basis::<f64>(magnitude_order, directions);
        let onset_basis = real_sh_basis::<f64>(onset_order, directions);
        Ok(Self {
            magnitude_fitter: magnitude_basis.fitter(options)?,
            onset_fitter: onset_basis.fitter(options)?,
            magnitude_basis,
            onset_basis,
        })
    }

    pub fn magnitude_basis(&self) -> &ShBasis<f64> {
        &self.magnitude_basis
    }

    pub fn onset_basis(&self) -> &ShBasis<f64> {
        &self.onset_basis
    }

    /// Per (ear, frequency) fits of the dB patterns; returns `[ear][freq][coef]`
    /// and the per-ear smoothing LSD.
    pub fn magnitude_sh_targets(&self, tensor: &MagnitudeTensor) -> Result<(Vec<f64>, [f64; 2])> {
        let nf = tensor.freqs().len();
        let mut coeffs = Vec::with_capacity(2 * nf * self.magnitude_basis.matrix().cols());
        let mut smoothing = [0.0; 2];
        for side in Side::BOTH {
            let input = tensor.ear_matrix(side);
            let mut recon = vec![vec![0.0; nf]; input.len()];
            for f in 0..nf {
                let c = self.magnitude_fitter.fit(&tensor.pattern(f, side))?;
                let r = self.magnitude_basis.reconstruct(&c)?;
                for (row, v) in recon.iter_mut().zip(r) {
                    row[f] = v;
                }
                coeffs.extend_from_slice(c.values());
            }
            smoothing[side.index()] = lsd_db_rows(&input, &recon)?.global;
        }
        Ok((coeffs, smoothing))
    }

    /// Per-ear onset fits (bottom pole included); returns `[ear][coef]` and
    /// the per-ear mean absolute smoothing error over evaluated directions.
    pub fn onset_sh_targets(&self, field: &OnsetField) -> Result<(Vec<f64>, [f64; 2])> {
        let mut coeffs = Vec::new();
        let mut smoothing = [0.0; 2];
        for side in Side::BOTH {
            let onsets = field.ear(side);
            let c = self.onset_fitter.fit(&onsets)?;
            let r = self.onset_basis.reconstruct(&c)?;
            let used: Vec<f64> = onsets
                .iter()
                .zip(&r)
                .enumerate()
                .filter(|(i, _)| Some(*i) != field.excluded())
                .map(|(_, (a, b))| (a - b).abs())
                .collect();
            smoothing[side.index()] = used.iter().sum::<f64>() / used.len().max(1) as f64;
            coeffs.extend_from_slice(c.values());
        }
        Ok((coeffs, smoothing))
    }

    pub fn targets(&self, tensor: &MagnitudeTensor, field: &OnsetField, norm_factor: f64) -> Result<(ShTargets, SmoothingError)> {
        let (magnitude, lsd_db) = self.magnitude_sh_targets(tensor)?;
        let (onset, onset_us) = self.onset_sh_targets(field)?;
        let targets = ShTargets::new(
            tensor.freqs().to_vec(),
            self.magnitude_basis.order(),
            self.onset_basis.order(),
            norm_factor,
            magnitude,
            onset,
        )?;
        Ok((targets, SmoothingError { lsd_db, onset_us }))
    }
}
