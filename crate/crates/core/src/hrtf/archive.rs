//! On-disk HRIR archive: a TOML manifest plus a little-endian f32 blob laid
//! out `[direction][ear: left=0, right=1][sample]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::sphere::{Direction, DirectionSet};

/// Impulse responses of one subject for both ears over a direction set.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirArchive {
    subject_id: String,
    sample_rate: f64,
    directions: DirectionSet,
    ir_length: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    subject_id: String,
    sample_rate: f64,
    ir_length: usize,
    data_file: String,
    /// `[azimuth_deg, elevation_deg]` per direction.
    directions: Vec<[f64; 2]>,
}

impl HrirArchive {
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate: f64,
        directions: DirectionSet,
        ir_length: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Invalid(format!("sample rate {sample_rate} must be positive")));
        }
        if ir_length == 0 {
            return Err(Error::Invalid("impulse responses must be non-empty".into()));
        }
        let expected = directions.len() * 2 * ir_length;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("impulse responses contain non-finite samples".into()));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            sample_rate,
            directions,
            ir_length,
            data,
        })
    }

    /// Builds an archive from a per-(direction, ear) generator.
    pub fn from_fn(
        subject_id: impl Into<String>,
        sample_rate: f64,
        directions: DirectionSet,
        ir_length: usize,
        mut f: impl FnMut(usize, Side) -> Vec<f64>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(directions.len() * 2 * ir_length);
        for d in 0..directions.len() {
            for side in Side::BOTH {
                let ir = f(d, side);
                if ir.len() != ir_length {
                    return Err(Error::DimensionMismatch {
                        expected: ir_length,
                        got: ir.len(),
                    });
                }
                data.extend(ir);
            }
        }
        Self::new(subject_id, sample_rate, directions, ir_length, data)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn ir_length(&self) -> usize {
        self.ir_length
    }

    pub fn ir(&self, direction: usize, side: Side) -> &[f64] {
        let start = (direction * 2 + side.index()) * self.ir_length;
        &self.data[start..start + self.ir_length]
    }

    /// Writes `<dir>/hrir.toml` and `<dir>/hrir.f32`; returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let blob_name = "hrir.f32";
        let manifest = Manifest {
            subject_id: self.subject_id.clone(),
            sample_rate: self.sample_rate,
            ir_length: self.ir_length,
            data_file: blob_name.into(),
            directions: self
                .directions
                .iter()
                .map(|d| [d.azimuth().to_degrees(), d.elevation().to_degrees()])
                .collect(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
        let manifest_path = dir.join("hrir.toml");
        std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &x in &self.data {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
        let blob = dir.join(blob_name);
        std::fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
        Ok(manifest_path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
            location: manifest_path.display().to_string(),
            message: e.to_string(),
        })?;
        let dirs = m
            .directions
            .iter()
            .map(|&[az, el]| Direction::from_degrees(az, el))
            .collect::<Result<Vec<_>>>()?;
        let directions = DirectionSet::new(dirs)?;
        let blob = manifest_path.parent().unwrap_or(Path::new(".")).join(&m.data_file);
        let bytes = std::fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Parse {
                location: blob.display().to_string(),
                message: "blob length is not a multiple of 4".into(),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(m.subject_id, m.sample_rate, directions, m.ir_length, data)
    }
}
