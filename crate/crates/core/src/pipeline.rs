//! Subject preparation (targets and ear features) and held-out evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{put_f64s, put_u32, Reader};
use crate::cap::CapSpec;
use crate::error::{Error, Result};
use crate::eval::{lsd_db_rows, onset_itd_errors, SubjectReport};
use crate::geometry::anthro::DEFAULT_COLUMNS;
use crate::geometry::{
    crop_cap, normalization_factor, remesh_cap, spherical_parameterize_with, AnthroRecord, EarFeatureExtractor,
    HeadRadiusModel, ParamOptions, Side, TriMesh,
};
use crate::hrtf::{
    detect_onsets, log_frequencies, magnitude_extract, HrirArchive, MagnitudeTensor, OnsetField, OnsetOptions, ShTargets,
    SmoothingError, TargetExtractor,
};
use crate::linalg::FitOptions;
use crate::neural::SubjectData;
use crate::sh::ShCoefficients;
use crate::sphere::{Direction, DirectionSet};

const FEATURE_MAGIC: &[u8; 8] = b"EARSCH1\0";

/// Preparation settings; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub freq_count: usize,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub magnitude_order: usize,
    pub onset_order: usize,
    pub crop_half_angle_deg: f64,
    pub cap_half_angle_deg: f64,
    pub cap_max_index: usize,
    pub grid_points: usize,
    pub anthro_columns: Vec<String>,
    pub head_model: HeadRadiusModel,
    pub onset: OnsetOptions,
    pub parameterization: ParamOptions,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            freq_count: 41,
            freq_min_hz: 170.0,
            freq_max_hz: 17_000.0,
            magnitude_order: 7,
            onset_order: 5,
            crop_half_angle_deg: 30.0,
            cap_half_angle_deg: 25.0,
            cap_max_index: 20,
            grid_points: 9062,
            anthro_columns: DEFAULT_COLUMNS.iter().map(|s| s.to_string()).collect(),
            head_model: HeadRadiusModel::default(),
            onset: OnsetOptions::default(),
            parameterization: ParamOptions::default(),
        }
    }
}

impl PrepareConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.freq_count == 0 || !(self.freq_min_hz > 0.0 && self.freq_max_hz >= self.freq_min_hz) {
            return bad("frequency grid needs a positive, increasing range".into());
        }
        if !(self.cap_half_angle_deg > 0.0 && self.cap_half_angle_deg < self.crop_half_angle_deg && self.crop_half_angle_deg <= 180.0) {
            return bad(format!(
                "cap half-angle {}° must be positive and below the crop half-angle {}°",
                self.cap_half_angle_deg, self.crop_half_angle_deg
            ));
        }
        if self.grid_points == 0 || self.anthro_columns.is_empty() {
            return bad("grid size and anthropometric column list must be non-empty".into());
        }
        Ok(())
    }

    pub fn freqs(&self) -> Vec<f64> {
        log_frequencies(self.freq_count, self.freq_min_hz, self.freq_max_hz)
    }

    pub fn cap_spec(&self) -> Result<CapSpec> {
        CapSpec::new(self.cap_half_angle_deg.to_radians(), self.cap_max_index)
    }
}

/// Raw measurements of one subject.
#[derive(Debug, Clone)]
pub struct SubjectSource {
    pub archive: HrirArchive,
    pub mesh: TriMesh,
    pub anthro: AnthroRecord,
    /// Ear-canal directions in head coordinates, indexed by `Side::index()`.
    pub ears: [Direction; 2],
}

/// Network inputs for both ears of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatures {
    pub subject_id: String,
    pub norm_factor: f64,
    /// Selected anthropometric columns.
    pub anthro: Vec<f64>,
    /// Per ear, channel-major `[x, y, z][coefficient]`.
    pub ear_sch: [Vec<f64>; 2],
}

impl SubjectFeatures {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = FEATURE_MAGIC.to_vec();
        let id = self.subject_id.as_bytes();
        put_u32(&mut out, id.len() as u32);
        out.extend_from_slice(id);
        put_f64s(&mut out, &[self.norm_factor]);
        put_u32(&mut out, self.anthro.len() as u32);
        put_f64s(&mut out, &self.anthro);
        put_u32(&mut out, self.ear_sch[0].len() as u32);
        for e in &self.ear_sch {
            put_f64s(&mut out, e);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "ear features");
        r.magic(FEATURE_MAGIC)?;
        let n = r.u32()? as usize;
        let id = r.bytes(n)?;
        let subject_id = String::from_utf8(id.to_vec()).map_err(|_| Error::Parse {
            location: "ear features".into(),
            message: "subject id is not UTF-8".into(),
        })?;
        let norm_factor = r.f64s(1)?[0];
        let na = r.u32()? as usize;
        let anthro = r.f64s(na)?;
        let ns = r.u32()? as usize;
        let ear_sch = [r.f64s(ns)?, r.f64s(ns)?];
        r.finish()?;
        Ok(Self {
            subject_id,
            norm_factor,
            anthro,
            ear_sch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Normalized measurements used both for targets and as evaluation reference.
#[derive(Debug, Clone)]
pub struct Measured {
    pub magnitude: MagnitudeTensor,
    pub onsets: OnsetField,
}

#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub features: SubjectFeatures,
    pub targets: ShTargets,
    pub smoothing: SmoothingError,
    pub measured: Measured,
}

impl PreparedSubject {
    pub fn to_subject_data(&self) -> SubjectData {
        to_subject_data(&self.features, &self.targets)
    }
}

pub fn to_subject_data(features: &SubjectFeatures, targets: &ShTargets) -> SubjectData {
    SubjectData {
        subject_id: features.subject_id.clone(),
        ear_sch: features.ear_sch.clone(),
        anthro: features.anthro.clone(),
        magnitude: Side::BOTH.map(|s| (0..targets.freqs.len()).map(|f| targets.magnitude(s, f).to_vec()).collect()),
        onset: Side::BOTH.map(|s| targets.onset(s).to_vec()),
    }
}

/// Shared bases for one direction layout; build once per dataset.
#[derive(Debug, Clone)]
pub struct Preparer {
    config: PrepareConfig,
    directions: DirectionSet,
    targets: TargetExtractor,
    ears: EarFeatureExtractor,
}

impl Preparer {
    pub fn new(config: PrepareConfig, directions: &DirectionSet) -> Result<Self> {
        config.validate()?;
        let targets = TargetExtractor::new(directions, config.magnitude_order, config.onset_order, FitOptions::default())?;
        let ears = EarFeatureExtractor::new(config.cap_spec()?, config.grid_points)?;
        Ok(Self {
            config,
            directions: directions.clone(),
            targets,
            ears,
        })
    }

    pub fn config(&self) -> &PrepareConfig {
        &self.config
    }

    pub fn target_extractor(&self) -> &TargetExtractor {
        &self.targets
    }

    pub fn ear_extractor(&self) -> &EarFeatureExtractor {
        &self.ears
    }

    fn check_layout(&self, archive: &HrirArchive) -> Result<()> {
        let d = archive.directions();
        if d.len() != self.directions.len() || d.iter().zip(self.directions.iter()).any(|(a, b)| a.angle_to(b) > 1e-9) {
            return Err(Error::Invalid(format!(
                "subject {} does not use the dataset's direction layout",
                archive.subject_id()
            )));
        }
        Ok(())
    }

    /// Frequency-normalized magnitudes and onsets of one archive.
    pub fn measure(&self, archive: &HrirArchive, norm_factor: f64) -> Result<Measured> {
        self.check_layout(archive)?;
        Ok(Measured {
            magnitude: magnitude_extract(archive, &self.config.freqs(), norm_factor)?,
            onsets: detect_onsets(archive, &self.config.onset)?,
        })
    }

    pub fn norm_factor(&self, anthro: &AnthroRecord, reference: &AnthroRecord) -> Result<f64> {
        normalization_factor(anthro, reference, &self.config.head_model)
    }

    pub fn ear_features(&self, mesh: &TriMesh, ears: &[Direction; 2]) -> Result<[Vec<f64>; 2]> {
        let map = spherical_parameterize_with(mesh, self.config.parameterization)?;
        let crop = self.config.crop_half_angle_deg.to_radians();
        let mut out: [Vec<f64>; 2] = Default::default();
        for side in Side::BOTH {
            let center = map.map_direction(ears[side.index()].unit_vector())?;
            let cropped = crop_cap(&map, center, crop)?;
            let patch = remesh_cap(&cropped, self.ears.grid(), *self.ears.spec())?;
            let f = self.ears.extract(&patch, side)?;
            out[side.index()] = (0..3).flat_map(|c| f.coefficients(c)).collect();
        }
        Ok(out)
    }

    pub fn prepare(&self, source: &SubjectSource, reference: &AnthroRecord) -> Result<PreparedSubject> {
        let norm_factor = self.norm_factor(&source.anthro, reference)?;
        let measured = self.measure(&source.archive, norm_factor)?;
        let (targets, smoothing) = self.targets.targets(&measured.magnitude, &measured.onsets, norm_factor)?;
        let features = SubjectFeatures {
            subject_id: source.archive.subject_id().to_string(),
            norm_factor,
            anthro: source.anthro.select(&self.config.anthro_columns)?,
            ear_sch: self.ear_features(&source.mesh, &source.ears)?,
        };
        Ok(PreparedSubject {
            features,
            targets,
            smoothing,
            measured,
        })
    }

    /// Reconstructs predicted SH coefficients on the layout and scores them
    /// against the measurements.
    pub fn evaluate(
        &self,
        subject_id: &str,
        measured: &Measured,
        magnitude: &[Vec<Vec<f64>>; 2],
        onset: &[Vec<f64>; 2],
    ) -> Result<SubjectReport> {
        let freqs = measured.magnitude.freqs().to_vec();
        let mb = self.targets.magnitude_basis();
        let ob = self.targets.onset_basis();
        let mut lsd = Vec::with_capacity(2);
        let mut onsets = vec![[0.0; 2]; self.directions.len()];
        for side in Side::BOTH {
            let e = side.index();
            if magnitude[e].len() != freqs.len() {
                return Err(Error::DimensionMismatch {
                    expected: freqs.len(),
                    got: magnitude[e].len(),
                });
            }
            let mut recon = vec![vec![0.0; freqs.len()]; self.directions.len()];
            for (f, c) in magnitude[e].iter().enumerate() {
                let r = mb.reconstruct(&ShCoefficients::new(mb.order(), c.clone())?)?;
                for (row, v) in recon.iter_mut().zip(r) {
                    row[f] = v;
                }
            }
            lsd.push(lsd_db_rows(&measured.magnitude.ear_matrix(side), &recon)?);
            let r = ob.reconstruct(&ShCoefficients::new(ob.order(), onset[e].clone())?)?;
            for (o, v) in onsets.iter_mut().zip(r) {
                o[e] = v;
            }
        }
        let predicted = OnsetField::new(self.directions.clone(), onsets)?.with_excluded(measured.onsets.excluded());
        let [left, right]: [_; 2] = lsd.try_into().expect("two ears");
        Ok(SubjectReport {
            subject_id: subject_id.to_string(),
            directions: self.directions.clone(),
            freqs,
            lsd: [left, right],
            onset: onset_itd_errors(&predicted, &measured.onsets)?,
        })
    }
}
