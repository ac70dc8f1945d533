//! Head/torso measurements and equivalent head radius.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default measurement columns (meters).
pub const DEFAULT_COLUMNS: [&str; 13] = [
    "x1_head_width",
    "x2_head_height",
    "x3_head_depth",
    "x4_pinna_offset_down",
    "x5_pinna_offset_back",
    "x6_neck_width",
    "x7_neck_height",
    "x8_neck_depth",
    "x9_torso_top_width",
    "x12_shoulder_width",
    "x13_head_offset_forward",
    "x16_head_circumference",
    "x17_shoulder_circumference",
];

/// Regression for the equivalent head radius
/// `a_w·w/2 + a_h·h/2 + a_d·d/2 + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadRadiusModel {
    pub width_coeff: f64,
    pub height_coeff: f64,
    pub depth_coeff: f64,
    pub offset: f64,
    pub width_column: String,
    pub height_column: String,
    pub depth_column: String,
}

impl Default for HeadRadiusModel {
    fn default() -> Self {
        Self {
            width_coeff: 0.51,
            height_coeff: 0.019,
            depth_coeff: 0.18,
            offset: 0.032,
            width_column: DEFAULT_COLUMNS[0].into(),
            height_column: DEFAULT_COLUMNS[1].into(),
            depth_column: DEFAULT_COLUMNS[2].into(),
        }
    }
}

impl HeadRadiusModel {
    pub fn radius_from(&self, w: f64, h: f64, d: f64) -> f64 {
        self.width_coeff * w / 2.0 + self.height_coeff * h / 2.0 + self.depth_coeff * d / 2.0 + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnthroRecord {
    pub subject_id: String,
    pub columns: Vec<String>,
    pub measurements: Vec<f64>,
}

impl AnthroRecord {
    pub fn new(subject_id: impl Into<String>, columns: Vec<String>, measurements: Vec<f64>) -> Result<Self> {
        let subject_id = subject_id.into();
        if columns.len() != measurements.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                got: measurements.len(),
            });
        }
        if let Some((c, v)) = columns.iter().zip(&measurements).find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Invalid(format!(
                "subject {subject_id}: measurement {c} = {v} is not positive"
            )));
        }
        Ok(Self {
            subject_id,
            columns,
            measurements,
        })
    }

    pub fn get(&self, column: &str) -> Result<f64> {
        self.columns
            .iter()
            .position(|c| c == column)
            .map(|i| self.measurements[i])
            .ok_or_else(|| Error::MissingMeasurement(format!("{} for subject {}", column, self.subject_id)))
    }

    /// Values for `columns` in the given order.
    pub fn select(&self, columns: &[String]) -> Result<Vec<f64>> {
        columns.iter().map(|c| self.get(c)).collect()
    }
}

pub fn equivalent_head_radius(record: &AnthroRecord, model: &HeadRadiusModel) -> Result<f64> {
    Ok(model.radius_from(
        record.get(&model.width_column)?,
        record.get(&model.height_column)?,
        record.get(&model.depth_column)?,
    ))
}

/// `radius(subject) / radius(reference)`.
pub fn normalization_factor(subject: &AnthroRecord, reference: &AnthroRecord, model: &HeadRadiusModel) -> Result<f64> {
    Ok(equivalent_head_radius(subject, model)? / equivalent_head_radius(reference, model)?)
}

/// Parses `subject_id,<columns...>` CSV text.
pub fn parse_anthro_csv(text: &str) -> Result<Vec<AnthroRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { location: "anthro header".into(), message: e.to_string() })?
        .clone();
    if headers.get(0) != Some("subject_id") {
        return Err(Error::Parse {
            location: "anthro header".into(),
            message: "first column must be subject_id".into(),
        });
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let loc = format!("anthro row {}", n + 2);
        let row = row.map_err(|e| Error::Parse { location: loc.clone(), message: e.to_string() })?;
        let id = row.get(0).unwrap_or_default().to_string();
        if seen.insert(id.clone(), ()).is_some() {
            return Err(Error::Parse { location: loc, message: format!("duplicate subject {id}") });
        }
        let values = row
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    location: loc.clone(),
                    message: format!("bad value '{s}': {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(AnthroRecord::new(id, columns.clone(), values)?);
    }
    Ok(out)
}

pub fn write_anthro_csv(records: &[AnthroRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = records.first() {
        let mut header = vec!["subject_id".to_string()];
        header.extend(first.columns.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    for r in records {
        let mut row = vec![r.subject_id.clone()];
        row.extend(r.measurements.iter().map(|v| format!("{v:.8e}")));
        w.write_record(&row).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(w: f64, h: f64, d: f64) -> AnthroRecord {
        let cols: Vec<String> = DEFAULT_COLUMNS.iter().map(|s| s.to_string()).collect();
        let mut vals = vec![0.1; 13];
        vals[0] = w;
        vals[1] = h;
        vals[2] = d;
        AnthroRecord::new("s", cols, vals).unwrap()
    }

    #[test]
    fn radius_for_equal_dimensions() {
        let r = equivalent_head_radius(&record(0.18, 0.18, 0.18), &HeadRadiusModel::default()).unwrap();
        assert!((r - 0.09581).abs() < 1e-12);
    }

    #[test]
    fn factor_for_identical_subject_is_one() {
        let a = record(0.15, 0.2, 0.19);
        let m = HeadRadiusModel::default();
        assert_eq!(normalization_factor(&a, &a, &m).unwrap(), 1.0);
    }

    #[test]
    fn factor_tracks_radius_ratio() {
        let m = HeadRadiusModel { offset: 0.0, ..Default::default() };
        let a = record(0.15, 0.2, 0.19);
        let b = record(0.165, 0.22, 0.209);
        assert!((normalization_factor(&b, &a, &m).unwrap() - 1.10).abs() < 1e-12);
    }

    #[test]
    fn missing_column_is_reported() {
        let r = AnthroRecord::new("s", vec!["a".into()], vec![1.0]).unwrap();
        assert!(matches!(
            equivalent_head_radius(&r, &HeadRadiusModel::default()),
            Err(Error::MissingMeasurement(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![record(0.15, 0.2, 0.19), record(0.16, 0.21, 0.2)];
        let mut recs = recs;
        recs[1].subject_id = "t".into();
        let text = write_anthro_csv(&recs).unwrap();
        let back = parse_anthro_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in recs.iter().zip(&back) {
            for (x, y) in a.measurements.iter().zip(&b.measurements) {
                assert!((x - y).abs() <= 1e-9 * x.abs());
            }
        }
    }
}
