//! CSV emission of per-subject maps, curves and the summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::lsd::Lsd;
use super::onset::OnsetReport;
use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::sphere::DirectionSet;

/// Everything evaluated for one held-out subject.
#[derive(Debug, Clone)]
pub struct SubjectReport {
    pub subject_id: String,
    pub directions: DirectionSet,
    pub freqs: Vec<f64>,
    /// Indexed by `Side::index()`.
    pub lsd: [Lsd<f64>; 2],
    pub onset: OnsetReport,
}

pub const SUMMARY_HEADER: &str =
    "subject,lsd_left_db,lsd_right_db,onset_err_left_us,onset_err_right_us,itd_err_mean_us,itd_err_std_us";

/// Nine significant digits, fixed format for reproducible diffs.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn summary_row(r: &SubjectReport) -> String {
    let itd = r.onset.itd_stats();
    [
        r.subject_id.clone(),
        fmt_float(r.lsd[0].global),
        fmt_float(r.lsd[1].global),
        fmt_float(r.onset.onset_stats(Side::Left).mean),
        fmt_float(r.onset.onset_stats(Side::Right).mean),
        fmt_float(itd.mean),
        fmt_float(itd.std),
    ]
    .join(",")
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `<subject>_lsd_direction.csv`, `<subject>_lsd_frequency.csv`,
/// `<subject>_onset.csv` per report and `summary.csv`; returns the paths.
pub fn emit_report(reports: &[SubjectReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for r in reports {
        let mut s = String::from("index,azimuth_deg,elevation_deg,lsd_left_db,lsd_right_db\n");
        for (i, d) in r.directions.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{},{},{},{}",
                fmt_float(d.azimuth().to_degrees()),
                fmt_float(d.elevation().to_degrees()),
                fmt_float(r.lsd[0].per_direction[i]),
                fmt_float(r.lsd[1].per_direction[i])
            );
        }
        written.push(write(out_dir.join(format!("{}_lsd_direction.csv", r.subject_id)), &s)?);

        let mut s = String::from("freq_hz,lsd_left_db,lsd_right_db\n");
        for (k, f) in r.freqs.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt_float(*f),
                fmt_float(r.lsd[0].per_frequency[k]),
                fmt_float(r.lsd[1].per_frequency[k])
            );
        }
        written.push(write(out_dir.join(format!("{}_lsd_frequency.csv", r.subject_id)), &s)?);

        let mut s = String::from(
            "index,azimuth_deg,elevation_deg,excluded,onset_err_left_us,onset_err_right_us,itd_err_us\n",
        );
        for (i, d) in r.directions.iter().enumerate() {
            let e = r.onset.onset_error[i];
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{}",
                fmt_float(d.azimuth().to_degrees()),
                fmt_float(d.elevation().to_degrees()),
                u8::from(r.onset.excluded == Some(i)),
                fmt_float(e[0]),
                fmt_float(e[1]),
                fmt_float(r.onset.itd_error[i])
            );
        }
        written.push(write(out_dir.join(format!("{}_onset.csv", r.subject_id)), &s)?);

        summary.push_str(&summary_row(r));
        summary.push('\n');
    }
    written.push(write(out_dir.join("summary.csv"), &summary)?);
    Ok(written)
}
