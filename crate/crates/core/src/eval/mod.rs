//! Prediction metrics and report files.

pub mod lsd;
pub mod onset;
pub mod report;

pub use lsd::{lsd, lsd_db_rows, Lsd, MagnitudeScale};
pub use onset::{onset_itd_errors, stats, OnsetReport, Stats};
pub use report::{emit_report, fmt_float, SubjectReport, SUMMARY_HEADER};
