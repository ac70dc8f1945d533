//! HRIR archives and their conversion into SH training targets.

pub mod archive;
pub mod magnitude;
pub mod onset;
pub mod targets;

pub use archive::HrirArchive;
pub use magnitude::{default_frequencies, log_frequencies, magnitude_extract, to_db, MagnitudeTensor, DB_FLOOR};
pub use onset::{detect_onsets, itd_from_onsets, onset_samples, OnsetField, OnsetOptions};
pub use targets::{ShTargets, SmoothingError, TargetExtractor, MAGNITUDE_ORDER, ONSET_ORDER};
