use proptest::prelude::*;
use sphrtf::eval::{emit_report, lsd, onset_itd_errors, MagnitudeScale, SubjectReport, SUMMARY_HEADER};
use sphrtf::hrtf::OnsetField;
use sphrtf::linalg::Matrix;
use sphrtf::sphere::DirectionSet;

fn field(dirs: &DirectionSet, f: impl Fn(usize) -> [f64; 2]) -> OnsetField {
    OnsetField::new(dirs.clone(), (0..dirs.len()).map(f).collect()).unwrap()
}

#[test]
fn identical_onsets_give_zero_error() {
    let dirs = DirectionSet::default_hrtf_layout();
    let a = field(&dirs, |i| [100.0 + i as f64, 120.0 - i as f64]);
    let r = onset_itd_errors(&a, &a).unwrap();
    assert_eq!(r.itd_stats().mean, 0.0);
    assert!(r.onset_error.iter().all(|e| e == &[0.0, 0.0]));
}

#[test]
fn one_ear_bias_shows_in_itd() {
    let dirs = DirectionSet::fibonacci(50).unwrap();
    let a = field(&dirs, |i| [i as f64, 2.0 * i as f64]);
    let b = field(&dirs, |i| [i as f64 + 10.0, 2.0 * i as f64]);
    let r = onset_itd_errors(&b, &a).unwrap();
    assert!((r.itd_stats().mean - 10.0).abs() < 1e-12);
    assert!(r.itd_stats().std < 1e-12);
    assert!((r.onset_stats(sphrtf::geometry::Side::Left).mean - 10.0).abs() < 1e-12);
    assert_eq!(r.onset_stats(sphrtf::geometry::Side::Right).mean, 0.0);
}

#[test]
fn excluded_direction_leaves_statistics() {
    let dirs = DirectionSet::default_hrtf_layout();
    let reference = field(&dirs, |_| [0.0, 0.0]);
    let pole = reference.excluded().unwrap();
    let predicted = field(&dirs, |i| if i == pole { [1e6, 0.0] } else { [0.0, 0.0] });
    let with = onset_itd_errors(&predicted, &reference).unwrap();
    assert_eq!(with.itd_stats().mean, 0.0);
    let without = onset_itd_errors(&predicted, &reference.with_excluded(None)).unwrap();
    assert!(without.itd_stats().mean > 0.0);
}

#[test]
fn mismatched_layouts_are_rejected() {
    let a = field(&DirectionSet::fibonacci(20).unwrap(), |_| [0.0; 2]);
    let b = field(&DirectionSet::fibonacci(21).unwrap(), |_| [0.0; 2]);
    assert!(onset_itd_errors(&a, &b).is_err());
}

fn grid(seed: u64, s: usize, k: usize) -> Matrix<f64> {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Matrix::from_fn(s, k, |_, _| {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        0.05 + (x >> 11) as f64 / (1u64 << 53) as f64
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lsd_decomposes_into_its_breakdowns(seed in any::<u64>(), s in 1usize..12, k in 1usize..9) {
        let (h, g) = (grid(seed, s, k), grid(seed ^ 0xABCD, s, k));
        let l = lsd(&h, &g, MagnitudeScale::Linear).unwrap();
        let by_dir = (l.per_direction.iter().map(|v| v * v).sum::<f64>() / s as f64).sqrt();
        let by_freq = (l.per_frequency.iter().map(|v| v * v).sum::<f64>() / k as f64).sqrt();
        prop_assert!((by_dir - l.global).abs() < 1e-12 * (1.0 + l.global));
        prop_assert!((by_freq - l.global).abs() < 1e-12 * (1.0 + l.global));
    }

    #[test]
    fn db_and_linear_inputs_agree(seed in any::<u64>()) {
        let (h, g) = (grid(seed, 5, 4), grid(seed.rotate_left(7), 5, 4));
        let db = |m: &Matrix<f64>| Matrix::from_fn(5, 4, |i, j| 20.0 * m.get(i, j).log10());
        let a = lsd(&h, &g, MagnitudeScale::Linear).unwrap();
        let b = lsd(&db(&h), &db(&g), MagnitudeScale::Db).unwrap();
        prop_assert!((a.global - b.global).abs() < 1e-10);
    }

    #[test]
    fn lsd_is_symmetric(seed in any::<u64>()) {
        let (h, g) = (grid(seed, 4, 6), grid(!seed, 4, 6));
        let a = lsd(&h, &g, MagnitudeScale::Linear).unwrap().global;
        let b = lsd(&g, &h, MagnitudeScale::Linear).unwrap().global;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

fn report(id: &str) -> SubjectReport {
    let dirs = DirectionSet::fibonacci(12).unwrap();
    let freqs = vec![500.0, 1000.0, 2000.0];
    let h = grid(1, 12, 3);
    let l = lsd(&h, &grid(2, 12, 3), MagnitudeScale::Linear).unwrap();
    let a = field(&dirs, |i| [i as f64, 0.0]);
    let onset = onset_itd_errors(&a, &field(&dirs, |_| [0.0; 2])).unwrap();
    SubjectReport {
        subject_id: id.into(),
        directions: dirs,
        freqs,
        lsd: [l.clone(), l],
        onset,
    }
}

#[test]
fn empty_report_is_only_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&[], dir.path()).unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), format!("{SUMMARY_HEADER}\n"));
}

#[test]
fn report_rows_and_reruns() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let reports = [report("S01"), report("S02")];
    let pa = emit_report(&reports, a.path()).unwrap();
    let pb = emit_report(&reports, b.path()).unwrap();
    assert_eq!(pa.len(), 7);
    let lines = |p: &std::path::Path| std::fs::read_to_string(p).unwrap().lines().count();
    assert_eq!(lines(&a.path().join("S01_lsd_direction.csv")), 13);
    assert_eq!(lines(&a.path().join("S01_lsd_frequency.csv")), 4);
    assert_eq!(lines(&a.path().join("S02_onset.csv")), 13);
    assert_eq!(lines(&a.path().join("summary.csv")), 3);
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}
