use proptest::prelude::*;
use sphrtf::geometry::Side;
use sphrtf::hrtf::{detect_onsets, OnsetOptions};
use sphrtf::sphere::{Direction, DirectionSet};
use sphrtf::synthetic::{gen_subject, sphere_hrirs, sphere_hrtf, SphereSubjectSpec, SynthOptions, SPEED_OF_SOUND};

const C: f64 = SPEED_OF_SOUND;

fn freq_for_ka(ka: f64, a: f64) -> f64 {
    ka * C / (2.0 * std::f64::consts::PI * a)
}

fn ears() -> [Direction; 2] {
    [
        Direction::new(std::f64::consts::FRAC_PI_2, 0.0).unwrap(),
        Direction::new(-std::f64::consts::FRAC_PI_2, 0.0).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Swapping ear and source leaves the response unchanged.
    #[test]
    fn reciprocity(az1 in -3.1f64..3.1, el1 in -1.5f64..1.5, az2 in -3.1f64..3.1, el2 in -1.5f64..1.5, ka in 0.1f64..20.0) {
        let a = 0.0875;
        let (p, q) = (Direction::new(az1, el1).unwrap(), Direction::new(az2, el2).unwrap());
        let f = [freq_for_ka(ka, a)];
        let x = sphere_hrtf(a, &p, &q, &f, C).unwrap()[0];
        let y = sphere_hrtf(a, &q, &p, &f, C).unwrap()[0];
        prop_assert!((x - y).norm() < 1e-9 * (1.0 + x.norm()));
    }

    /// Mirroring ear and source through the median plane.
    #[test]
    fn left_right_mirror(az in -3.1f64..3.1, el in -1.5f64..1.5, ka in 0.1f64..20.0) {
        let a = 0.09;
        let [l, r] = ears();
        let s = Direction::new(az, el).unwrap();
        let f = [freq_for_ka(ka, a)];
        let x = sphere_hrtf(a, &l, &s, &f, C).unwrap()[0];
        let y = sphere_hrtf(a, &r, &s.mirrored(), &f, C).unwrap()[0];
        prop_assert!((x - y).norm() < 1e-9 * (1.0 + x.norm()));
    }

    #[test]
    fn response_is_bounded(az in -3.1f64..3.1, el in -1.5f64..1.5, ka in 0.01f64..30.0) {
        let a = 0.0875;
        let p = sphere_hrtf(a, &ears()[0], &Direction::new(az, el).unwrap(), &[freq_for_ka(ka, a)], C).unwrap()[0];
        prop_assert!(p.norm().is_finite() && p.norm() <= 3.0, "{}", p.norm());
    }
}

#[test]
fn near_side_is_boosted_and_back_has_a_bright_spot() {
    let a = 0.0875;
    let [l, _] = ears();
    let f = [freq_for_ka(1.0, a)];
    assert!(sphere_hrtf(a, &l, &l, &f, C).unwrap()[0].norm() > 1.0);
    // directly opposite the ear every path has the same length
    let opposite = l.mirrored();
    let hf = [freq_for_ka(10.0, a)];
    let back = sphere_hrtf(a, &l, &opposite, &hf, C).unwrap()[0].norm();
    let off = sphere_hrtf(a, &l, &Direction::new(-std::f64::consts::FRAC_PI_2 + 0.35, 0.0).unwrap(), &hf, C).unwrap()[0].norm();
    assert!(back > off, "{back} {off}");
}

#[test]
fn generation_is_deterministic() {
    let dirs = DirectionSet::fibonacci(30).unwrap();
    let spec = &SphereSubjectSpec::population(3, 7, 0.08, 0.095)[1];
    let opts = SynthOptions {
        mesh_subdivisions: 2,
        ..SynthOptions::default()
    };
    let a = gen_subject(spec, &dirs, 44_100.0, &opts).unwrap();
    let b = gen_subject(spec, &dirs, 44_100.0, &opts).unwrap();
    assert_eq!(a.archive, b.archive);
    assert_eq!(a.anthro, b.anthro);
    assert_eq!(a.mesh.vertices(), b.mesh.vertices());
}

#[test]
fn flat_subject_mesh_is_a_sphere() {
    let spec = SphereSubjectSpec::plain("P", 0.09);
    let mesh = sphrtf::synthetic::subject_mesh(&spec, 3).unwrap();
    for v in mesh.vertices() {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        assert!((r - 0.09).abs() < 1e-9);
    }
}

#[test]
fn lateral_itd_grows_with_radius() {
    let dirs = DirectionSet::new(vec![Direction::new(std::f64::consts::FRAC_PI_2, 0.0).unwrap()]).unwrap();
    let mut last = 0.0;
    for a in [0.07, 0.08, 0.09, 0.10] {
        let arch = sphere_hrirs("r", a, ears(), &dirs, 44_100.0, &SynthOptions::default()).unwrap();
        let f = detect_onsets(&arch, &OnsetOptions::default()).unwrap();
        let itd = (f.onset(0, Side::Left) - f.onset(0, Side::Right)).abs();
        assert!(itd > last, "{a}: {itd} <= {last}");
        last = itd;
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = SphereSubjectSpec::plain("X", 0.09);
    s.bump_height = 0.05;
    assert!(s.validate().is_err());
    assert!(SphereSubjectSpec::plain("Y", -1.0).validate().is_err());
}
