use proptest::prelude::*;
use sphrtf::cap::{CapSpec, DegreeTable};
use sphrtf::geometry::{
    crop_cap, ear_sch_features, equivalent_head_radius, icosphere, load_mesh, normalization_factor, remesh_cap,
    spherical_parameterize, uniform_cap_grid, AnthroRecord, EarPatch, HeadRadiusModel, Side, TriMesh,
};
use sphrtf::synthetic::{subject_mesh, SphereSubjectSpec};

fn head(w: f64, h: f64, d: f64) -> AnthroRecord {
    let m = HeadRadiusModel::default();
    AnthroRecord::new(
        "H",
        vec![m.width_column.clone(), m.height_column.clone(), m.depth_column.clone()],
        vec![w, h, d],
    )
    .unwrap()
}

#[test]
fn equivalent_radius_of_a_cube_head() {
    let r = equivalent_head_radius(&head(0.18, 0.18, 0.18), &HeadRadiusModel::default()).unwrap();
    assert!((r - 0.09581).abs() < 1e-12, "{r}");
}

#[test]
fn factor_follows_the_radius_ratio() {
    let m = HeadRadiusModel::default();
    let reference = head(0.15, 0.2, 0.19);
    let r0 = equivalent_head_radius(&reference, &m).unwrap();
    // choose a width giving a radius 10% larger
    let w = 0.15 + 2.0 * 0.1 * r0 / m.width_coeff;
    let f = normalization_factor(&head(w, 0.2, 0.19), &reference, &m).unwrap();
    assert!((f - 1.10).abs() < 1e-12, "{f}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn radius_is_scale_covariant(w in 0.1f64..0.2, h in 0.1f64..0.25, d in 0.1f64..0.25, s in 0.5f64..2.0) {
        let m = HeadRadiusModel::default();
        let r1 = equivalent_head_radius(&head(w, h, d), &m).unwrap() - m.offset;
        let r2 = equivalent_head_radius(&head(s * w, s * h, s * d), &m).unwrap() - m.offset;
        prop_assert!((r2 - s * r1).abs() < 1e-14);
    }
}

#[test]
fn cap_grid_spacing_is_even() {
    let half = 25f64.to_radians();
    let grid = uniform_cap_grid(half, 9062);
    let pts: Vec<[f64; 3]> = grid.iter().map(|d| d.unit_vector()).collect();
    let nn: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let mean = nn.iter().sum::<f64>() / nn.len() as f64;
    let sd = (nn.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nn.len() as f64).sqrt();
    assert!(sd / mean < 0.25, "cv {}", sd / mean);
    assert!(grid.iter().all(|d| d.polar() <= half));
}

#[test]
fn zero_patch_has_zero_coefficients() {
    let spec = CapSpec::new(25f64.to_radians(), 6).unwrap();
    let table = DegreeTable::solve(&spec).unwrap();
    let grid = uniform_cap_grid(spec.half_angle(), 300);
    let patch = EarPatch {
        cap: spec,
        samples_xyz: vec![[0.0; 3]; grid.len()],
        grid,
    };
    let f = ear_sch_features(&patch, &table, Side::Left).unwrap();
    assert!(f.sch_xyz.as_slice().iter().all(|&v| v == 0.0));
    assert_eq!(f.sch_xyz.rows(), 49);
}

#[test]
fn bumped_head_keeps_sphere_connectivity() {
    let mut spec = SphereSubjectSpec::plain("B", 0.09);
    spec.bump_height = 0.006;
    spec.bump_width = 18f64.to_radians();
    let bumped = subject_mesh(&spec, 3).unwrap();
    let plain = icosphere(3);
    assert_eq!(bumped.faces(), plain.faces());
    let r = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let max = bumped.vertices().iter().map(r).fold(0.0, f64::max);
    assert!(max > 0.09 + 0.005 && max <= 0.09 + 0.006 + 1e-12);
}

#[test]
fn ear_patch_of_a_sphere_lies_on_it() {
    let mesh = icosphere(4).map_vertices(|v| [0.09 * v[0], 0.09 * v[1], 0.09 * v[2]]).unwrap();
    let map = spherical_parameterize(&mesh).unwrap();
    let ear = map.map_direction([0.0, 1.0, 0.0]).unwrap();
    let crop = crop_cap(&map, ear, 35f64.to_radians()).unwrap();
    let spec = CapSpec::new(25f64.to_radians(), 4).unwrap();
    let grid = uniform_cap_grid(spec.half_angle(), 500);
    let patch = remesh_cap(&crop, &grid, spec).unwrap();
    for p in &patch.samples_xyz {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        // chord sag of a level-4 icosphere stays under 0.2%
        assert!(r <= 0.09 + 1e-12 && r > 0.09 * 0.998, "{r}");
        assert!(p[1] > 0.0);
    }
}

#[test]
fn mesh_files_round_trip_and_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("head.mesh");
    let mesh = icosphere(1);
    mesh.save(&path).unwrap();
    let back = load_mesh(&path).unwrap();
    assert_eq!(back.faces(), mesh.faces());
    for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
        assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-12));
    }
    let bad = dir.path().join("bad.mesh");
    std::fs::write(&bad, "v 0 0 0\nv 1 0\n").unwrap();
    let msg = load_mesh(&bad).unwrap_err().to_string();
    assert!(msg.contains("line 2"), "{msg}");
    assert!(TriMesh::parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").is_err());
}
