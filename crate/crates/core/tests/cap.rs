use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphrtf::cap::{
    cap_basis, cap_fit_options, legendre_real_degree, shape_descriptors, solve_cap_degrees, BoundaryFamily, CapSpec,
    DegreeTable, SchCoefficients,
};
use sphrtf::geometry::uniform_cap_grid;
use sphrtf::sh::assoc_legendre;
use sphrtf::sphere::{gauss_legendre, Direction, DirectionSet};
use std::sync::OnceLock;

fn half() -> f64 {
    25f64.to_radians()
}

fn table(k: usize) -> &'static DegreeTable {
    static T10: OnceLock<DegreeTable> = OnceLock::new();
    static T20: OnceLock<DegreeTable> = OnceLock::new();
    let cell = if k == 10 { &T10 } else { &T20 };
    cell.get_or_init(|| DegreeTable::solve(&CapSpec::new(half(), k).unwrap()).unwrap())
}

fn rotate(grid: &DirectionSet, angle: f64) -> DirectionSet {
    DirectionSet::new(
        grid.iter()
            .map(|d| Direction::new(d.azimuth() + angle, d.elevation()).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Rings of equally spaced azimuths, so cos and sin columns of equal order
/// get identical sample norms.
fn ring_grid(rings: usize, per_ring: usize) -> DirectionSet {
    let mut dirs = vec![Direction::new(0.0, std::f64::consts::FRAC_PI_2).unwrap()];
    for r in 1..=rings {
        let theta = half() * r as f64 / rings as f64;
        for j in 0..per_ring {
            let phi = std::f64::consts::TAU * j as f64 / per_ring as f64;
            dirs.push(Direction::from_polar(theta, phi).unwrap());
        }
    }
    DirectionSet::new(dirs).unwrap()
}

#[test]
fn degrees_for_m0_at_25_degrees() {
    let e = solve_cap_degrees(half(), 0, 2).unwrap();
    assert_eq!(e.len(), 3);
    assert!(e[0].degree < e[1].degree && e[1].degree < e[2].degree);
    assert_eq!(e[0].family, BoundaryFamily::Derivative);
    assert_eq!(e[1].family, BoundaryFamily::Value);
    assert!(e.iter().all(|x| x.residual < 1e-8));
}

#[test]
fn k10_band_limited_round_trip() {
    let spec = CapSpec::new(half(), 10).unwrap();
    let grid = uniform_cap_grid(half(), 2000);
    let basis = cap_basis::<f64>(&spec, table(10), &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q: Vec<f64> = (0..spec.coefficient_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = basis.reconstruct(&SchCoefficients::new(spec, q.clone()).unwrap()).unwrap();
    let fit = basis.fitter(cap_fit_options()).unwrap().fit(&f).unwrap();
    let err: f64 = fit.values().iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err / norm < 1e-8, "{}", err / norm);
}

#[test]
fn gaussian_bump_refines_from_k10_to_k20() {
    let spec = CapSpec::new(half(), 20).unwrap();
    let grid = uniform_cap_grid(half(), 9062);
    let full = cap_basis::<f64>(&spec, table(20), &grid).unwrap();
    let f: Vec<f64> = grid.iter().map(|d| (-d.polar().powi(2) / 0.02).exp()).collect();
    let residual = |k: usize| {
        let b = full.truncated(k).unwrap();
        let q = b.fitter(cap_fit_options()).unwrap().fit(&f).unwrap();
        let r = b.reconstruct(&q).unwrap();
        r.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let (r10, r20) = (residual(10), residual(20));
    assert!(r20 < r10, "{r10} {r20}");
}

#[test]
fn k20_basis_has_441_columns() {
    let grid = uniform_cap_grid(half(), 500);
    let b = cap_basis::<f64>(&CapSpec::new(half(), 20).unwrap(), table(20), &grid).unwrap();
    assert_eq!(b.matrix().cols(), 441);
    let k4 = b.truncated(4).unwrap();
    assert_eq!(k4.matrix().cols(), 25);
}

/// Columns with equal m and equal boundary family are orthogonal under
/// the cap measure; checked with Gauss–Legendre in cos θ.
#[test]
fn within_family_orthogonality() {
    let t = table(10);
    let (nodes, weights) = gauss_legendre(64);
    let c0 = half().cos();
    for m in 0..=4usize {
        for fam in [BoundaryFamily::Derivative, BoundaryFamily::Value] {
            let degs: Vec<f64> = (m..=10)
                .filter(|&k| BoundaryFamily::for_index(k, m) == fam)
                .map(|k| t.get(k, m).unwrap().degree)
                .collect();
            // radial inner products; the azimuthal factor is common to the family
            let radial = |a: f64, b: f64| -> f64 {
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&u, &w)| {
                        let x = c0 + (1.0 - c0) * (u + 1.0) / 2.0;
                        let pa = legendre_real_degree(a, m, x).unwrap();
                        let pb = legendre_real_degree(b, m, x).unwrap();
                        w * (1.0 - c0) / 2.0 * pa * pb
                    })
                    .sum()
            };
            for i in 0..degs.len() {
                for j in i + 1..degs.len() {
                    let g = radial(degs[i], degs[j]) / (radial(degs[i], degs[i]) * radial(degs[j], degs[j])).sqrt();
                    assert!(g.abs() < 1e-4, "m {m} {fam:?} {i} {j}: {g}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn integer_degrees_agree(l in 0usize..=10, m in 0usize..=10, x in -0.99f64..1.0) {
        prop_assume!(m <= l);
        let a = assoc_legendre::<f64>(l, m as i64, x).unwrap();
        let b = legendre_real_degree(l as f64, m, x).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} {}", a, b);
    }

    #[test]
    fn descriptors_survive_rotation_about_the_axis(seed in any::<u64>(), angle in 0.0f64..6.283) {
        let spec = CapSpec::new(half(), 10).unwrap();
        let grid = ring_grid(24, 48);
        let basis = cap_basis::<f64>(&spec, table(10), &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..spec.coefficient_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = SchCoefficients::new(spec, q).unwrap();
        // the same function sampled in a frame turned by `angle`
        let turned = basis.evaluate_at(table(10), &rotate(&grid, angle)).unwrap();
        let f = turned.matvec(q.values()).unwrap();
        let fit = basis.fitter(cap_fit_options()).unwrap().fit(&f).unwrap();
        let (d0, d1) = (shape_descriptors(&q), shape_descriptors(&fit));
        for (a, b) in d0.iter().zip(&d1) {
            prop_assert!((a - b).abs() < 1e-6, "{} {}", a, b);
        }
    }

    #[test]
    fn residual_is_non_increasing_in_k(seed in any::<u64>()) {
        let spec = CapSpec::new(half(), 10).unwrap();
        let grid = uniform_cap_grid(half(), 600);
        let full = cap_basis::<f64>(&spec, table(10), &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let b = full.truncated(k).unwrap();
            let q = b.fitter(cap_fit_options()).unwrap().fit(&f).unwrap();
            let r: f64 = b.reconstruct(&q).unwrap().iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(r <= last * (1.0 + 1e-12), "k {}: {} > {}", k, r, last);
            last = r;
        }
    }
}
