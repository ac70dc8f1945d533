use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphrtf::linalg::{FitOptions, LeastSquares, Matrix};
use sphrtf::sh::{assoc_legendre, real_sh_basis, sh_index, ShCoefficients};
use sphrtf::sphere::{Direction, DirectionSet};

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn residual(basis: &Matrix<f64>, c: &[f64], f: &[f64]) -> f64 {
    let y = basis.matvec(c).unwrap();
    y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn legendre_against_closed_form() {
    for i in 0..=20 {
        let x = -1.0 + 0.1 * i as f64;
        let closed = -3.0 * x * (1.0 - x * x).sqrt();
        assert!((assoc_legendre::<f64>(2, 1, x).unwrap() - closed).abs() < 1e-13);
        let p33 = -15.0 * (1.0 - x * x).powf(1.5);
        assert!((assoc_legendre::<f64>(3, 3, x).unwrap() - p33).abs() < 1e-12);
    }
}

#[test]
fn constant_samples_fit_to_root_four_pi() {
    let grid = DirectionSet::fibonacci(300).unwrap();
    let basis = real_sh_basis::<f64>(7, &grid);
    let c = basis.fit(&vec![1.0; grid.len()]).unwrap();
    let root = (4.0 * std::f64::consts::PI).sqrt();
    assert!((c.get(0, 0) - root).abs() < 1e-9);
    assert!(c.values()[1..].iter().all(|v| v.abs() < 1e-9));

    let mut v = vec![0.0; 64];
    v[0] = root;
    let ones = basis.reconstruct(&ShCoefficients::new(7, v).unwrap()).unwrap();
    assert!(ones.iter().all(|x| (x - 1.0).abs() < 1e-12));
    let zeros = basis.reconstruct(&ShCoefficients::zeros(7)).unwrap();
    assert!(zeros.iter().all(|&x| x == 0.0));
}

#[test]
fn order_seven_has_sixty_four_columns() {
    let grid = DirectionSet::default_hrtf_layout();
    assert_eq!(grid.len(), 440);
    assert_eq!(real_sh_basis::<f64>(7, &grid).matrix().cols(), 64);
    assert_eq!(sh_index(7, 7), 63);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn band_limited_round_trip(order in 0usize..=10, seed in any::<u64>()) {
        let n = (order + 1) * (order + 1);
        let grid = DirectionSet::fibonacci(4 * n + 8).unwrap();
        let basis = real_sh_basis::<f64>(order, &grid);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = basis.reconstruct(&ShCoefficients::new(order, c.clone()).unwrap()).unwrap();
        let fit = basis.fit(&f).unwrap();
        let back = basis.reconstruct(&fit).unwrap();
        prop_assert!(rel_l2(&back, &f) < 1e-8);
        prop_assert!(rel_l2(fit.values(), &c) < 1e-8);
    }

    #[test]
    fn perturbing_a_fit_increases_the_residual(seed in any::<u64>(), j in 0usize..25, eps in 1e-4f64..1e-1) {
        let grid = DirectionSet::fibonacci(120).unwrap();
        let basis = real_sh_basis::<f64>(4, &grid);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = basis.fit(&f).unwrap().into_values();
        let r0 = residual(basis.matrix(), &c, &f);
        for s in [eps, -eps] {
            let mut p = c.clone();
            p[j] += s;
            prop_assert!(residual(basis.matrix(), &p, &f) > r0);
        }
    }

    #[test]
    fn canonical_index_matches_column(l in 0usize..8, mm in 0i64..15, az in 0.0f64..6.28, el in -1.5f64..1.5) {
        let m = mm % (2 * l as i64 + 1) - l as i64;
        let d = Direction::new(az, el).unwrap();
        let grid = DirectionSet::new(vec![d]).unwrap();
        let basis = real_sh_basis::<f64>(7, &grid);
        let idx = (l * l) as i64 + l as i64 + m;
        prop_assert_eq!(sh_index(l, m) as i64, idx);
        // column idx carries azimuthal dependence cos(mφ) or sin(|m|φ)
        let x = d.polar().cos();
        let p = assoc_legendre::<f64>(l, m.abs(), x).unwrap();
        let v = basis.matrix().get(0, idx as usize);
        let trig = if m >= 0 { (m as f64 * az).cos() } else { (m.abs() as f64 * az).sin() };
        if p.abs() > 1e-6 && trig.abs() > 1e-6 {
            prop_assert!(v != 0.0);
        }
    }
}

#[test]
fn least_squares_with_identity() {
    let m: Matrix<f64> = Matrix::identity(5);
    let ls = LeastSquares::new(&m, FitOptions::default()).unwrap();
    let f = vec![1.0, -2.0, 3.5, 0.0, 7.0];
    let c = ls.solve(&f).unwrap();
    for (a, b) in c.iter().zip(&f) {
        assert!((a - b).abs() < 1e-14);
    }
}
