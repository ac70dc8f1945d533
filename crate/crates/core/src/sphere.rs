//! Directions on the unit sphere and the sampling layouts used throughout.
//!
//! Azimuth is measured counter-clockwise from the front (+x) toward the left
//! (+y), elevation upward from the horizontal plane. The polar angle used by
//! the basis functions is `π/2 − elevation`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

/// A single direction given by azimuth and elevation in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    /// Builds a direction, wrapping azimuth into `[0, 2π)`.
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::Domain("direction angles must be finite".into()));
        }
        if elevation.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::Domain(format!(
                "elevation {elevation} outside [-pi/2, pi/2]"
            )));
        }
        Ok(Self {
            azimuth: wrap_azimuth(azimuth),
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
        })
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    /// Direction with polar angle `theta` (from +z) and azimuth `phi`.
    pub fn from_polar(theta: f64, phi: f64) -> Result<Self> {
        Self::new(phi, FRAC_PI_2 - theta)
    }

    /// Direction of a non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain("zero or non-finite direction vector".into()));
        }
        let el = (v[2] / r).clamp(-1.0, 1.0).asin();
        let az = if v[0] == 0.0 && v[1] == 0.0 {
            0.0
        } else {
            v[1].atan2(v[0])
        };
        Self::new(az, el)
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    /// Polar angle θ measured from the +z axis.
    pub fn polar(&self) -> f64 {
        FRAC_PI_2 - self.elevation
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [ce * ca, ce * sa, se]
    }

    /// Great-circle angle to another direction.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        angle_between(a, b)
    }

    /// Left-right mirror image (azimuth negated).
    pub fn mirrored(&self) -> Direction {
        Direction {
            azimuth: wrap_azimuth(-self.azimuth),
            elevation: self.elevation,
        }
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    let w = az.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Numerically robust angle between two (not necessarily unit) vectors.
pub fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    cn.atan2(dot)
}

/// Ordered list of sampling directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    directions: Vec<Direction>,
}

impl DirectionSet {
    pub fn new(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::Invalid("direction set must not be empty".into()));
        }
        Ok(Self { directions })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Direction> {
        self.directions.iter()
    }

    pub fn as_slice(&self) -> &[Direction] {
        &self.directions
    }

    pub fn get(&self, i: usize) -> Option<&Direction> {
        self.directions.get(i)
    }

    /// Index of the direction closest to `target`.
    pub fn nearest(&self, target: &Direction) -> usize {
        let mut best = 0;
        let mut best_angle = f64::INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let a = d.angle_to(target);
            if a < best_angle {
                best_angle = a;
                best = i;
            }
        }
        best
    }

    /// Indices of directions at the bottom pole (elevation −90°).
    pub fn bottom_pole_indices(&self) -> Vec<usize> {
        self.directions
            .iter()
            .enumerate()
            .filter(|(_, d)| (d.elevation + FRAC_PI_2).abs() < 1e-9)
            .map(|(i, _)| i)
            .collect()
    }

    /// For each direction, the index of its left-right mirror image, when the
    /// set contains one (within `tol` radians).
    pub fn mirror_indices(&self, tol: f64) -> Vec<Option<usize>> {
        self.directions
            .iter()
            .map(|d| {
                let m = d.mirrored();
                let j = self.nearest(&m);
                (self.directions[j].angle_to(&m) <= tol).then_some(j)
            })
            .collect()
    }

    /// Elevation rings from the top pole down to the bottom pole, with the
    /// per-ring count proportional to `cos(elevation)`.
    ///
    /// Rings are `ring_step_deg` apart and both poles hold a single point. The
    /// equator ring count is a multiple of four so that ±90° azimuth are
    /// sampled. Azimuths start at 0 in every ring, which makes the layout
    /// mirror-symmetric about the median plane.
    pub fn ring_layout(total: usize, ring_step_deg: f64) -> Result<Self> {
        let n_rings_half = (90.0 / ring_step_deg).round() as i64;
        if n_rings_half < 1 || ((n_rings_half as f64) * ring_step_deg - 90.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "ring step {ring_step_deg} must divide 90 degrees"
            )));
        }
        let elevations: Vec<f64> = (1..2 * n_rings_half)
            .map(|i| 90.0 - i as f64 * ring_step_deg)
            .collect();
        let budget = total as i64 - 2;
        if budget < 4 * elevations.len() as i64 {
            return Err(Error::Invalid(format!(
                "{total} points are too few for {} rings",
                elevations.len()
            )));
        }
        let weight_sum: f64 = elevations.iter().map(|e| e.to_radians().cos()).sum();
        let scale = budget as f64 / weight_sum;
        let ideal: Vec<f64> = elevations
            .iter()
            .map(|e| scale * e.to_radians().cos())
            .collect();
        let equator = elevations.iter().position(|e| e.abs() < 1e-9);
        let mut counts: Vec<i64> = ideal
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if Some(i) == equator {
                    (4 * (x / 4.0).round() as i64).max(4)
                } else {
                    (x.floor() as i64).max(1)
                }
            })
            .collect();
        // Distribute the remainder by largest fractional part, skipping the equator.
        let mut order: Vec<usize> = (0..counts.len()).filter(|&i| Some(i) != equator).collect();
        order.sort_by(|&a, &b| {
            let fa = ideal[a] - counts[a] as f64;
            let fb = ideal[b] - counts[b] as f64;
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let mut deficit = budget - counts.iter().sum::<i64>();
        let mut k = 0;
        while deficit != 0 {
            let i = order[k % order.len()];
            if deficit > 0 {
                counts[i] += 1;
                deficit -= 1;
            } else if counts[i] > 1 {
                counts[i] -= 1;
                deficit += 1;
            }
            k += 1;
        }
        let mut dirs = Vec::with_capacity(total);
        dirs.push(Direction::new(0.0, FRAC_PI_2)?);
        for (e, &n) in elevations.iter().zip(&counts) {
            for j in 0..n {
                dirs.push(Direction::new(TAU * j as f64 / n as f64, e.to_radians())?);
            }
        }
        dirs.push(Direction::new(0.0, -FRAC_PI_2)?);
        Self::new(dirs)
    }

    /// The 440-direction layout used for the HRIR archives.
    pub fn default_hrtf_layout() -> Self {
        Self::ring_layout(440, 10.0).expect("static layout parameters are valid")
    }

    /// Fibonacci (golden-angle) spiral over the whole sphere.
    pub fn fibonacci(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("fibonacci grid needs n >= 1".into()));
        }
        let golden = PI * (3.0 - 5f64.sqrt());
        let dirs = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                Direction::new(golden * i as f64, z.asin())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dirs)
    }

    /// Product Gauss rule: Gauss–Legendre in `cos θ` times uniform azimuth.
    /// Returns the directions and quadrature weights summing to `4π`.
    ///
    /// Exact for spherical polynomials of degree `< min(2 n_theta, n_phi)`.
    pub fn gauss_product(n_theta: usize, n_phi: usize) -> Result<(Self, Vec<f64>)> {
        let (nodes, weights) = gauss_legendre(n_theta);
        let mut dirs = Vec::with_capacity(n_theta * n_phi);
        let mut w = Vec::with_capacity(n_theta * n_phi);
        for (x, wx) in nodes.iter().zip(&weights) {
            for j in 0..n_phi {
                dirs.push(Direction::new(TAU * j as f64 / n_phi as f64, x.asin())?);
                w.push(wx * TAU / n_phi as f64);
            }
        }
        Ok((Self::new(dirs)?, w))
    }
}

impl<'a> IntoIterator for &'a DirectionSet {
    type Item = &'a Direction;
    type IntoIter = std::slice::Iter<'a, Direction>;

    fn into_iter(self) -> Self::IntoIter {
        self.directions.iter()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
