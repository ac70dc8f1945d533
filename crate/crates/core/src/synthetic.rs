//! Rigid-sphere head model: analytic HRTFs, HRIRs, Woodworth ITDs and
//! matching head meshes with pinna-like bumps.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::anthro::DEFAULT_COLUMNS;
use crate::geometry::mesh::{dot, icosphere, scale};
use crate::geometry::{AnthroRecord, Side, TriMesh};
use crate::hrtf::HrirArchive;
use crate::sphere::{Direction, DirectionSet};

pub const SPEED_OF_SOUND: f64 = 343.0;
const SERIES_TOL: f64 = 1e-10;
const MAX_TERMS: usize = 2000;

/// Per-order factors `(2n+1)·i^{n+1}·(−1)^n / ((ka)²·h_n'(ka))` of the
/// plane-wave rigid-sphere surface pressure, so that
/// `p(Θ) = Σ_n factor_n · P_n(cos Θ)` (`e^{−iωt}` convention).
fn series_factors(ka: f64) -> Result<Vec<Complex64>> {
    if ka == 0.0 {
        return Ok(vec![Complex64::new(1.0, 0.0)]);
    }
    let x = ka;
    let (s, c) = x.sin_cos();
    // spherical Bessel j_n, y_n by upward recurrence; the j_n error growth
    // stays far below |y_n| once n > x, so h_n keeps full relative accuracy
    let mut j = vec![s / x, s / (x * x) - c / x];
    let mut y = vec![-c / x, -c / (x * x) - s / x];
    let mut out = Vec::new();
    let mut peak = 0.0f64;
    let mut i_pow = Complex64::new(0.0, 1.0); // i^{n+1}
    for n in 0..MAX_TERMS {
        if j.len() < n + 2 {
            let k = j.len() - 1;
            let f = (2 * k + 1) as f64 / x;
            j.push(f * j[k] - j[k - 1]);
            y.push(f * y[k] - y[k - 1]);
        }
        // h_n' = h_{n−1} − (n+1)/x h_n, with h_{−1} = j_{−1} + i y_{−1} = (cos x + i sin x)/x
        let h = Complex64::new(j[n], y[n]);
        let h_prev = if n == 0 {
            Complex64::new(c / x, s / x)
        } else {
            Complex64::new(j[n - 1], y[n - 1])
        };
        let dh = h_prev - h * ((n + 1) as f64 / x);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let term = i_pow * ((2 * n + 1) as f64 * sign) / (dh * (x * x));
        let mag = term.norm();
        if !mag.is_finite() {
            break;
        }
        peak = peak.max(mag);
        out.push(term);
        if n as f64 > x && mag < SERIES_TOL * peak {
            return Ok(out);
        }
        i_pow *= Complex64::new(0.0, 1.0);
    }
    if out.len() > x as usize && out.last().map_or(false, |t| t.norm() < SERIES_TOL * peak) {
        return Ok(out);
    }
    Err(Error::NonConvergence {
        what: format!("rigid-sphere series at ka = {ka}"),
        terms: out.len(),
    })
}

fn legendre_sum(factors: &[Complex64], x: f64) -> Complex64 {
    let mut p_prev = 1.0;
    let mut p = x;
    let mut acc = factors[0];
    if factors.len() > 1 {
        acc += factors[1] * p;
    }
    for (n, f) in factors.iter().enumerate().skip(2) {
        let next = ((2 * n - 1) as f64 * x * p - (n - 1) as f64 * p_prev) / n as f64;
        p_prev = p;
        p = next;
        acc += f * p;
    }
    acc
}

/// Free-field-normalized pressure at `ear` on a rigid sphere of radius `a`
/// for a distant source, one value per frequency, in the forward-DFT sign
/// convention (a delay `τ` contributes `e^{−i2πfτ}`).
pub fn sphere_hrtf(a: f64, ear: &Direction, source: &Direction, freqs: &[f64], c: f64) -> Result<Vec<Complex64>> {
    if !(a > 0.0) || freqs.iter().any(|&f| !(f >= 0.0)) {
        return Err(Error::Invalid("radius must be positive and frequencies non-negative".into()));
    }
    let cos_angle = dot(ear.unit_vector(), source.unit_vector()).clamp(-1.0, 1.0);
    freqs
        .iter()
        .map(|&f| {
            let ka = 2.0 * std::f64::consts::PI * f * a / c;
            Ok(legendre_sum(&series_factors(ka)?, cos_angle).conj())
        })
        .collect()
}

/// Woodworth ITD (µs) as `onset_left − onset_right`; azimuth is measured
/// toward the left, so left-side sources give negative values.
pub fn woodworth_itd(a: f64, azimuth: f64, c: f64) -> f64 {
    -(a / c) * (azimuth + azimuth.sin()) * 1e6
}

/// Parameters of one synthetic subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSubjectSpec {
    pub subject_id: String,
    pub head_radius: f64,
    /// Ears sit at azimuth `±(90° + ear_azimuth_offset)`, elevation `ear_elevation_offset`.
    pub ear_azimuth_offset: f64,
    pub ear_elevation_offset: f64,
    pub bump_height: f64,
    /// Angular radius of the cosine-taper bump.
    pub bump_width: f64,
    pub seed: u64,
}

impl SphereSubjectSpec {
    pub fn plain(subject_id: impl Into<String>, head_radius: f64) -> Self {
        Self {
            subject_id: subject_id.into(),
            head_radius,
            ear_azimuth_offset: 0.0,
            ear_elevation_offset: 0.0,
            bump_height: 0.0,
            bump_width: 0.3,
            seed: 0,
        }
    }

    /// `n` subjects with radii evenly spaced over `[r_min, r_max]`. Ear
    /// placement, bump and torso all follow the radius, so the population is
    /// a one-parameter family; `seed` only drives small measurement jitter.
    pub fn population(n: usize, seed: u64, r_min: f64, r_max: f64) -> Vec<Self> {
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64));
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                let a = r_min + (r_max - r_min) * t;
                Self {
                    subject_id: format!("S{:02}", i + 1),
                    head_radius: a,
                    ear_azimuth_offset: 0.0,
                    ear_elevation_offset: 0.0,
                    bump_height: 0.07 * a,
                    bump_width: 18f64.to_radians(),
                    seed: rng.gen(),
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.head_radius > 0.0) {
            return Err(Error::Invalid("head radius must be positive".into()));
        }
        if !(self.bump_height >= 0.0 && self.bump_height < self.head_radius / 4.0) {
            return Err(Error::Invalid("bump height must lie in [0, a/4)".into()));
        }
        if !(self.bump_width > 0.0 && self.bump_width < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Invalid("bump width must lie in (0, π/2)".into()));
        }
        Ok(())
    }

    pub fn ear_direction(&self, side: Side) -> Direction {
        let az = std::f64::consts::FRAC_PI_2 + self.ear_azimuth_offset;
        match side {
            Side::Left => Direction::new(az, self.ear_elevation_offset),
            Side::Right => Direction::new(-az, self.ear_elevation_offset),
        }
        .expect("finite ear angles")
    }

    /// Radial distance of the head surface along unit vector `v`.
    pub fn surface_radius(&self, v: [f64; 3]) -> f64 {
        let mut r = self.head_radius;
        if self.bump_height > 0.0 {
            for side in Side::BOTH {
                let psi = dot(v, self.ear_direction(side).unit_vector()).clamp(-1.0, 1.0).acos();
                if psi < self.bump_width {
                    r += self.bump_height * 0.5 * (1.0 + (std::f64::consts::PI * psi / self.bump_width).cos());
                }
            }
        }
        r
    }

    /// Thirteen measurements consistent with the head radius, ear placement
    /// and bump, with seed-driven jitter on the torso-related entries.
    pub fn anthro(&self) -> Result<AnthroRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut jitter = |scale: f64| 1.0 + scale * rng.gen_range(-1.0..1.0);
        let a = self.head_radius;
        // body proportions scale with the head
        let s = a / 0.0875;
        let values = vec![
            2.0 * a + 2.0 * self.bump_height,
            2.0 * a * jitter(0.001),
            2.0 * a * jitter(0.001),
            0.03 - a * self.ear_elevation_offset.sin(),
            0.01 + a * self.ear_azimuth_offset.sin(),
            0.11 * s * jitter(0.002),
            0.08 * s * jitter(0.002),
            0.12 * s * jitter(0.002),
            0.30 * s * jitter(0.002),
            0.45 * s * jitter(0.002),
            0.02 * s * jitter(0.002),
            2.0 * std::f64::consts::PI * a * 1.05 * jitter(0.001),
            1.10 * jitter(0.002),
        ];
        AnthroRecord::new(
            self.subject_id.clone(),
            DEFAULT_COLUMNS.iter().map(|s| s.to_string()).collect(),
            values,
        )
    }
}

/// HRIR synthesis settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub ir_length: usize,
    /// Transform length used to sample the analytic spectrum.
    pub fft_length: usize,
    /// Arrival delay (samples) of the wavefront at the head center.
    pub base_delay: f64,
    /// Raised-cosine roll-off band (Hz) applied before the inverse transform.
    pub taper_start: f64,
    pub taper_end: f64,
    pub speed_of_sound: f64,
    pub mesh_subdivisions: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            ir_length: 256,
            fft_length: 1024,
            base_delay: 48.0,
            taper_start: 16_000.0,
            taper_end: 20_000.0,
            speed_of_sound: SPEED_OF_SOUND,
            mesh_subdivisions: 4,
        }
    }
}

/// Generated data for one subject.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub archive: HrirArchive,
    pub mesh: TriMesh,
    pub anthro: AnthroRecord,
    pub ears: [Direction; 2],
}

/// HRIRs of a sphere of radius `a` at ear directions `ears` over `dirs`.
pub fn sphere_hrirs(
    subject_id: &str,
    a: f64,
    ears: [Direction; 2],
    dirs: &DirectionSet,
    sample_rate: f64,
    opts: &SynthOptions,
) -> Result<HrirArchive> {
    let n = opts.fft_length;
    if n < opts.ir_length || n % 2 != 0 {
        return Err(Error::Invalid("fft length must be even and at least the IR length".into()));
    }
    let half = n / 2;
    let factors = (0..=half)
        .map(|k| {
            let f = k as f64 * sample_rate / n as f64;
            series_factors(2.0 * std::f64::consts::PI * f * a / opts.speed_of_sound)
        })
        .collect::<Result<Vec<_>>>()?;
    let taper: Vec<f64> = (0..=half)
        .map(|k| {
            let f = k as f64 * sample_rate / n as f64;
            if f <= opts.taper_start {
                1.0
            } else if f >= opts.taper_end {
                0.0
            } else {
                let t = (f - opts.taper_start) / (opts.taper_end - opts.taper_start);
                0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        })
        .collect();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    HrirArchive::from_fn(subject_id, sample_rate, dirs.clone(), opts.ir_length, |d, side| {
        let ear = ears[side.index()].unit_vector();
        let cos_angle = dot(ear, dirs.as_slice()[d].unit_vector()).clamp(-1.0, 1.0);
        for k in 0..=half {
            let p = legendre_sum(&factors[k], cos_angle).conj();
            let phase = -2.0 * std::f64::consts::PI * k as f64 * opts.base_delay / n as f64;
            let mut v = p * Complex64::from_polar(taper[k], phase);
            if k == half {
                v = Complex64::new(v.re, 0.0);
            }
            buf[k] = v;
            if k > 0 && k < half {
                buf[n - k] = v.conj();
            }
        }
        ifft.process(&mut buf);
        buf[..opts.ir_length].iter().map(|c| c.re / n as f64).collect()
    })
}

/// Icosphere of radius `a` with a cosine-taper bump centered on each ear.
pub fn subject_mesh(spec: &SphereSubjectSpec, subdivisions: usize) -> Result<TriMesh> {
    icosphere(subdivisions).map_vertices(|v| scale(v, spec.surface_radius(v)))
}

pub fn gen_subject(spec: &SphereSubjectSpec, dirs: &DirectionSet, sample_rate: f64, opts: &SynthOptions) -> Result<SyntheticSubject> {
    spec.validate()?;
    let ears = [spec.ear_direction(Side::Left), spec.ear_direction(Side::Right)];
    let archive = sphere_hrirs(&spec.subject_id, spec.head_radius, ears, dirs, sample_rate, opts)?;
    Ok(SyntheticSubject {
        archive,
        mesh: subject_mesh(spec, opts.mesh_subdivisions)?,
        anthro: spec.anthro()?,
        ears,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_is_unity() {
        let ear = Direction::from_degrees(90.0, 0.0).unwrap();
        for az in [0.0, 45.0, 180.0, 270.0] {
            let src = Direction::from_degrees(az, 10.0).unwrap();
            let h = sphere_hrtf(0.0875, &ear, &src, &[0.0, 1.0], SPEED_OF_SOUND).unwrap();
            assert!((h[0].norm() - 1.0).abs() < 1e-12);
            assert!((h[1].norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn woodworth_reference_value() {
        let v = woodworth_itd(0.0875, std::f64::consts::FRAC_PI_2, SPEED_OF_SOUND);
        assert!((v.abs() - 655.8).abs() < 0.1, "{v}");
        assert_eq!(woodworth_itd(0.0875, 0.0, SPEED_OF_SOUND), 0.0);
        assert_eq!(woodworth_itd(0.09, 0.3, 343.0), -woodworth_itd(0.09, -0.3, 343.0));
    }
}
