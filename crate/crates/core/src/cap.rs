//! Spherical cap harmonic analysis.
//!
//! Cap harmonics on a cap of half-angle `θc` use associated Legendre functions
//! of real degree `l(m)_k`. For each order `m` two boundary families are
//! combined: `dP/dθ(θc) = 0` when `k − m` is even and `P(cos θc) = 0` when
//! `k − m` is odd. Basis columns follow the SH layout with `k` in place of
//! `l`: `(k, m)` lives at `k² + k + m`.
//!
//! Real-degree functions are evaluated by summing the Gauss hypergeometric
//! series about `x = 1` at the two lowest degrees congruent to the target
//! (where the series has no cancellation) and recurring upward in degree.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{FitOptions, LeastSquares, Matrix};
use crate::scalar::Real;
use crate::sh::{read_coefficient_record, sh_index, write_coefficient_record};
use crate::sphere::DirectionSet;

const SERIES_MAX_TERMS: usize = 100_000;

/// Boundary residual accepted for a solved degree.
pub const DEGREE_RESIDUAL_TOL: f64 = 1e-8;

/// Cap geometry and truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapSpec {
    half_angle: f64,
    max_index: usize,
}

impl CapSpec {
    pub fn new(half_angle: f64, max_index: usize) -> Result<Self> {
        if !(half_angle > 0.0 && half_angle <= std::f64::consts::FRAC_PI_2 + 1e-15) {
            return Err(Error::Domain(format!(
                "cap half-angle {half_angle} must lie in (0, pi/2]"
            )));
        }
        Ok(Self {
            half_angle: half_angle.min(std::f64::consts::FRAC_PI_2),
            max_index,
        })
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn coefficient_count(&self) -> usize {
        (self.max_index + 1) * (self.max_index + 1)
    }
}

/// Which boundary condition a degree satisfies at the rim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryFamily {
    /// `dP/dθ = 0` at the rim (`k − m` even).
    Derivative,
    /// `P = 0` at the rim (`k − m` odd).
    Value,
}

impl BoundaryFamily {
    pub fn for_index(k: usize, m: usize) -> Self {
        if (k - m) % 2 == 0 {
            BoundaryFamily::Derivative
        } else {
            BoundaryFamily::Value
        }
    }
}

impl fmt::Display for BoundaryFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryFamily::Derivative => write!(f, "derivative"),
            BoundaryFamily::Value => write!(f, "value"),
        }
    }
}

impl std::str::FromStr for BoundaryFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derivative" => Ok(BoundaryFamily::Derivative),
            "value" => Ok(BoundaryFamily::Value),
            other => Err(Error::Parse {
                location: "degree table".into(),
                message: format!("unknown boundary family '{other}'"),
            }),
        }
    }
}

/// Gauss hypergeometric series `₂F₁(a, b; c; z)`.
fn hypergeometric<T: Real>(a: T, b: T, c: T, z: T) -> Result<T> {
    let mut term = T::one();
    let mut sum = T::one();
    let eps = T::epsilon();
    let mut small_run = 0;
    for n in 0..SERIES_MAX_TERMS {
        let nf = T::from_usize_lossy(n);
        term = term * (a + nf) * (b + nf) / ((c + nf) * (nf + T::one())) * z;
        sum += term;
        if term == T::zero() {
            return Ok(sum);
        }
        if term.abs() <= eps * sum.abs() {
            small_run += 1;
            if small_run >= 2 {
                return Ok(sum);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::NonConvergence {
        what: format!("2F1({a}, {b}; {c}; {z})"),
        terms: SERIES_MAX_TERMS,
    })
}

/// `sin^m θ · ₂F₁(m − ν, ν + m + 1; m + 1; sin²(θ/2))`, i.e. `P_ν^m(cos θ)`
/// without its degree-dependent prefactor.
fn reduced_series<T: Real>(nu: T, m: usize, theta: T) -> Result<T> {
    let mf = T::from_usize_lossy(m);
    let half = (theta / T::lit(2.0)).sin();
    let z = half * half;
    let f = hypergeometric(mf - nu, nu + mf + T::one(), mf + T::one(), z)?;
    Ok(theta.sin().powi(m as i32) * f)
}

/// `Γ(ν+m+1)/Γ(ν−m+1) = ∏_{j=1−m}^{m} (ν + j)`.
fn gamma_ratio<T: Real>(nu: T, m: usize) -> T {
    let mut r = T::one();
    for j in 0..(2 * m) {
        r *= nu + T::from_usize_lossy(j + 1) - T::from_usize_lossy(m);
    }
    r
}

/// Degree-scaled Legendre values at `θ` for real degree `ν ≥ m`.
///
/// Returns `(P̃_ν, P̃_{ν−1}, scale)` with `P_ν^m = scale · P̃_ν` (the same scale
/// applies to `P̃_{ν−1}`). The scale is positive up to the Condon–Shortley sign.
struct ScaledLegendre<T> {
    value: T,
    previous: T,
    scale: T,
}

fn scaled_legendre<T: Real>(nu: T, m: usize, theta: T) -> Result<ScaledLegendre<T>> {
    let mf = T::from_usize_lossy(m);
    if nu < mf {
        return Err(Error::Domain(format!("degree {nu} below order {m}")));
    }
    let offset = nu - mf;
    let steps = offset.floor();
    let frac = offset - steps;
    let start = mf - T::one() + frac;
    let upper = start + T::one();
    let lower_factor = if m == 0 {
        T::one()
    } else {
        (upper - mf) / (upper + mf)
    };
    let mut prev = lower_factor * reduced_series(start, m, theta)?;
    let mut cur = reduced_series(upper, m, theta)?;
    let x = theta.cos();
    let mut d = upper;
    let n = steps.to_usize().unwrap_or(0);
    for _ in 0..n {
        let next = ((T::lit(2.0) * d + T::one()) * x * cur - (d + mf) * prev) / (d - mf + T::one());
        prev = cur;
        cur = next;
        d += T::one();
    }
    let mut scale = gamma_ratio(upper, m);
    for j in 1..=m {
        scale /= T::lit(2.0) * T::from_usize_lossy(j);
    }
    if m % 2 == 1 {
        scale = -scale;
    }
    Ok(ScaledLegendre {
        value: cur,
        previous: prev,
        scale,
    })
}

/// Associated Legendre function `P_l^m(x)` of real degree `l ≥ 0` and integer
/// order `m ≥ 0`, with the Condon–Shortley phase, for `x ∈ (−1, 1]`.
pub fn legendre_real_degree<T: Real>(l: T, m: usize, x: T) -> Result<T> {
    if !(x > -T::one() && x <= T::one()) || !l.is_finite() || l < T::zero() {
        return Err(Error::Domain(format!(
            "real-degree Legendre needs l >= 0 and x in (-1, 1], got l={l}, x={x}"
        )));
    }
    let theta = x.acos();
    let mf = T::from_usize_lossy(m);
    if l < mf {
        let mut scale = gamma_ratio(l, m);
        for j in 1..=m {
            scale /= T::lit(2.0) * T::from_usize_lossy(j);
        }
        if m % 2 == 1 {
            scale = -scale;
        }
        return Ok(scale * reduced_series(l, m, theta)?);
    }
    let s = scaled_legendre(l, m, theta)?;
    Ok(s.scale * s.value)
}

/// Boundary functional of a family at `θ`, in the degree-scaled normalization.
fn boundary_functional(nu: f64, m: usize, theta: f64, family: BoundaryFamily) -> Result<f64> {
    let s = scaled_legendre(nu, m, theta)?;
    Ok(match family {
        BoundaryFamily::Value => s.value,
        BoundaryFamily::Derivative => {
            let (sin_t, cos_t) = theta.sin_cos();
            (nu * cos_t * s.value - (nu + m as f64) * s.previous) / sin_t
        }
    })
}

/// Boundary residual relative to the function's peak over the cap.
fn relative_residual(nu: f64, m: usize, theta_c: f64, family: BoundaryFamily) -> Result<f64> {
    let rim = boundary_functional(nu, m, theta_c, family)?.abs();
    let mut peak: f64 = 0.0;
    for j in 1..=64 {
        let t = theta_c * j as f64 / 64.0;
        peak = peak.max(boundary_functional(nu, m, t, family)?.abs());
    }
    if peak == 0.0 {
        Ok(rim)
    } else {
        Ok(rim / peak)
    }
}

/// One solved eigen-degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeEntry {
    pub k: usize,
    pub m: usize,
    pub degree: f64,
    pub family: BoundaryFamily,
    pub residual: f64,
}

/// Solves the real degrees `l(m)_k` for `k = m..=K` on a cap of half-angle `θc`.
///
/// Degrees are bracketed on a uniform scan in `l` starting at `m` with step
/// `θc/(8π)` and refined by bisection.
pub fn solve_cap_degrees(theta_c: f64, m: usize, max_index: usize) -> Result<Vec<DegreeEntry>> {
    CapSpec::new(theta_c, max_index)?;
    if max_index < m {
        return Err(Error::Invalid(format!("K={max_index} is below m={m}")));
    }
    let theta_c = theta_c.min(std::f64::consts::FRAC_PI_2);
    let needed = |family: BoundaryFamily| {
        (m..=max_index)
            .filter(|&k| BoundaryFamily::for_index(k, m) == family)
            .count()
    };
    let step = theta_c / (8.0 * std::f64::consts::PI);
    let lo = m as f64;
    let hi = lo + 4.0 * max_index.max(1) as f64 * std::f64::consts::PI / theta_c;

    let mut entries = Vec::new();
    for family in [BoundaryFamily::Derivative, BoundaryFamily::Value] {
        let want = needed(family);
        let mut roots: Vec<f64> = Vec::with_capacity(want);
        if want == 0 {
            continue;
        }
        let f = |nu: f64| boundary_functional(nu, m, theta_c, family);
        let mut a = lo;
        let mut fa = f(a)?;
        if relative_residual(a, m, theta_c, family)? < 1e-12 {
            roots.push(a);
            a = lo + step;
            fa = f(a)?;
        }
        while roots.len() < want {
            if a > hi {
                return Err(Error::RootNotFound {
                    m,
                    family: family.to_string(),
                    lo,
                    hi,
                });
            }
            let b = a + step;
            let fb = f(b)?;
            if fb == 0.0 {
                roots.push(b);
                a = b + step;
                fa = f(a)?;
                continue;
            }
            if fa.signum() != fb.signum() {
                roots.push(bisect(&f, a, b, fa)?);
            }
            a = b;
            fa = fb;
        }
        for (i, &degree) in roots.iter().enumerate() {
            let k = m + 2 * i + usize::from(family == BoundaryFamily::Value);
            let residual = relative_residual(degree, m, theta_c, family)?;
            if !(residual < DEGREE_RESIDUAL_TOL) {
                return Err(Error::RootNotFound {
                    m,
                    family: family.to_string(),
                    lo: degree,
                    hi: degree,
                });
            }
            entries.push(DegreeEntry {
                k,
                m,
                degree,
                family,
                residual,
            });
        }
    }
    entries.sort_by_key(|e| e.k);
    Ok(entries)
}

fn bisect(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// All eigen-degrees for `0 ≤ m ≤ k ≤ K` on one cap.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeTable {
    half_angle: f64,
    max_index: usize,
    entries: Vec<DegreeEntry>,
}

impl DegreeTable {
    pub fn solve(spec: &CapSpec) -> Result<Self> {
        let mut entries = Vec::new();
        for m in 0..=spec.max_index {
            entries.extend(solve_cap_degrees(spec.half_angle, m, spec.max_index)?);
        }
        entries.sort_by_key(|e| (e.k, e.m));
        Ok(Self {
            half_angle: spec.half_angle,
            max_index: spec.max_index,
            entries,
        })
    }

    /// Loads the table from `dir` when cached there, otherwise solves and
    /// writes it. The cache key is `(θc rounded to 1e−12, K)`.
    pub fn cached(spec: &CapSpec, dir: &Path) -> Result<Self> {
        let path = Self::cache_path(spec, dir);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(table) = Self::from_text(&text) {
                if table.max_index == spec.max_index {
                    return Ok(table);
                }
            }
        }
        let table = Self::solve(spec)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(&path, table.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(table)
    }

    pub fn cache_path(spec: &CapSpec, dir: &Path) -> PathBuf {
        let key = (spec.half_angle * 1e12).round() as i64;
        dir.join(format!("cap_degrees_{key}e-12_K{}.txt", spec.max_index))
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn entries(&self) -> &[DegreeEntry] {
        &self.entries
    }

    pub fn get(&self, k: usize, m: usize) -> Option<&DegreeEntry> {
        self.entries.iter().find(|e| e.k == k && e.m == m)
    }

    /// Plain-text form: a header line then `k m l family residual` rows.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# cap degree table half_angle={:.17e} max_index={}\n# k m l family residual\n",
            self.half_angle, self.max_index
        );
        for e in &self.entries {
            s.push_str(&format!(
                "{} {} {:.17e} {} {:.3e}\n",
                e.k, e.m, e.degree, e.family, e.residual
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            location: format!("degree table line {line}"),
            message,
        };
        let mut half_angle = None;
        let mut max_index = None;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("half_angle=") {
                        half_angle = Some(v.parse::<f64>().map_err(|e| parse_err(n + 1, e.to_string()))?);
                    } else if let Some(v) = tok.strip_prefix("max_index=") {
                        max_index = Some(v.parse::<usize>().map_err(|e| parse_err(n + 1, e.to_string()))?);
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(parse_err(n + 1, format!("expected 5 fields, got {}", f.len())));
            }
            let pe = |e: &dyn std::fmt::Display| parse_err(n + 1, e.to_string());
            entries.push(DegreeEntry {
                k: f[0].parse().map_err(|e| pe(&e))?,
                m: f[1].parse().map_err(|e| pe(&e))?,
                degree: f[2].parse().map_err(|e| pe(&e))?,
                family: f[3].parse()?,
                residual: f[4].parse().map_err(|e| pe(&e))?,
            });
        }
        let half_angle = half_angle.ok_or_else(|| parse_err(1, "missing half_angle".into()))?;
        let max_index = max_index.ok_or_else(|| parse_err(1, "missing max_index".into()))?;
        let expected = (max_index + 1) * (max_index + 2) / 2;
        if entries.len() != expected {
            return Err(parse_err(0, format!("expected {expected} entries, got {}", entries.len())));
        }
        Ok(Self {
            half_angle,
            max_index,
            entries,
        })
    }
}

/// Evaluated cap basis with unit-norm columns over its sample set.
#[derive(Debug, Clone)]
pub struct CapBasis<T> {
    spec: CapSpec,
    matrix: Matrix<T>,
    column_scale: Vec<T>,
}

/// Unscaled column values `P̃_{l(m)_k}^{|m|}(cos θ) · trig(mφ)` for cap-local directions.
fn raw_cap_matrix<T: Real>(spec: &CapSpec, table: &DegreeTable, dirs: &DirectionSet) -> Result<Matrix<T>> {
    if table.max_index() < spec.max_index() || (table.half_angle() - spec.half_angle()).abs() > 1e-12 {
        return Err(Error::Invalid("degree table does not match the cap spec".into()));
    }
    for d in dirs {
        if d.polar() > spec.half_angle() + 1e-12 {
            return Err(Error::OutsideCap {
                theta: d.polar(),
                phi: d.azimuth(),
                half_angle: spec.half_angle(),
            });
        }
    }
    let kmax = spec.max_index();
    let n = spec.coefficient_count();
    let mut matrix = Matrix::zeros(dirs.len(), n);
    let thetas: Vec<T> = dirs.iter().map(|d| T::lit(d.polar())).collect();
    let phis: Vec<T> = dirs.iter().map(|d| T::lit(d.azimuth())).collect();
    for k in 0..=kmax {
        for m in 0..=k {
            let entry = table
                .get(k, m)
                .ok_or_else(|| Error::Invalid(format!("degree table lacks (k={k}, m={m})")))?;
            let nu = T::lit(entry.degree);
            let col_pos = sh_index(k, m as i64);
            let col_neg = sh_index(k, -(m as i64));
            let mf = T::from_usize_lossy(m);
            for (i, (&theta, &phi)) in thetas.iter().zip(&phis).enumerate() {
                let p = scaled_legendre(nu, m, theta)?.value;
                if m == 0 {
                    matrix.set(i, col_pos, p);
                } else {
                    let (s, c) = (mf * phi).sin_cos();
                    matrix.set(i, col_pos, p * c);
                    matrix.set(i, col_neg, p * s);
                }
            }
        }
    }
    Ok(matrix)
}

/// Builds the real cap basis over `dirs` (cap-local, axis at θ = 0), scaling
/// every column to unit ℓ2 norm over the samples.
pub fn cap_basis<T: Real>(spec: &CapSpec, table: &DegreeTable, dirs: &DirectionSet) -> Result<CapBasis<T>> {
    let mut matrix = raw_cap_matrix::<T>(spec, table, dirs)?;
    let n = matrix.cols();
    let mut column_scale = vec![T::zero(); n];
    for (j, s) in column_scale.iter_mut().enumerate() {
        let norm = (0..matrix.rows())
            .fold(T::zero(), |a, i| a + matrix.get(i, j) * matrix.get(i, j))
            .sqrt();
        *s = if norm > T::zero() { T::one() / norm } else { T::zero() };
    }
    for i in 0..matrix.rows() {
        for (v, &s) in matrix.row_mut(i).iter_mut().zip(&column_scale) {
            *v *= s;
        }
    }
    Ok(CapBasis {
        spec: *spec,
        matrix,
        column_scale,
    })
}

impl<T: Real> CapBasis<T> {
    pub fn spec(&self) -> &CapSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    /// Evaluates the same (identically scaled) basis at other cap directions.
    pub fn evaluate_at(&self, table: &DegreeTable, dirs: &DirectionSet) -> Result<Matrix<T>> {
        let mut m = raw_cap_matrix::<T>(&self.spec, table, dirs)?;
        for i in 0..m.rows() {
            for (v, &s) in m.row_mut(i).iter_mut().zip(&self.column_scale) {
                *v *= s;
            }
        }
        Ok(m)
    }

    pub fn fitter(&self, options: FitOptions) -> Result<CapFitter<T>> {
        Ok(CapFitter {
            spec: self.spec,
            solver: LeastSquares::new(&self.matrix, options)?,
        })
    }

    pub fn reconstruct(&self, coeffs: &SchCoefficients<T>) -> Result<Vec<T>> {
        self.matrix.matvec(coeffs.values())
    }

    /// Keeps the first `(K'+1)²` columns, i.e. the truncation at `K' ≤ K`.
    pub fn truncated(&self, max_index: usize) -> Result<CapBasis<T>> {
        if max_index > self.spec.max_index {
            return Err(Error::Invalid(format!(
                "cannot truncate K={} to K={max_index}",
                self.spec.max_index
            )));
        }
        let spec = CapSpec::new(self.spec.half_angle, max_index)?;
        let cols: Vec<usize> = (0..spec.coefficient_count()).collect();
        Ok(CapBasis {
            spec,
            matrix: self.matrix.select_columns(&cols),
            column_scale: self.column_scale[..cols.len()].to_vec(),
        })
    }
}

/// Factorized cap basis for repeated fits (one per coordinate function).
#[derive(Debug, Clone)]
pub struct CapFitter<T> {
    spec: CapSpec,
    solver: LeastSquares<T>,
}

impl<T: Real> CapFitter<T> {
    pub fn fit(&self, samples: &[T]) -> Result<SchCoefficients<T>> {
        SchCoefficients::new(self.spec, self.solver.solve(samples)?)
    }

    pub fn condition(&self) -> f64 {
        self.solver.condition()
    }
}

/// Default cap fit settings: the union of both boundary families becomes
/// nearly dependent as K grows, so an over-bound basis gets a minimal ridge.
pub fn cap_fit_options() -> FitOptions {
    FitOptions {
        auto_ridge: true,
        ..FitOptions::default()
    }
}

/// Options for coefficients fed to a learner. The tighter bound adds enough
/// ridge that near-null directions of the basis cannot swing between
/// otherwise similar patches.
pub fn feature_fit_options() -> FitOptions {
    FitOptions {
        max_condition: 1e4,
        auto_ridge: true,
        ..FitOptions::default()
    }
}

/// Least-squares cap-harmonic coefficients of `samples`.
pub fn fit_cap<T: Real>(basis: &CapBasis<T>, samples: &[T]) -> Result<SchCoefficients<T>> {
    basis.fitter(cap_fit_options())?.fit(samples)
}

/// Cap-harmonic coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SchCoefficients<T> {
    spec: CapSpec,
    values: Vec<T>,
}

impl<T: Real> SchCoefficients<T> {
    pub fn new(spec: CapSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.coefficient_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.coefficient_count(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &CapSpec {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, k: usize, m: i64) -> T {
        self.values[sh_index(k, m)]
    }

    /// `u32 K` followed by `(K+1)²` little-endian `f64`s.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_coefficient_record(w, self.spec.max_index, &self.values)
    }

    pub fn read_from<R: Read>(r: &mut R, half_angle: f64) -> Result<Self> {
        let (k, values) = read_coefficient_record(r, |k| (k + 1) * (k + 1))
            .map_err(|e| Error::io("<coefficient stream>", e))?;
        Self::new(CapSpec::new(half_angle, k)?, values)
    }
}

/// Per-degree amplitudes `d_k = √(Σ_m q(k,m)²)`, invariant under rotations
/// about the cap axis.
pub fn shape_descriptors<T: Real>(coeffs: &SchCoefficients<T>) -> Vec<T> {
    let kmax = coeffs.spec.max_index;
    (0..=kmax)
        .map(|k| {
            (-(k as i64)..=(k as i64))
                .map(|m| {
                    let q = coeffs.get(k, m);
                    q * q
                })
                .fold(T::zero(), |a, b| a + b)
                .sqrt()
        })
        .collect()
}
