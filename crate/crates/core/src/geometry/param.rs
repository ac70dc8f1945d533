//! Harmonic spherical parameterization with Möbius centering.

use serde::{Deserialize, Serialize};

use super::mesh::{add, cross, dot, norm, normalize, scale, sub, TriMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamOptions {
    /// Stop once the RMS constrained gradient falls below this.
    pub gradient_tol: f64,
    pub max_iterations: usize,
}

impl Default for ParamOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-6,
            max_iterations: 50_000,
        }
    }
}

/// Per-vertex positions on the unit sphere for a closed genus-0 mesh.
#[derive(Debug, Clone)]
pub struct SphereMap {
    mesh: TriMesh,
    unit_positions: Vec<Vec3>,
    iterations: usize,
    gradient_norm: f64,
}

impl SphereMap {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn unit_positions(&self) -> &[Vec3] {
        &self.unit_positions
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    /// Cotangent-weighted harmonic energy of the current map.
    pub fn energy(&self) -> f64 {
        harmonic_energy(&Weights::new(&self.mesh), &self.unit_positions)
    }

    pub fn flipped_count(&self) -> usize {
        count_flipped(self.mesh.faces(), &self.unit_positions)
    }

    /// Area-weighted centroid of the mapped surface.
    pub fn centroid(&self) -> Vec3 {
        area_centroid(self.mesh.faces(), &self.unit_positions)
    }

    /// Maps a head-centered direction onto the sphere map by casting a ray
    /// from the mesh centroid and interpolating the hit triangle.
    pub fn map_direction(&self, direction: Vec3) -> Result<Vec3> {
        let origin = self.mesh.centroid();
        let d = normalize(direction);
        let verts = self.mesh.vertices();
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for (fi, &[a, b, c]) in self.mesh.faces().iter().enumerate() {
            if let Some((t, u, v)) = ray_triangle(origin, d, verts[a], verts[b], verts[c]) {
                if t > 0.0 && best.map_or(true, |(bt, ..)| t < bt) {
                    best = Some((t, fi, u, v));
                }
            }
        }
        let (_, fi, u, v) = best.ok_or_else(|| {
            Error::Invalid(format!("ray along {direction:?} does not hit the mesh"))
        })?;
        let [a, b, c] = self.mesh.faces()[fi];
        let p = &self.unit_positions;
        let q = add(add(scale(p[a], 1.0 - u - v), scale(p[b], u)), scale(p[c], v));
        Ok(normalize(q))
    }
}

/// Möller–Trumbore intersection; returns `(t, u, v)` with barycentrics
/// `(1−u−v, u, v)`, accepting hits on edges within a small tolerance.
pub(crate) fn ray_triangle(o: Vec3, d: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<(f64, f64, f64)> {
    const EPS: f64 = 1e-12;
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let p = cross(d, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub(o, a);
    let u = dot(s, p) * inv;
    if u < -EPS || u > 1.0 + EPS {
        return None;
    }
    let q = cross(s, e1);
    let v = dot(d, q) * inv;
    if v < -EPS || u + v > 1.0 + EPS {
        return None;
    }
    Some((dot(e2, q) * inv, u, v))
}

/// Symmetric cotangent weights in CSR layout.
struct Weights {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl Weights {
    fn new(mesh: &TriMesh) -> Self {
        let n = mesh.vertices().len();
        let v = mesh.vertices();
        let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.faces().len() * 6);
        for &[a, b, c] in mesh.faces() {
            for (i, j, k) in [(a, b, c), (b, c, a), (c, a, b)] {
                let e1 = sub(v[i], v[k]);
                let e2 = sub(v[j], v[k]);
                let cot = dot(e1, e2) / norm(cross(e1, e2));
                pairs.push((i, j, 0.5 * cot));
                pairs.push((j, i, 0.5 * cot));
            }
        }
        pairs.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut offsets = vec![0usize; n + 1];
        let mut neighbors = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, w) in pairs {
            if last == Some((i, j)) {
                *weights.last_mut().unwrap() += w;
            } else {
                neighbors.push(j);
                weights.push(w);
                offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        // obtuse configurations give negative weights; clamp to keep the
        // averaging operator a convex combination
        let positive: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
        let floor = 1e-3 * positive.iter().sum::<f64>() / positive.len().max(1) as f64;
        for w in &mut weights {
            if *w < floor {
                *w = floor;
            }
        }
        Self {
            offsets,
            neighbors,
            weights,
        }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }
}

fn harmonic_energy(w: &Weights, u: &[Vec3]) -> f64 {
    let mut e = 0.0;
    for i in 0..u.len() {
        for (j, wij) in w.row(i) {
            if j > i {
                let d = sub(u[i], u[j]);
                e += 0.5 * wij * dot(d, d);
            }
        }
    }
    e
}

fn count_flipped(faces: &[[usize; 3]], u: &[Vec3]) -> usize {
    faces
        .iter()
        .filter(|&&[a, b, c]| dot(u[a], cross(u[b], u[c])) <= 0.0)
        .count()
}

fn area_centroid(faces: &[[usize; 3]], u: &[Vec3]) -> Vec3 {
    let mut c = [0.0; 3];
    let mut total = 0.0;
    for &[a, b, cc] in faces {
        let area = 0.5 * norm(cross(sub(u[b], u[a]), sub(u[cc], u[a])));
        c = add(c, scale(add(add(u[a], u[b]), u[cc]), area / 3.0));
        total += area;
    }
    scale(c, 1.0 / total)
}

/// `x ↦ (1−|c|²)(x+c)/|x+c|² + c`, a sphere automorphism pushing points toward `c`.
fn mobius(x: Vec3, c: Vec3) -> Vec3 {
    let xc = add(x, c);
    let s = (1.0 - dot(c, c)) / dot(xc, xc);
    normalize(add(scale(xc, s), c))
}

fn center(faces: &[[usize; 3]], u: &mut [Vec3]) -> f64 {
    let mut mu = area_centroid(faces, u);
    for _ in 0..100 {
        if norm(mu) < 1e-12 {
            break;
        }
        let mut c = scale(mu, -0.75);
        let cn = norm(c);
        if cn > 0.5 {
            c = scale(c, 0.5 / cn);
        }
        for x in u.iter_mut() {
            *x = mobius(*x, c);
        }
        mu = area_centroid(faces, u);
    }
    norm(mu)
}

/// Tangential averaging step for every vertex with the three infinitesimal
/// Möbius directions `P_u(e)` projected out; returns the RMS step length.
fn constrained_step(w: &Weights, u: &[Vec3], step: &mut [Vec3]) -> f64 {
    let n = u.len();
    for i in 0..n {
        let mut s = [0.0; 3];
        let mut total = 0.0;
        for (j, wij) in w.row(i) {
            s = add(s, scale(u[j], wij));
            total += wij;
        }
        let g = scale(s, 1.0 / total);
        step[i] = sub(g, scale(u[i], dot(g, u[i])));
    }
    // least squares for beta in  sum_i |step_i - P_i beta|^2
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for i in 0..n {
        let x = u[i];
        for a in 0..3 {
            for b in 0..3 {
                let delta = if a == b { 1.0 } else { 0.0 };
                m[a][b] += delta - x[a] * x[b];
            }
            rhs[a] += step[i][a];
        }
    }
    let beta = solve3(m, rhs);
    let mut sq = 0.0;
    for i in 0..n {
        let x = u[i];
        let pb = sub(beta, scale(x, dot(beta, x)));
        step[i] = sub(step[i], pb);
        sq += dot(step[i], step[i]);
    }
    (sq / n as f64).sqrt()
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Vec3 {
    let det = dot(m[0], cross(m[1], m[2]));
    if det.abs() < 1e-300 {
        return [0.0; 3];
    }
    let c0 = cross(m[1], m[2]);
    let c1 = cross(m[2], m[0]);
    let c2 = cross(m[0], m[1]);
    // m is symmetric so the inverse is the cofactor matrix over det
    [dot(c0, r) / det, dot(c1, r) / det, dot(c2, r) / det]
}

/// Maps a closed genus-0 mesh bijectively onto the unit sphere.
pub fn spherical_parameterize(mesh: &TriMesh) -> Result<SphereMap> {
    spherical_parameterize_with(mesh, ParamOptions::default())
}

pub fn spherical_parameterize_with(mesh: &TriMesh, opts: ParamOptions) -> Result<SphereMap> {
    let w = Weights::new(mesh);
    let origin = mesh.centroid();
    let mut u: Vec<Vec3> = mesh.vertices().iter().map(|&v| normalize(sub(v, origin))).collect();
    if u.iter().any(|x| x.iter().any(|c| !c.is_finite())) {
        return Err(Error::Invalid("a vertex coincides with the mesh centroid".into()));
    }
    let faces = mesh.faces();
    center(faces, &mut u);
    let mut step = vec![[0.0; 3]; u.len()];
    let mut gradient = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        gradient = constrained_step(&w, &u, &mut step);
        if gradient < opts.gradient_tol {
            break;
        }
        for (x, s) in u.iter_mut().zip(&step) {
            *x = normalize(add(*x, *s));
        }
        center(faces, &mut u);
        iterations += 1;
    }
    if gradient >= opts.gradient_tol {
        return Err(Error::ParamNonConvergence {
            gradient,
            iterations,
        });
    }
    let flipped = count_flipped(faces, &u);
    if flipped > 0 {
        return Err(Error::FlippedTriangles { count: flipped });
    }
    Ok(SphereMap {
        mesh: mesh.clone(),
        unit_positions: u,
        iterations,
        gradient_norm: gradient,
    })
}
