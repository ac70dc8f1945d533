//! Ear-cap cropping on a sphere map and uniform cap remeshing.

use super::mesh::{cross, dot, normalize, scale, sub, Vec3};
use super::param::{ray_triangle, SphereMap};
use crate::cap::CapSpec;
use crate::error::{Error, Result};
use crate::sphere::{Direction, DirectionSet};

/// Orthonormal frame with `e3` on the cap axis and `e1` the projection of
/// global +z onto the tangent plane (global +x when the axis is vertical).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapFrame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub e3: Vec3,
}

impl CapFrame {
    pub fn new(axis: Vec3) -> Self {
        let e3 = normalize(axis);
        let mut r = [0.0, 0.0, 1.0];
        let mut t = sub(r, scale(e3, dot(r, e3)));
        if dot(t, t) < 1e-12 {
            r = [1.0, 0.0, 0.0];
            t = sub(r, scale(e3, dot(r, e3)));
        }
        let e1 = normalize(t);
        let e2 = cross(e3, e1);
        Self { e1, e2, e3 }
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        [dot(v, self.e1), dot(v, self.e2), dot(v, self.e3)]
    }

    pub fn to_global(&self, v: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = v[0] * self.e1[k] + v[1] * self.e2[k] + v[2] * self.e3[k];
        }
        out
    }
}

/// Cap-local direction whose polar angle is measured from the cap axis.
pub fn cap_local_direction(local: Vec3) -> Direction {
    Direction::from_vector(local).expect("unit vector")
}

/// Mesh region inside a cap of the sphere map, in cap-local coordinates.
#[derive(Debug, Clone)]
pub struct CroppedCap {
    pub half_angle: f64,
    pub frame: CapFrame,
    /// Indices into the source mesh.
    pub vertex_ids: Vec<usize>,
    /// Cap-local unit vectors (cap axis = +z).
    pub local_positions: Vec<Vec3>,
    /// Original-space coordinates (meters).
    pub original_positions: Vec<Vec3>,
    /// Faces with all three vertices inside, indexing the local arrays.
    pub faces: Vec<[usize; 3]>,
}

impl CroppedCap {
    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }
}

/// Keeps the vertices of `map` within `half_angle` of `center` (a point on
/// the map's sphere) and the faces lying entirely inside.
pub fn crop_cap(map: &SphereMap, center: Vec3, half_angle: f64) -> Result<CroppedCap> {
    let frame = CapFrame::new(center);
    let cos_limit = half_angle.cos();
    let u = map.unit_positions();
    let verts = map.mesh().vertices();
    let mut local_index = vec![usize::MAX; u.len()];
    let mut out = CroppedCap {
        half_angle,
        frame,
        vertex_ids: Vec::new(),
        local_positions: Vec::new(),
        original_positions: Vec::new(),
        faces: Vec::new(),
    };
    for (i, &p) in u.iter().enumerate() {
        let inside = if half_angle >= std::f64::consts::PI {
            true
        } else {
            dot(p, frame.e3) >= cos_limit
        };
        if inside {
            local_index[i] = out.vertex_ids.len();
            out.vertex_ids.push(i);
            out.local_positions.push(frame.to_local(p));
            out.original_positions.push(verts[i]);
        }
    }
    if out.vertex_ids.is_empty() {
        return Err(Error::EmptyCrop);
    }
    for f in map.mesh().faces() {
        if f.iter().all(|&i| local_index[i] != usize::MAX) {
            out.faces.push([local_index[f[0]], local_index[f[1]], local_index[f[2]]]);
        }
    }
    Ok(out)
}

/// Near-equal-area spiral layout of `n` cap-local directions within
/// `half_angle` of the +z axis.
pub fn uniform_cap_grid(half_angle: f64, n: usize) -> DirectionSet {
    assert!(n >= 1, "grid needs at least one point");
    if n == 1 {
        return DirectionSet::new(vec![Direction::from_polar(0.0, 0.0).unwrap()]).unwrap();
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let span = 1.0 - half_angle.cos();
    let dirs = (0..n)
        .map(|i| {
            let z = 1.0 - span * (i as f64 + 0.5) / n as f64;
            let theta = z.clamp(-1.0, 1.0).acos();
            Direction::from_polar(theta, golden * i as f64).unwrap()
        })
        .collect();
    DirectionSet::new(dirs).unwrap()
}

/// Uniformly resampled ear surface.
#[derive(Debug, Clone)]
pub struct EarPatch {
    pub cap: CapSpec,
    /// Cap-local sample directions.
    pub grid: DirectionSet,
    /// One `[x, y, z]` row per grid direction (meters).
    pub samples_xyz: Vec<Vec3>,
}

impl EarPatch {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.samples_xyz.iter().map(|p| p[k]).collect()
    }
}

/// Interpolates original-space positions at each grid direction from the
/// cropped parameterization.
pub fn remesh_cap(cropped: &CroppedCap, grid: &DirectionSet, cap: CapSpec) -> Result<EarPatch> {
    let max_polar = grid.iter().map(|d| d.polar()).fold(0.0, f64::max);
    if max_polar > cap.half_angle() + 1e-12 {
        return Err(Error::Invalid(format!(
            "grid reaches {max_polar} rad, beyond the cap half-angle {}",
            cap.half_angle()
        )));
    }
    if cropped.half_angle < std::f64::consts::PI && max_polar >= cropped.half_angle {
        return Err(Error::Invalid(format!(
            "grid reaches {max_polar} rad, not strictly inside the crop of {} rad",
            cropped.half_angle
        )));
    }
    let index = FaceIndex::new(cropped);
    let p = &cropped.local_positions;
    let orig = &cropped.original_positions;
    let mut samples = Vec::with_capacity(grid.len());
    for d in grid.iter() {
        let dir = d.unit_vector();
        let hit = index.candidates(dir).find_map(|fi| {
            let [a, b, c] = cropped.faces[fi];
            ray_triangle([0.0; 3], dir, p[a], p[b], p[c])
                .filter(|&(t, ..)| t > 0.0)
                .map(|(_, u, v)| (fi, u, v))
        });
        let (fi, u, v) = hit.ok_or(Error::UncoveredPoint {
            theta: d.polar(),
            phi: d.azimuth(),
        })?;
        let [a, b, c] = cropped.faces[fi];
        let w0 = 1.0 - u - v;
        let mut x = [0.0; 3];
        for k in 0..3 {
            x[k] = w0 * orig[a][k] + u * orig[b][k] + v * orig[c][k];
        }
        samples.push(x);
    }
    Ok(EarPatch {
        cap,
        grid: grid.clone(),
        samples_xyz: samples,
    })
}

/// Uniform bucket grid over the azimuthal-equidistant projection of the cap.
struct FaceIndex {
    cells: Vec<Vec<usize>>,
    res: usize,
    extent: f64,
}

fn project(v: Vec3) -> (f64, f64) {
    let theta = v[2].clamp(-1.0, 1.0).acos();
    let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if r < 1e-300 {
        return (0.0, 0.0);
    }
    (theta * v[0] / r, theta * v[1] / r)
}

impl FaceIndex {
    fn new(cap: &CroppedCap) -> Self {
        let res = ((cap.faces.len() as f64).sqrt() as usize).clamp(1, 256);
        let extent = std::f64::consts::PI;
        let mut cells = vec![Vec::new(); res * res];
        let cell = |x: f64| (((x + extent) / (2.0 * extent)) * res as f64).floor().clamp(0.0, (res - 1) as f64) as usize;
        for (fi, f) in cap.faces.iter().enumerate() {
            let pts: Vec<(f64, f64)> = f.iter().map(|&i| project(cap.local_positions[i])).collect();
            // faces straddling the antipode of the axis wrap in this projection
            let span = pts
                .iter()
                .flat_map(|a| pts.iter().map(move |b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()))
                .fold(0.0, f64::max);
            let (x0, x1, y0, y1) = if span > 1.0 {
                (0, res - 1, 0, res - 1)
            } else {
                let xs = pts.iter().map(|p| p.0);
                let ys = pts.iter().map(|p| p.1);
                (
                    cell(xs.clone().fold(f64::INFINITY, f64::min)),
                    cell(xs.fold(f64::NEG_INFINITY, f64::max)),
                    cell(ys.clone().fold(f64::INFINITY, f64::min)),
                    cell(ys.fold(f64::NEG_INFINITY, f64::max)),
                )
            };
            for ix in x0.saturating_sub(1)..=(x1 + 1).min(res - 1) {
                for iy in y0.saturating_sub(1)..=(y1 + 1).min(res - 1) {
                    cells[ix * res + iy].push(fi);
                }
            }
        }
        Self { cells, res, extent }
    }

    fn candidates(&self, dir: Vec3) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = project(dir);
        let cell = |x: f64| (((x + self.extent) / (2.0 * self.extent)) * self.res as f64).floor().clamp(0.0, (self.res - 1) as f64) as usize;
        self.cells[cell(x) * self.res + cell(y)].iter().copied()
    }
}
