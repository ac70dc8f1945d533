//! Closed triangle meshes: ASCII I/O, topology validation and generators.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

/// Minimum accepted face area in m².
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Closed, genus-0, consistently oriented triangle mesh (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Validates topology and orients faces outward (positive signed volume).
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Self { vertices, faces };
        mesh.validate()?;
        if mesh.signed_volume() < 0.0 {
            for f in &mut mesh.faces {
                f.swap(1, 2);
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        0.5 * norm(cross(
            sub(self.vertices[b], self.vertices[a]),
            sub(self.vertices[c], self.vertices[a]),
        ))
    }

    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| dot(self.vertices[a], cross(self.vertices[b], self.vertices[c])) / 6.0)
            .sum()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted surface centroid.
    pub fn centroid(&self) -> Vec3 {
        let mut c = [0.0; 3];
        let mut total = 0.0;
        for (f, &[a, b, cc]) in self.faces.iter().enumerate() {
            let area = self.face_area(f);
            let m = scale(add(add(self.vertices[a], self.vertices[b]), self.vertices[cc]), 1.0 / 3.0);
            c = add(c, scale(m, area));
            total += area;
        }
        scale(c, 1.0 / total)
    }

    /// Euler characteristic `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edges.insert((u.min(v), u.max(v)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if nv < 4 || self.faces.is_empty() {
            return Err(Error::Topology("mesh needs at least 4 vertices and one face".into()));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Topology(format!("vertex {} is not finite", i + 1)));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= nv) {
                return Err(Error::Topology(format!("face {} references a missing vertex", fi + 1)));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!("face {} repeats a vertex", fi + 1)));
            }
            if self.face_area(fi) <= MIN_FACE_AREA {
                return Err(Error::Topology(format!("face {} is degenerate", fi + 1)));
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *directed.entry((u, v)).or_default() += 1;
                *undirected.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }
        let mut boundary: Vec<(usize, usize)> = undirected
            .iter()
            .filter(|(_, &n)| n == 1)
            .map(|(&e, _)| e)
            .collect();
        if !boundary.is_empty() {
            boundary.sort_unstable();
            return Err(Error::Topology(format!(
                "open boundary loop through vertices {}",
                describe_loops(&boundary)
            )));
        }
        if let Some((&(u, v), _)) = undirected.iter().filter(|(_, &n)| n > 2).min_by_key(|(&e, _)| e) {
            return Err(Error::Topology(format!(
                "non-manifold edge ({}, {})",
                u + 1,
                v + 1
            )));
        }
        if let Some((&(u, v), _)) = directed.iter().filter(|(_, &n)| n > 1).min_by_key(|(&e, _)| e) {
            return Err(Error::Topology(format!(
                "inconsistent orientation at edge ({}, {})",
                u + 1,
                v + 1
            )));
        }
        // connectivity over faces
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut used = vec![false; nv];
        for &[a, b, c] in &self.faces {
            used[a] = true;
            used[b] = true;
            used[c] = true;
            for (u, v) in [(a, b), (b, c)] {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru != rv {
                    parent[ru] = rv;
                }
            }
        }
        if let Some(i) = used.iter().position(|&u| !u) {
            return Err(Error::Topology(format!("vertex {} is not used by any face", i + 1)));
        }
        let root = find(&mut parent, 0);
        if (0..nv).any(|i| find(&mut parent, i) != root) {
            return Err(Error::Topology("mesh is not connected".into()));
        }
        let chi = self.euler_characteristic();
        if chi != 2 {
            return Err(Error::Topology(format!(
                "mesh is not genus 0 (Euler characteristic {chi})"
            )));
        }
        Ok(())
    }

    /// Parses the ASCII format: `v x y z` and `f i j k` (1-based) lines only.
    pub fn parse(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let loc = || format!("line {}", n + 1);
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut it = t.split_whitespace();
            let tag = it.next().unwrap_or_default();
            let rest: Vec<&str> = it.collect();
            if rest.len() != 3 {
                return Err(Error::Parse {
                    location: loc(),
                    message: format!("expected 3 fields after '{tag}', got {}", rest.len()),
                });
            }
            match tag {
                "v" => {
                    let mut p = [0.0; 3];
                    for (k, s) in rest.iter().enumerate() {
                        p[k] = s.parse().map_err(|e| Error::Parse {
                            location: loc(),
                            message: format!("bad coordinate '{s}': {e}"),
                        })?;
                    }
                    vertices.push(p);
                }
                "f" => {
                    let mut f = [0usize; 3];
                    for (k, s) in rest.iter().enumerate() {
                        let i: usize = s.parse().map_err(|e| Error::Parse {
                            location: loc(),
                            message: format!("bad index '{s}': {e}"),
                        })?;
                        if i == 0 {
                            return Err(Error::Parse {
                                location: loc(),
                                message: "face indices are 1-based".into(),
                            });
                        }
                        f[k] = i - 1;
                    }
                    faces.push(f);
                }
                other => {
                    return Err(Error::Parse {
                        location: loc(),
                        message: format!("unexpected record '{other}'"),
                    })
                }
            }
        }
        Self::new(vertices, faces)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 64 + self.faces.len() * 24);
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Applies `f` to every vertex, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Self> {
        Self::new(self.vertices.iter().map(|&v| f(v)).collect(), self.faces.clone())
    }
}

/// Reads and validates an ASCII mesh file.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TriMesh::parse(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

fn describe_loops(edges: &[(usize, usize)]) -> String {
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(u, v) in edges {
        adj.entry(u).or_default().push(v);
        adj.entry(v).or_default().push(u);
    }
    let mut seen = std::collections::HashSet::new();
    let mut loops = Vec::new();
    let mut starts: Vec<usize> = adj.keys().copied().collect();
    starts.sort_unstable();
    for s in starts {
        if seen.contains(&s) {
            continue;
        }
        let mut path = vec![s];
        seen.insert(s);
        let mut cur = s;
        loop {
            let mut nexts = adj[&cur].clone();
            nexts.sort_unstable();
            match nexts.into_iter().find(|n| !seen.contains(n)) {
                Some(n) => {
                    seen.insert(n);
                    path.push(n);
                    cur = n;
                }
                None => break,
            }
        }
        loops.push(format!(
            "[{}]",
            path.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(", ")
        ));
    }
    loops.join(" ")
}

/// Regular icosahedron inscribed in the unit sphere.
pub fn icosahedron() -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|&v| normalize(v)).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriMesh::new(vertices, faces).expect("icosahedron is a valid closed mesh")
}

/// Unit icosphere after `subdivisions` rounds of 4-to-1 splitting
/// (`10·4^s + 2` vertices; 2562 for `s = 4`).
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let base = icosahedron();
    let mut vertices: Vec<Vec3> = base.vertices.clone();
    let mut faces = base.faces.clone();
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(normalize(scale(add(vertices[a], vertices[b]), 0.5)));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriMesh::new(vertices, faces).expect("icosphere is a valid closed mesh")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_counts() {
        let m = TriMesh::parse(&icosahedron().to_text()).unwrap();
        assert_eq!(m.vertices().len(), 12);
        assert_eq!(m.faces().len(), 20);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn missing_face_reports_boundary_loop() {
        let ico = icosahedron();
        let mut text = String::new();
        for v in ico.vertices() {
            text.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for f in &ico.faces()[1..] {
            text.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        let removed = ico.faces()[0];
        match TriMesh::parse(&text) {
            Err(Error::Topology(msg)) => {
                assert!(msg.contains("open boundary"), "{msg}");
                for v in removed {
                    assert!(msg.contains(&(v + 1).to_string()), "{msg}");
                }
            }
            other => panic!("expected topology error, got {other:?}"),
        }
    }

    #[test]
    fn subdivided_sphere_volume() {
        let m = icosphere(4);
        assert_eq!(m.vertices().len(), 2562);
        let v = m.signed_volume();
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!((v - exact).abs() / exact < 0.02);
    }

    #[test]
    fn inverted_input_is_reoriented() {
        let ico = icosahedron();
        let flipped: Vec<[usize; 3]> = ico.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        let m = TriMesh::new(ico.vertices().to_vec(), flipped).unwrap();
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn parse_rejects_other_records() {
        assert!(matches!(TriMesh::parse("vn 0 0 1\n"), Err(Error::Parse { .. })));
        assert!(matches!(TriMesh::parse("v 0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(TriMesh::parse("f 0 1 2\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn rejects_inconsistent_orientation() {
        let ico = icosahedron();
        let mut faces = ico.faces().to_vec();
        faces[3].swap(1, 2);
        assert!(matches!(TriMesh::new(ico.vertices().to_vec(), faces), Err(Error::Topology(_))));
    }
}
