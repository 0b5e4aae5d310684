use std::collections::HashMap;

use nalgebra::Vector3;

use super::MeshError;

/// Triangles with area below this are dropped at load time (m²).
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A closed, consistently oriented triangle mesh in meters.
///
/// Construction validates the mesh: indices in range, degenerate faces removed,
/// every undirected edge shared by exactly two faces with opposite winding. The
/// orientation is normalized so the enclosed signed volume is positive, i.e.
/// face normals point outward.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(*v));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&k| k >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange { face: i, vertices: vertices.len() });
            }
        }

        let faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) >= DEGENERATE_AREA)
            .collect();
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }

        check_closed(&faces)?;

        let mut mesh = Self { vertices, faces };
        if mesh.signed_volume() < 0.0 {
            for f in &mut mesh.faces {
                f.swap(1, 2);
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Enclosed volume via the divergence theorem; positive for outward normals.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])))
            .sum::<f64>()
            / 6.0
    }

    /// Largest vertex distance from the body-frame origin.
    pub fn circumscribed_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Applies `x -> rotation * x + translation` to every vertex.
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| rotation * v + translation).collect(),
            faces: self.faces.clone(),
        }
    }
}

pub(crate) fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn check_closed(faces: &[[usize; 3]]) -> Result<(), MeshError> {
    let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
        }
    }

    let mut boundary = Vec::new();
    let mut non_manifold = Vec::new();
    let mut flipped = Vec::new();
    for (&(a, b), &count) in &directed {
        let twin = directed.get(&(b, a)).copied().unwrap_or(0);
        let edge = (a.min(b), a.max(b));
        match (count, twin) {
            (1, 1) => {}
            (1, 0) => boundary.push(edge),
            (2, 0) => flipped.push(edge),
            _ => non_manifold.push(edge),
        }
    }
    boundary.sort_unstable();
    non_manifold.sort_unstable();
    non_manifold.dedup();
    flipped.sort_unstable();
    flipped.dedup();

    if !boundary.is_empty() {
        return Err(MeshError::NonWatertight { edges: boundary });
    }
    if !non_manifold.is_empty() {
        return Err(MeshError::NonManifold { edges: non_manifold });
    }
    if !flipped.is_empty() {
        return Err(MeshError::InconsistentOrientation { edges: flipped });
    }
    Ok(())
}
