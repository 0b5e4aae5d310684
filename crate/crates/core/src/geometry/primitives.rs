//! Closed reference meshes used by tests, benchmarks and example scenarios.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::TriangleMesh;

/// Axis-aligned box centered at the origin, 8 vertices and 12 triangles.
pub fn cuboid(half_extents: Vector3<f64>) -> TriangleMesh {
    let h = half_extents;
    let vertices = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let faces = vec![
        [0, 2, 1], [1, 2, 3], // -z
        [4, 5, 6], [5, 7, 6], // +z
        [0, 1, 4], [1, 5, 4], // -y
        [2, 6, 3], [3, 6, 7], // +y
        [0, 4, 2], [2, 4, 6], // -x
        [1, 3, 5], [3, 7, 5], // +x
    ];
    TriangleMesh::new(vertices, faces).expect("cuboid is closed")
}

/// Geodesic sphere by repeated 4-way subdivision of an icosahedron, vertices on
/// the sphere of the given radius. Subdivision `n` yields `20 * 4^n` faces.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push((vertices[a] + vertices[b]).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }

    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, faces).expect("icosphere is closed")
}

/// Torus around the body z axis: `major` ring radius, `minor` tube radius.
pub fn torus(major: f64, minor: f64, ring_segments: usize, tube_segments: usize) -> TriangleMesh {
    let (n, m) = (ring_segments.max(3), tube_segments.max(3));
    let mut vertices = Vec::with_capacity(n * m);
    for i in 0..n {
        let u = std::f64::consts::TAU * i as f64 / n as f64;
        for j in 0..m {
            let v = std::f64::consts::TAU * j as f64 / m as f64;
            let r = major + minor * v.cos();
            vertices.push(Vector3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % n) * m + (j % m);
    let mut faces = Vec::with_capacity(2 * n * m);
    for i in 0..n {
        for j in 0..m {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("torus is closed")
}

/// A flying-saucer shaped body: a flattened disc with a torus-like rim and a
/// dome, built as a surface of revolution. Nonconvex (the rim overhangs).
pub fn saucer(radius: f64, segments: usize) -> TriangleMesh {
    // profile (r, z) from the bottom pole to the top pole, counter-clockwise
    let profile = [
        (0.0, -0.25),
        (0.35, -0.22),
        (0.55, -0.08),
        (0.7, -0.12),
        (1.0, 0.0),
        (0.7, 0.08),
        (0.45, 0.12),
        (0.35, 0.3),
        (0.0, 0.4),
    ];
    let n = segments.max(6);
    let mut vertices = vec![Vector3::new(0.0, 0.0, profile[0].1 * radius)];
    let rings = &profile[1..profile.len() - 1];
    for &(r, z) in rings {
        for i in 0..n {
            let u = std::f64::consts::TAU * i as f64 / n as f64;
            vertices.push(Vector3::new(r * u.cos(), r * u.sin(), z) * radius);
        }
    }
    let top = vertices.len();
    vertices.push(Vector3::new(0.0, 0.0, profile[profile.len() - 1].1 * radius));

    let ring = |k: usize, i: usize| 1 + k * n + (i % n);
    let mut faces = Vec::new();
    for i in 0..n {
        faces.push([0, ring(0, i + 1), ring(0, i)]);
    }
    for k in 0..rings.len() - 1 {
        for i in 0..n {
            faces.push([ring(k, i), ring(k, i + 1), ring(k + 1, i + 1)]);
            faces.push([ring(k, i), ring(k + 1, i + 1), ring(k + 1, i)]);
        }
    }
    let last = rings.len() - 1;
    for i in 0..n {
        faces.push([top, ring(last, i), ring(last, i + 1)]);
    }
    TriangleMesh::new(vertices, faces).expect("saucer is closed")
}
