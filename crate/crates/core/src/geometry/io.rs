//! OBJ and STL readers/writers. Units are meters; nothing is rescaled.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::{MeshError, TriangleMesh};

/// Vertices of STL triangles closer than this are merged (m).
pub const WELD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Stl,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "stl" => Some(Self::Stl),
            _ => None,
        }
    }
}

/// Loads and validates a mesh. The format is inferred from the extension when
/// `format` is `None`.
pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let format = format
        .or_else(|| MeshFormat::from_path(path))
        .ok_or_else(|| MeshError::UnknownFormat(path.display().to_string()))?;
    let bytes = fs::read(path)?;
    match format {
        MeshFormat::Obj => parse_obj(&String::from_utf8_lossy(&bytes)),
        MeshFormat::Stl => parse_stl(&bytes),
    }
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let err = |msg: &str| MeshError::Parse { line: lineno + 1, message: msg.to_string() };
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    *c = tokens
                        .next()
                        .ok_or_else(|| err("vertex needs three coordinates"))?
                        .parse()
                        .map_err(|_| err("bad vertex coordinate"))?;
                }
                vertices.push(Vector3::from(xyz));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let raw: i64 = tok
                        .split('/')
                        .next()
                        .unwrap_or("")
                        .parse()
                        .map_err(|_| err("bad face index"))?;
                    let idx = match raw {
                        0 => return Err(err("face index 0 is invalid")),
                        r if r > 0 => (r - 1) as usize,
                        r => {
                            let back = (-r) as usize;
                            if back > vertices.len() {
                                return Err(err("relative face index out of range"));
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(idx);
                }
                if poly.len() < 3 {
                    return Err(err("face needs at least three vertices"));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let triangles = if is_binary_stl(bytes) {
        parse_binary_stl(bytes)?
    } else {
        parse_ascii_stl(&String::from_utf8_lossy(bytes))?
    };
    let (vertices, faces) = weld(&triangles, WELD_TOLERANCE);
    TriangleMesh::new(vertices, faces)
}

fn is_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    if bytes.len() == 84 + 50 * n {
        return true;
    }
    !bytes.trim_ascii_start().starts_with(b"solid")
}

fn parse_binary_stl(bytes: &[u8]) -> Result<Vec<[Vector3<f64>; 3]>, MeshError> {
    let bad = |message: &str| MeshError::Parse { line: 0, message: message.to_string() };
    if bytes.len() < 84 {
        return Err(bad("truncated binary STL header"));
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    if bytes.len() < 84 + 50 * n {
        return Err(bad("truncated binary STL body"));
    }
    let read_f32 = |off: usize| f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]) as f64;
    Ok((0..n)
        .map(|i| {
            let base = 84 + 50 * i + 12;
            std::array::from_fn(|k| {
                let o = base + 12 * k;
                Vector3::new(read_f32(o), read_f32(o + 4), read_f32(o + 8))
            })
        })
        .collect())
}

fn parse_ascii_stl(text: &str) -> Result<Vec<[Vector3<f64>; 3]>, MeshError> {
    let mut triangles = Vec::new();
    let mut current: Vec<Vector3<f64>> = Vec::with_capacity(3);
    for (lineno, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        let err = |msg: &str| MeshError::Parse { line: lineno + 1, message: msg.to_string() };
        match tokens.next() {
            Some("vertex") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    *c = tokens
                        .next()
                        .ok_or_else(|| err("vertex needs three coordinates"))?
                        .parse()
                        .map_err(|_| err("bad vertex coordinate"))?;
                }
                current.push(Vector3::from(xyz));
            }
            Some("endloop") => {
                if current.len() != 3 {
                    return Err(err("facet loop must have exactly three vertices"));
                }
                triangles.push([current[0], current[1], current[2]]);
                current.clear();
            }
            _ => {}
        }
    }
    Ok(triangles)
}

/// Merges coincident vertices. Two points are merged when they are within
/// `tol` in every coordinate; lookups scan the 27 neighboring hash cells.
fn weld(triangles: &[[Vector3<f64>; 3]], tol: f64) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let key = |v: &Vector3<f64>| -> [i64; 3] { std::array::from_fn(|k| (v[k] / tol).floor() as i64) };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut faces = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let mut face = [0usize; 3];
        for (slot, v) in face.iter_mut().zip(tri) {
            let k = key(v);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            if let Some(&i) = list.iter().find(|&&i| (vertices[i] - v).amax() <= tol) {
                                found = Some(i);
                                break 'search;
                            }
                        }
                    }
                }
            }
            *slot = found.unwrap_or_else(|| {
                vertices.push(*v);
                cells.entry(k).or_default().push(vertices.len() - 1);
                vertices.len() - 1
            });
        }
        faces.push(face);
    }
    (vertices, faces)
}

pub fn write_obj(mesh: &TriangleMesh, mut out: impl Write) -> std::io::Result<()> {
    for v in mesh.vertices() {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

fn face_normal(tri: &[Vector3<f64>; 3]) -> Vector3<f64> {
    (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).try_normalize(0.0).unwrap_or_else(Vector3::zeros)
}

pub fn write_stl_binary(mesh: &TriangleMesh, mut out: impl Write) -> std::io::Result<()> {
    let mut header = [0u8; 80];
    header[..9].copy_from_slice(b"swept-sdf");
    out.write_all(&header)?;
    out.write_all(&(mesh.num_faces() as u32).to_le_bytes())?;
    for i in 0..mesh.num_faces() {
        let tri = mesh.triangle(i);
        for v in std::iter::once(face_normal(&tri)).chain(tri) {
            for c in v.iter() {
                out.write_all(&(*c as f32).to_le_bytes())?;
            }
        }
        out.write_all(&[0, 0])?;
    }
    Ok(())
}

pub fn write_stl_ascii(mesh: &TriangleMesh, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "solid mesh")?;
    for i in 0..mesh.num_faces() {
        let tri = mesh.triangle(i);
        let n = face_normal(&tri);
        writeln!(out, "  facet normal {:e} {:e} {:e}", n.x, n.y, n.z)?;
        writeln!(out, "    outer loop")?;
        for v in tri {
            writeln!(out, "      vertex {:?} {:?} {:?}", v.x, v.y, v.z)?;
        }
        writeln!(out, "    endloop")?;
        writeln!(out, "  endfacet")?;
    }
    writeln!(out, "endsolid mesh")
}
