//! Mesh readers (STL, OFF) and field writers (CSV, PLY).

use std::collections::HashMap;
use std::fmt::Write as _;

use voxcast_core::{Real, Vec3};

use crate::mesh::{Mesh, MeshError};
use crate::svr::{SvrField, SvrValue};

fn parse_err(msg: impl Into<String>) -> MeshError {
    MeshError::Parse(msg.into())
}

/// Merges bit-identical vertex positions.
fn weld<T: Real>(corners: Vec<[f32; 3]>) -> (Vec<Vec3<T>>, Vec<[u32; 3]>) {
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut ids = Vec::with_capacity(corners.len());
    for c in corners {
        let key = c.map(|x| (x + 0.0).to_bits());
        let id = *index.entry(key).or_insert_with(|| {
            vertices.push(Vec3::new(
                T::lit(f64::from(c[0])),
                T::lit(f64::from(c[1])),
                T::lit(f64::from(c[2])),
            ));
            (vertices.len() - 1) as u32
        });
        ids.push(id);
    }
    let triangles = ids.chunks_exact(3).map(|t| [t[0], t[1], t[2]]).collect();
    (vertices, triangles)
}

fn read_binary_stl(bytes: &[u8]) -> Option<Vec<[f32; 3]>> {
    if bytes.len() < 84 {
        return None;
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() != 84 + 50 * count {
        return None;
    }
    let mut corners = Vec::with_capacity(count * 3);
    for rec in bytes[84..].chunks_exact(50) {
        for v in 0..3 {
            let at = 12 + 12 * v;
            let f = |o: usize| f32::from_le_bytes(rec[at + o..at + o + 4].try_into().unwrap());
            corners.push([f(0), f(4), f(8)]);
        }
    }
    Some(corners)
}

fn read_ascii_stl(text: &str) -> Result<Vec<[f32; 3]>, MeshError> {
    let mut corners = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() == Some("vertex") {
            let mut c = [0f32; 3];
            for x in &mut c {
                *x = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(format!("line {}: bad vertex", n + 1)))?;
            }
            corners.push(c);
        }
    }
    if corners.len() % 3 != 0 {
        return Err(parse_err("vertex count is not a multiple of 3"));
    }
    Ok(corners)
}

/// Reads binary or ASCII STL, welding coincident vertices.
pub fn read_stl<T: Real>(bytes: &[u8]) -> Result<Mesh<T>, MeshError> {
    let corners = match read_binary_stl(bytes) {
        Some(c) => c,
        None => {
            let text = std::str::from_utf8(bytes).map_err(|_| parse_err("neither binary nor ASCII STL"))?;
            if !text.trim_start().starts_with("solid") {
                return Err(parse_err("neither binary nor ASCII STL"));
            }
            read_ascii_stl(text)?
        }
    };
    let (vertices, triangles) = weld(corners);
    Mesh::new(vertices, triangles)
}

pub fn write_binary_stl<T: Real>(mesh: &Mesh<T>) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.triangles().len() as u32).to_le_bytes());
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.corners(t);
        let n = (b - a).cross(c - a).normalize();
        for v in [n, a, b, c] {
            for x in v.to_array() {
                out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub fn write_ascii_stl<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = String::from("solid mesh\n");
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.corners(t);
        let n = (b - a).cross(c - a).normalize();
        let fmt = |v: Vec3<T>| {
            format!(
                "{} {} {}",
                v.x.as_f64() as f32,
                v.y.as_f64() as f32,
                v.z.as_f64() as f32
            )
        };
        let _ = writeln!(out, "  facet normal {}\n    outer loop", fmt(n));
        for v in [a, b, c] {
            let _ = writeln!(out, "      vertex {}", fmt(v));
        }
        out.push_str("    endloop\n  endfacet\n");
    }
    out.push_str("endsolid mesh\n");
    out
}

/// Reads OFF; polygons with more than three corners are fanned.
pub fn read_off<T: Real>(text: &str) -> Result<Mesh<T>, MeshError> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    match tokens.next() {
        Some("OFF") => {}
        _ => return Err(parse_err("missing OFF header")),
    }
    let mut num = |what: &str| -> Result<f64, MeshError> {
        tokens
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| parse_err(format!("expected {what}")))
    };
    let nv = num("vertex count")? as usize;
    let nf = num("face count")? as usize;
    let _edges = num("edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push(Vec3::new(T::lit(num("x")?), T::lit(num("y")?), T::lit(num("z")?)));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k = num("face size")? as usize;
        if k < 3 {
            return Err(parse_err("face with fewer than 3 corners"));
        }
        let ids = (0..k)
            .map(|_| num("vertex index").map(|v| v as u32))
            .collect::<Result<Vec<_>, _>>()?;
        for i in 1..k - 1 {
            triangles.push([ids[0], ids[i], ids[i + 1]]);
        }
    }
    Mesh::new(vertices, triangles)
}

pub fn write_off<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = format!("OFF\n{} {} 0\n", mesh.vertices().len(), mesh.triangles().len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64());
    }
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    out
}

/// ASCII PLY with a per-vertex `svr` property (NaN where undefined).
///
/// The field must have been evaluated at the mesh vertices.
pub fn write_ply_with_field<T: Real>(mesh: &Mesh<T>, field: &SvrField<T>) -> Result<String, MeshError> {
    if field.points.len() != mesh.vertices().len() {
        return Err(MeshError::InvalidQuery(format!(
            "field has {} points, mesh has {} vertices",
            field.points.len(),
            mesh.vertices().len()
        )));
    }
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float svr\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    for (v, p) in mesh.vertices().iter().zip(&field.points) {
        let s = match p.svr {
            SvrValue::Defined(x) => x.as_f64(),
            SvrValue::Undefined => f64::NAN,
        };
        let _ = writeln!(out, "{} {} {} {}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64(), s);
    }
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    Ok(out)
}
