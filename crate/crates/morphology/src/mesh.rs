use std::collections::HashMap;

use thiserror::Error;
use voxcast_core::{Real, Vec3};

use crate::bvh::Bvh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {vertex} of {count}")]
    IndexOutOfRange { triangle: usize, vertex: u32, count: usize },
    #[error("triangle {triangle} has zero area")]
    DegenerateTriangle { triangle: usize },
    #[error("edge ({a}, {b}) is not shared by exactly two triangles")]
    OpenEdge { a: u32, b: u32 },
    #[error("edge ({a}, {b}) is used twice in the same direction (non-manifold or inconsistently oriented)")]
    NonManifoldEdge { a: u32, b: u32 },
    #[error("operation needs a closed mesh")]
    NotClosed,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(String),
}

impl MeshError {
    pub fn code(&self) -> &'static str {
        match self {
            MeshError::Empty => "EmptyMesh",
            MeshError::IndexOutOfRange { .. } => "IndexOutOfRange",
            MeshError::DegenerateTriangle { .. } => "DegenerateTriangle",
            MeshError::OpenEdge { .. } => "OpenEdge",
            MeshError::NonManifoldEdge { .. } => "NonManifoldEdge",
            MeshError::NotClosed => "NotClosed",
            MeshError::InvalidQuery(_) => "InvalidQuery",
            MeshError::Parse(_) => "MeshParse",
            MeshError::Io(_) => "Io",
        }
    }
}

/// Indexed triangle mesh with a triangle BVH.
///
/// Closed meshes are checked to be edge-manifold and consistently oriented,
/// and are flipped if needed so that normals point outward.
#[derive(Debug, Clone)]
pub struct Mesh<T: Real> {
    vertices: Vec<Vec3<T>>,
    triangles: Vec<[u32; 3]>,
    closed: bool,
    bvh: Bvh<T>,
}

impl<T: Real> Mesh<T> {
    /// Builds a closed, manifold mesh.
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        Self::build(vertices, triangles, true)
    }

    /// Builds a mesh without the closed-manifold check. Volume queries on it
    /// fail with [`MeshError::NotClosed`].
    pub fn new_open(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        Self::build(vertices, triangles, false)
    }

    fn build(vertices: Vec<Vec3<T>>, mut triangles: Vec<[u32; 3]>, closed: bool) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: t,
                    vertex: v,
                    count: vertices.len(),
                });
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] || (b - a).cross(c - a).norm() == T::zero() {
                return Err(MeshError::DegenerateTriangle { triangle: t });
            }
        }
        if closed {
            check_closed(&triangles)?;
            if signed_volume(&vertices, &triangles) < T::zero() {
                for tri in &mut triangles {
                    tri.swap(1, 2);
                }
            }
        }
        let bvh = Bvh::build(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            closed,
            bvh,
        })
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub(crate) fn bvh(&self) -> &Bvh<T> {
        &self.bvh
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Vec3<T>; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> T {
        let [a, b, c] = self.corners(t);
        (b - a).cross(c - a).norm() * T::lit(0.5)
    }

    pub fn area(&self) -> T {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Enclosed volume by the divergence theorem.
    pub fn volume(&self) -> Result<T, MeshError> {
        if !self.closed {
            return Err(MeshError::NotClosed);
        }
        Ok(signed_volume(&self.vertices, &self.triangles))
    }

    pub fn centroids(&self) -> Vec<Vec3<T>> {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                (a + b + c) / T::lit(3.0)
            })
            .collect()
    }

    /// Copy with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Result<Self, MeshError> {
        Self::build(
            self.vertices.iter().map(|&v| f(v)).collect(),
            self.triangles.clone(),
            self.closed,
        )
    }

    /// Point-in-mesh test by the parity of crossings along a ray.
    ///
    /// The first ray is axis-aligned (+x); rays that graze an edge, a vertex
    /// or a face plane are retried along jittered directions drawn from `rng`.
    pub fn contains(&self, p: Vec3<T>, rng: &mut impl rand::Rng) -> Result<bool, MeshError> {
        if !self.closed {
            return Err(MeshError::NotClosed);
        }
        let mut dir = Vec3::new(T::one(), T::zero(), T::zero());
        for _ in 0..64 {
            if let Some(n) = self.bvh.ray_crossings(&self.vertices, &self.triangles, p, dir) {
                return Ok(n % 2 == 1);
            }
            let mut j = || T::lit(rng.random_range(-1.0..1.0));
            dir = Vec3::new(T::one(), j() * T::lit(0.3), j() * T::lit(0.3)).normalize();
        }
        // Unreachable outside adversarial inputs; the point lies on the surface.
        Ok(false)
    }

    /// Icosahedron subdivided `level` times and projected onto a sphere.
    pub fn icosphere(level: u32, radius: T, center: Vec3<T>) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3<f64>> = [
            [-1.0, phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [0.0, 1.0, -phi],
            [phi, 0.0, -1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
        ]
        .into_iter()
        .map(|v| Vec3::from(v).normalize())
        .collect();
        let mut tris: Vec<[u32; 3]> = vec![
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
        for _ in 0..level {
            let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
            let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3<f64>>| {
                *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(tris.len() * 4);
            for [a, b, c] in tris {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        let vertices = verts.into_iter().map(|v| center + v.cast::<T>() * radius).collect();
        Self::new(vertices, tris).expect("icosphere is a closed manifold")
    }

    /// Axis-aligned box between `lo` and `hi`, two triangles per face.
    pub fn cuboid(lo: Vec3<T>, hi: Vec3<T>) -> Self {
        let v = |x: bool, y: bool, z: bool| {
            Vec3::new(
                if x { hi.x } else { lo.x },
                if y { hi.y } else { lo.y },
                if z { hi.z } else { lo.z },
            )
        };
        let vertices = (0..8).map(|i| v(i & 1 != 0, i & 2 != 0, i & 4 != 0)).collect();
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // z = lo
            [4, 5, 7, 6], // z = hi
            [0, 1, 5, 4], // y = lo
            [2, 6, 7, 3], // y = hi
            [0, 4, 6, 2], // x = lo
            [1, 3, 7, 5], // x = hi
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Self::new(vertices, triangles).expect("box is a closed manifold")
    }
}

fn signed_volume<T: Real>(vertices: &[Vec3<T>], triangles: &[[u32; 3]]) -> T {
    let sixth = T::lit(1.0 / 6.0);
    triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            a.dot(b.cross(c)) * sixth
        })
        .fold(T::zero(), |x, y| x + y)
}

fn check_closed(triangles: &[[u32; 3]]) -> Result<(), MeshError> {
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(triangles.len() * 3);
    for &[a, b, c] in triangles {
        for e in [(a, b), (b, c), (c, a)] {
            let n = directed.entry(e).or_insert(0);
            *n += 1;
            if *n > 1 {
                return Err(MeshError::NonManifoldEdge { a: e.0, b: e.1 });
            }
        }
    }
    let mut open: Vec<(u32, u32)> = directed
        .keys()
        .filter(|&&(a, b)| !directed.contains_key(&(b, a)))
        .copied()
        .collect();
    open.sort_unstable();
    match open.first() {
        Some(&(a, b)) => Err(MeshError::OpenEdge { a, b }),
        None => Ok(()),
    }
}

/// Closest point to `p` on triangle `abc`.
pub fn closest_point_on_triangle<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Vec3<T> {
    let zero = T::zero();
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(ap), ac.dot(ap));
    if d1 <= zero && d2 <= zero {
        return a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(bp), ac.dot(bp));
    if d3 >= zero && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= zero && d1 >= zero && d3 <= zero {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(cp), ac.dot(cp));
    if d6 >= zero && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= zero && d2 >= zero && d6 <= zero {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= zero && d4 - d3 >= zero && d5 - d6 >= zero {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = T::one() / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type V = Vec3<f64>;

    #[test]
    fn cuboid_measures() {
        let m = Mesh::cuboid(V::new(0.0, 0.0, 0.0), V::new(2.0, 3.0, 4.0));
        assert!((m.area() - 2.0 * (6.0 + 8.0 + 12.0)).abs() < 1e-12);
        assert!((m.volume().unwrap() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_converges_to_sphere() {
        let m = Mesh::icosphere(4, 2.0, V::zero());
        assert_eq!(m.vertices().len(), 2562);
        assert_eq!(m.triangles().len(), 5120);
        let pi = std::f64::consts::PI;
        assert!((m.area() / (16.0 * pi) - 1.0).abs() < 0.01);
        assert!((m.volume().unwrap() / (32.0 / 3.0 * pi) - 1.0).abs() < 0.01);
    }

    #[test]
    fn inverted_mesh_is_reoriented() {
        let m = Mesh::<f64>::icosphere(1, 1.0, V::zero());
        let flipped: Vec<[u32; 3]> = m.triangles().iter().map(|&[a, b, c]| [a, c, b]).collect();
        let m2 = Mesh::new(m.vertices().to_vec(), flipped).unwrap();
        assert!(m2.volume().unwrap() > 0.0);
    }

    #[test]
    fn validation_errors() {
        let cube = Mesh::<f64>::cuboid(V::zero(), V::splat(1.0));
        let verts = cube.vertices().to_vec();
        let mut tris = cube.triangles().to_vec();
        tris.pop();
        assert!(matches!(
            Mesh::new(verts.clone(), tris.clone()),
            Err(MeshError::OpenEdge { .. })
        ));
        assert!(Mesh::new_open(verts.clone(), tris.clone()).is_ok());
        let mut dup = cube.triangles().to_vec();
        dup.push(dup[0]);
        assert!(matches!(
            Mesh::new(verts.clone(), dup),
            Err(MeshError::NonManifoldEdge { .. })
        ));
        assert!(matches!(
            Mesh::new(verts.clone(), vec![[0, 1, 9]]),
            Err(MeshError::IndexOutOfRange { .. })
        ));
        let flat = vec![V::zero(), V::new(1.0, 0.0, 0.0), V::new(2.0, 0.0, 0.0)];
        assert!(matches!(
            Mesh::new_open(flat, vec![[0, 1, 2]]),
            Err(MeshError::DegenerateTriangle { .. })
        ));
        assert_eq!(Mesh::<f64>::new(verts, vec![]).unwrap_err(), MeshError::Empty);
        let open = Mesh::new_open(cube.vertices().to_vec(), tris).unwrap();
        assert_eq!(open.volume().unwrap_err(), MeshError::NotClosed);
    }

    #[test]
    fn containment_by_parity() {
        let m = Mesh::cuboid(V::zero(), V::splat(2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(m.contains(V::splat(1.0), &mut rng).unwrap());
        assert!(!m.contains(V::new(3.0, 1.0, 1.0), &mut rng).unwrap());
        // The +x ray from here runs along the diagonal edge of two faces.
        assert!(m.contains(V::new(0.5, 0.5, 0.5), &mut rng).unwrap());
        assert!(m.contains(V::new(1.0, 1.0, 1.999), &mut rng).unwrap());
        let s = Mesh::icosphere(3, 1.0, V::zero());
        assert!(s.contains(V::new(0.0, 0.0, 0.95), &mut rng).unwrap());
        assert!(!s.contains(V::new(0.0, 0.0, 1.01), &mut rng).unwrap());
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (V::zero(), V::new(1.0, 0.0, 0.0), V::new(0.0, 1.0, 0.0));
        assert_eq!(closest_point_on_triangle(V::new(-1.0, -1.0, 0.0), a, b, c), a);
        assert_eq!(
            closest_point_on_triangle(V::new(0.25, 0.25, 3.0), a, b, c),
            V::new(0.25, 0.25, 0.0)
        );
        assert_eq!(
            closest_point_on_triangle(V::new(0.5, -2.0, 0.0), a, b, c),
            V::new(0.5, 0.0, 0.0)
        );
        let p = closest_point_on_triangle(V::new(1.0, 1.0, 0.0), a, b, c);
        assert!((p - V::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }
}
