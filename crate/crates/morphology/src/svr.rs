use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use voxcast_core::{Real, Vec3};

use crate::bvh::{crossing, Crossing};
use crate::mesh::{closest_point_on_triangle, Mesh, MeshError};

const AREA_STREAM: u64 = 1;
const VOLUME_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvrParams {
    pub samples_per_triangle: usize,
    pub volume_samples: usize,
    pub rng_seed: u64,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            samples_per_triangle: 256,
            volume_samples: 100_000,
            rng_seed: 0,
        }
    }
}

/// The ball `Ω` of radius `radius` around `center`, with estimator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrQuery<T> {
    pub center: Vec3<T>,
    pub radius: T,
    pub samples_per_triangle: usize,
    pub volume_samples: usize,
    pub rng_seed: u64,
}

impl<T: Real> SvrQuery<T> {
    pub fn new(center: Vec3<T>, radius: T) -> Self {
        Self::with_params(center, radius, SvrParams::default())
    }

    pub fn with_params(center: Vec3<T>, radius: T, p: SvrParams) -> Self {
        Self {
            center,
            radius,
            samples_per_triangle: p.samples_per_triangle,
            volume_samples: p.volume_samples,
            rng_seed: p.rng_seed,
        }
    }

    fn validate(&self) -> Result<(), MeshError> {
        if !(self.radius > T::zero() && self.radius.is_finite()) {
            return Err(MeshError::InvalidQuery(format!(
                "radius must be positive, got {:?}",
                self.radius
            )));
        }
        if self.samples_per_triangle == 0 || self.volume_samples == 0 {
            return Err(MeshError::InvalidQuery("sample counts must be at least 1".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.rng_seed, stream))
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub value: T,
    pub stderr: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvrValue<T> {
    Defined(T),
    /// `Ω` does not meet the mesh interior.
    Undefined,
}

impl<T: Copy> SvrValue<T> {
    pub fn value(&self) -> Option<T> {
        match *self {
            SvrValue::Defined(v) => Some(v),
            SvrValue::Undefined => None,
        }
    }
}

impl<T: Serialize> Serialize for SvrValue<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SvrValue::Defined(v) => v.serialize(s),
            SvrValue::Undefined => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Serialize + Copy"))]
pub struct SvrPoint<T> {
    pub index: usize,
    pub position: Vec3<T>,
    pub svr: SvrValue<T>,
    pub area: Estimate<T>,
    pub volume: Estimate<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Serialize + Copy"))]
pub struct SvrField<T> {
    pub radius: T,
    pub points: Vec<SvrPoint<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryPoints {
    #[default]
    Vertices,
    Centroids,
}

/// SplitMix64 finaliser of `seed` combined with `stream`.
fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` points of the unit square, jittered on the largest square grid that
/// fits and uniform for the remainder.
fn stratified(n: usize, rng: &mut impl Rng, mut f: impl FnMut(f64, f64)) {
    let m = (n as f64).sqrt().floor() as usize;
    for i in 0..m {
        for j in 0..m {
            let u = (i as f64 + rng.random::<f64>()) / m as f64;
            let v = (j as f64 + rng.random::<f64>()) / m as f64;
            f(u, v);
        }
    }
    for _ in m * m..n {
        f(rng.random(), rng.random());
    }
}

fn binomial<T: Real>(domain: T, hits: usize, n: usize) -> (T, T) {
    let p = hits as f64 / n as f64;
    let d = domain.as_f64();
    (T::lit(d * p), T::lit(d * d * p * (1.0 - p) / n as f64))
}

enum Placement {
    Inside,
    Outside,
    Crossing,
}

fn place<T: Real>(q: &SvrQuery<T>, [a, b, c]: [Vec3<T>; 3]) -> Placement {
    let r2 = q.radius * q.radius;
    let inside = |p: Vec3<T>| (p - q.center).norm_squared() <= r2;
    if inside(a) && inside(b) && inside(c) {
        Placement::Inside
    } else if (closest_point_on_triangle(q.center, a, b, c) - q.center).norm_squared() > r2 {
        Placement::Outside
    } else {
        Placement::Crossing
    }
}

/// Area of `abc` inside the ball, from uniform samples over whichever is
/// smaller: the triangle, or the disk in which its plane cuts the ball.
fn partial_area<T: Real>(q: &SvrQuery<T>, [a, b, c]: [Vec3<T>; 3], rng: &mut impl Rng) -> (T, T) {
    let n = q.samples_per_triangle;
    let (e1, e2) = (b - a, c - a);
    let cross = e1.cross(e2);
    let tri_area = cross.norm() * T::lit(0.5);
    let normal = cross.normalize();
    let offset = normal.dot(q.center - a);
    let rho2 = (q.radius * q.radius - offset * offset).max(T::zero());
    let disk_area = T::PI() * rho2;
    let mut hits = 0;
    if disk_area < tri_area {
        let foot = q.center - normal * offset;
        let u1 = e1.normalize();
        let u2 = normal.cross(u1);
        let rho = rho2.sqrt().as_f64();
        let (d00, d01, d11) = (e1.dot(e1), e1.dot(e2), e2.dot(e2));
        let denom = d00 * d11 - d01 * d01;
        stratified(n, rng, |u, v| {
            let (r, th) = (rho * u.sqrt(), std::f64::consts::TAU * v);
            let p = foot + u1 * T::lit(r * th.cos()) + u2 * T::lit(r * th.sin());
            let w = p - a;
            let (d20, d21) = (w.dot(e1), w.dot(e2));
            let beta = (d11 * d20 - d01 * d21) / denom;
            let gamma = (d00 * d21 - d01 * d20) / denom;
            if beta >= T::zero() && gamma >= T::zero() && beta + gamma <= T::one() {
                hits += 1;
            }
        });
        binomial(disk_area, hits, n)
    } else {
        let r2 = q.radius * q.radius;
        stratified(n, rng, |u, v| {
            let su = u.sqrt();
            let p = a + e1 * T::lit(su * (1.0 - v)) + e2 * T::lit(su * v);
            if (p - q.center).norm_squared() <= r2 {
                hits += 1;
            }
        });
        binomial(tri_area, hits, n)
    }
}

/// Mesh area inside the ball. Triangles wholly inside or outside are exact;
/// only triangles cut by the sphere are sampled.
pub fn clipped_area<T: Real>(mesh: &Mesh<T>, q: &SvrQuery<T>) -> Result<Estimate<T>, MeshError> {
    q.validate()?;
    let mut rng = q.rng(AREA_STREAM);
    let (mut value, mut var) = (T::zero(), T::zero());
    for t in mesh.bvh().near(q.center, q.radius) {
        let tri = mesh.corners(t as usize);
        match place(q, tri) {
            Placement::Inside => value += mesh.triangle_area(t as usize),
            Placement::Outside => {}
            Placement::Crossing => {
                let (v, s2) = partial_area(q, tri, &mut rng);
                value += v;
                var += s2;
            }
        }
    }
    Ok(Estimate {
        value,
        stderr: var.sqrt(),
    })
}

fn ball_point<T: Real>(q: &SvrQuery<T>, rng: &mut impl Rng) -> Vec3<T> {
    loop {
        let p = [
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0f64),
        ];
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
            return q.center + Vec3::from(p).cast::<T>() * q.radius;
        }
    }
}

/// Volume of the ball inside the mesh.
///
/// Uniform points in the ball are classified by crossing parity. Each point
/// is compared with one reference point, itself classified by a ray to
/// infinity, so only triangles near the ball are tested per sample; a
/// degenerate segment falls back to the full ray test.
pub fn clipped_volume<T: Real>(mesh: &Mesh<T>, q: &SvrQuery<T>) -> Result<Estimate<T>, MeshError> {
    q.validate()?;
    if !mesh.is_closed() {
        return Err(MeshError::NotClosed);
    }
    let mut rng = q.rng(VOLUME_STREAM);
    let ball = T::lit(4.0 / 3.0) * T::PI() * q.radius.powi(3);
    let exact = |value| Estimate {
        value,
        stderr: T::zero(),
    };
    let mut near = Vec::new();
    let mut all_inside = true;
    for t in mesh.bvh().near(q.center, q.radius) {
        let tri = mesh.corners(t as usize);
        match place(q, tri) {
            Placement::Outside => all_inside = false,
            Placement::Inside => near.push(tri),
            Placement::Crossing => {
                all_inside = false;
                near.push(tri);
            }
        }
    }
    if near.is_empty() {
        // The sphere misses the surface: the ball is wholly inside or outside.
        let inside = mesh.contains(q.center, &mut rng)?;
        return Ok(exact(if inside { ball } else { T::zero() }));
    }
    if all_inside && near.len() == mesh.triangles().len() {
        return Ok(exact(mesh.volume()?));
    }

    let n = q.volume_samples;
    let reference = ball_point(q, &mut rng);
    let reference_inside = mesh.contains(reference, &mut rng)?;
    let mut hits = usize::from(reference_inside);
    for _ in 1..n {
        let p = ball_point(q, &mut rng);
        let d = p - reference;
        let mut odd = false;
        let mut degenerate = false;
        for &tri in &near {
            match crossing(reference, d, T::one(), tri) {
                Crossing::Hit => odd = !odd,
                Crossing::Miss => {}
                Crossing::Degenerate => {
                    degenerate = true;
                    break;
                }
            }
        }
        let inside = if degenerate {
            mesh.contains(p, &mut rng)?
        } else {
            reference_inside != odd
        };
        hits += usize::from(inside);
    }
    let (value, var) = binomial(ball, hits, n);
    Ok(Estimate {
        value,
        stderr: var.sqrt(),
    })
}

pub fn svr_at_point<T: Real>(mesh: &Mesh<T>, q: &SvrQuery<T>) -> Result<SvrPoint<T>, MeshError> {
    let area = clipped_area(mesh, q)?;
    let volume = clipped_volume(mesh, q)?;
    let svr = if volume.value > T::zero() {
        SvrValue::Defined(area.value / volume.value)
    } else {
        SvrValue::Undefined
    };
    Ok(SvrPoint {
        index: 0,
        position: q.center,
        svr,
        area,
        volume,
    })
}

/// SVR at every vertex (or triangle centroid) with per-point seeds derived
/// from `params.rng_seed` and the point index.
pub fn svr_field<T: Real>(
    mesh: &Mesh<T>,
    radius: T,
    params: SvrParams,
    points: QueryPoints,
) -> Result<SvrField<T>, MeshError> {
    let positions = match points {
        QueryPoints::Vertices => mesh.vertices().to_vec(),
        QueryPoints::Centroids => mesh.centroids(),
    };
    let points = positions
        .par_iter()
        .enumerate()
        .map(|(index, &center)| {
            let q = SvrQuery::with_params(
                center,
                radius,
                SvrParams {
                    rng_seed: mix(params.rng_seed, index as u64),
                    ..params
                },
            );
            svr_at_point(mesh, &q).map(|p| SvrPoint { index, ..p })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SvrField { radius, points })
}

impl<T: Real> SvrField<T> {
    /// `vertex,x,y,z,svr,stderr_s,stderr_v`; undefined values are written as
    /// `undefined`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,x,y,z,svr,stderr_s,stderr_v\n");
        for p in &self.points {
            let svr = match p.svr {
                SvrValue::Defined(v) => format!("{:.9}", v.as_f64()),
                SvrValue::Undefined => "undefined".into(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{:.9},{:.9}\n",
                p.index,
                p.position.x.as_f64(),
                p.position.y.as_f64(),
                p.position.z.as_f64(),
                svr,
                p.area.stderr.as_f64(),
                p.volume.stderr.as_f64()
            ));
        }
        out
    }

    pub fn defined_values(&self) -> Vec<T> {
        self.points.iter().filter_map(|p| p.svr.value()).collect()
    }
}
