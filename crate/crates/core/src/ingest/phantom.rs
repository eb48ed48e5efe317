//! Deterministic synthetic CT volumes for tests, benchmarks and demos.
//!
//! Material boundaries are linear ramps a few voxels wide rather than hard
//! steps, so isosurfaces sit at analytically known positions.

use serde::{Deserialize, Serialize};

use crate::volume::ScalarVolume;

pub const AIR: f64 = -1000.0;
pub const SOFT_TISSUE: f64 = 40.0;
pub const LUNG: f64 = -750.0;
pub const BONE: f64 = 1000.0;

/// Width in voxels of the transition ramp at every material boundary.
pub const RAMP_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Sphere,
    Shell,
    Torso,
}

impl std::str::FromStr for PhantomKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(Self::Sphere),
            "shell" => Ok(Self::Shell),
            "torso" => Ok(Self::Torso),
            other => Err(format!("unknown phantom {other:?} (expected sphere, shell or torso)")),
        }
    }
}

fn center(dims: [usize; 3]) -> [f64; 3] {
    dims.map(|d| (d as f64 - 1.0) / 2.0)
}

fn min_dim(dims: [usize; 3]) -> f64 {
    dims.iter().copied().min().unwrap_or(2) as f64
}

/// Radius (voxels) of the `value == 0` level set of the sphere phantom.
pub fn sphere_radius(dims: [usize; 3]) -> f64 {
    0.3 * min_dim(dims)
}

/// Inner and outer radii of the shell phantom's `value == 0` level sets.
pub fn shell_radii(dims: [usize; 3]) -> (f64, f64) {
    let m = min_dim(dims);
    (0.24 * m, 0.36 * m)
}

/// Membership in `[0, 1]`: 1 well inside, 0 well outside, linear across the ramp.
fn ramp(signed_distance: f64) -> f64 {
    (0.5 - signed_distance / RAMP_WIDTH).clamp(0.0, 1.0)
}

fn to_i16(v: f64) -> i16 {
    v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

struct Ellipsoid {
    center: [f64; 3],
    semi_axes: [f64; 3],
}

impl Ellipsoid {
    /// Approximate signed distance, exact on the axes.
    fn signed_distance(&self, p: [f64; 3]) -> f64 {
        let rho2: f64 = (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.semi_axes[a]).powi(2))
            .sum();
        let min_axis = self.semi_axes.iter().copied().fold(f64::INFINITY, f64::min);
        (rho2.sqrt() - 1.0) * min_axis
    }
}

fn torso_parts(dims: [usize; 3]) -> (Ellipsoid, Vec<Ellipsoid>, Vec<Ellipsoid>) {
    let c = center(dims);
    let n = dims.map(|d| d as f64);
    let at = |fx: f64, fy: f64, fz: f64| [c[0] + fx * n[0], c[1] + fy * n[1], c[2] + fz * n[2]];
    let size = |fx: f64, fy: f64, fz: f64| [fx * n[0], fy * n[1], fz * n[2]];
    let body = Ellipsoid {
        center: c,
        semi_axes: size(0.36, 0.26, 0.40),
    };
    let lungs = vec![
        Ellipsoid {
            center: at(-0.15, -0.02, 0.10),
            semi_axes: size(0.11, 0.14, 0.18),
        },
        Ellipsoid {
            center: at(0.15, -0.02, 0.10),
            semi_axes: size(0.11, 0.14, 0.18),
        },
    ];
    let bones = vec![
        // spine
        Ellipsoid {
            center: at(0.0, 0.17, 0.0),
            semi_axes: size(0.05, 0.05, 0.36),
        },
        // sternum
        Ellipsoid {
            center: at(0.0, -0.21, 0.12),
            semi_axes: size(0.03, 0.025, 0.12),
        },
        // pelvis
        Ellipsoid {
            center: at(0.0, 0.05, -0.28),
            semi_axes: size(0.24, 0.10, 0.06),
        },
    ];
    (body, lungs, bones)
}

/// Generates a phantom with 1 mm isotropic spacing.
///
/// * `Sphere`: bone-valued ball of radius [`sphere_radius`] in air.
/// * `Shell`: bone-valued spherical shell between [`shell_radii`] in air.
/// * `Torso`: soft-tissue ellipsoid with lungs and bone inclusions, padded by
///   air on every side.
pub fn generate_phantom(kind: PhantomKind, dims: [usize; 3]) -> ScalarVolume {
    let c = center(dims);
    let radius = |i: usize, j: usize, k: usize| {
        let d = [i as f64 - c[0], j as f64 - c[1], k as f64 - c[2]];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    };
    let span = BONE - AIR;
    let result = match kind {
        PhantomKind::Sphere => {
            let r0 = sphere_radius(dims);
            ScalarVolume::from_fn(dims, [1.0; 3], |i, j, k| {
                let r = radius(i, j, k);
                to_i16(AIR + span * ramp(r - r0))
            })
        }
        PhantomKind::Shell => {
            let (r_in, r_out) = shell_radii(dims);
            let mid = 0.5 * (r_in + r_out);
            let half = 0.5 * (r_out - r_in);
            ScalarVolume::from_fn(dims, [1.0; 3], |i, j, k| {
                let r = radius(i, j, k);
                to_i16(AIR + span * ramp((r - mid).abs() - half))
            })
        }
        PhantomKind::Torso => {
            let (body, lungs, bones) = torso_parts(dims);
            ScalarVolume::from_fn(dims, [1.0; 3], |i, j, k| {
                let p = [i as f64, j as f64, k as f64];
                let mut v = AIR + (SOFT_TISSUE - AIR) * ramp(body.signed_distance(p));
                for lung in &lungs {
                    let m = ramp(lung.signed_distance(p));
                    v += (LUNG - v) * m;
                }
                for bone in &bones {
                    let m = ramp(bone.signed_distance(p));
                    v += (BONE - v) * m;
                }
                to_i16(v)
            })
        }
    };
    result.expect("phantom dims are validated by the caller")
}
