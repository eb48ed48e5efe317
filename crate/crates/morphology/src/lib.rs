//! Local surface-to-volume ratio (SVR) fields on closed triangle meshes.
//!
//! For a point `X` and radius `R`, `SVR(X) = S / V` where `S` is the mesh
//! area inside the ball `Ω(X, R)` and `V` the volume of the ball inside the
//! mesh. Both are Monte Carlo estimates with standard errors.

mod bvh;
pub mod io;
mod mesh;
mod svr;

pub use mesh::{closest_point_on_triangle, Mesh, MeshError};
pub use svr::{
    clipped_area, clipped_volume, svr_at_point, svr_field, Estimate, QueryPoints, SvrField, SvrParams, SvrPoint,
    SvrQuery, SvrValue,
};

pub type TriangleMesh = Mesh<f64>;
pub type TriangleMeshF32 = Mesh<f32>;
