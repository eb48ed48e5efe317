//! Ray-cast volume rendering of CT data.
//!
//! The pipeline runs ingest → sampling → classification → block
//! decomposition → ray casting, with image-quality metrics on top. Numeric
//! kernels are generic over [`Real`]; the aliases below fix the common
//! precisions.

pub mod blockgrid;
pub mod classification;
pub mod image;
pub mod ingest;
pub mod quality;
pub mod raycast;
pub mod real;
pub mod request;
pub mod sampling;
pub mod volume;

pub use blockgrid::{decompose, BlockGrid};
pub use classification::{Classification, TransferFunction};
pub use image::{ImageRgba, RenderStats};
pub use ingest::IngestError;
pub use raycast::{render, Camera, RenderError, RenderMode, RenderSettings, Renderer};
pub use real::{Real, Vec3};
pub use request::{RenderRequest, TransferFunctionSpec};
pub use sampling::Interpolation;
pub use volume::{ScalarVolume, VolumeManifest, VolumeSource};

pub type Vec3f = Vec3<f32>;
pub type Vec3d = Vec3<f64>;
pub type Rayf = raycast::Ray<f32>;
pub type Rayd = raycast::Ray<f64>;
/// Single-precision renderer used by the command line and the service.
pub type RendererF32<'a> = Renderer<'a, f32>;
/// Double-precision renderer used for reference images.
pub type RendererF64<'a> = Renderer<'a, f64>;
