//! Ray casting renderer.

mod camera;
mod composite;
mod render;
mod settings;

use thiserror::Error;

pub use camera::{generate_ray, Camera, Ray, ViewFrame};
pub use composite::{blend_under, composite_step, correct_opacity, shade_phong, Phong, MIN_GRADIENT, PHONG};
pub use render::{render, render_region, PixelRect, Renderer};
pub use settings::{RenderMode, RenderSettings};

use crate::blockgrid::BlockError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid setting {field}: {message}")]
    InvalidSettings { field: &'static str, message: String },
    #[error("isovalue {isovalue} outside the volume's value range [{min}, {max}]")]
    IsovalueOutOfRange { isovalue: f64, min: i16, max: i16 },
    #[error(transparent)]
    Block(#[from] BlockError),
}

impl RenderError {
    pub fn code(&self) -> &'static str {
        match self {
            RenderError::InvalidSettings { .. } => "InvalidSettings",
            RenderError::IsovalueOutOfRange { .. } => "IsovalueOutOfRange",
            RenderError::Block(_) => "InvalidBlockSpec",
        }
    }
}
