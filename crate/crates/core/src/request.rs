//! JSON render request shared by the command line and the HTTP service.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::classification::{TransferFunction, TransferFunctionError};
use crate::image::ImageRgba;
use crate::raycast::{Camera, RenderError, RenderSettings, Renderer};
use crate::volume::ScalarVolume;

/// A preset name or an inline transfer function.
///
/// JSON: `"bone"`, `{"preset": "bone"}` or
/// `{"domain": [lo, hi], "control_points": [...]}`.
#[derive(Debug, Clone, PartialEq)]
pub enum TransferFunctionSpec {
    Preset(String),
    Inline(TransferFunction),
}

impl TransferFunctionSpec {
    pub fn resolve(&self) -> Result<TransferFunction, TransferFunctionError> {
        match self {
            TransferFunctionSpec::Preset(name) => TransferFunction::preset(name),
            TransferFunctionSpec::Inline(tf) => Ok(tf.clone()),
        }
    }
}

impl Default for TransferFunctionSpec {
    fn default() -> Self {
        TransferFunctionSpec::Preset("bone".into())
    }
}

impl Serialize for TransferFunctionSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TransferFunctionSpec::Preset(name) => s.serialize_str(name),
            TransferFunctionSpec::Inline(tf) => tf.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for TransferFunctionSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = serde_json::Value::deserialize(d)?;
        match &value {
            serde_json::Value::String(name) => Ok(Self::Preset(name.clone())),
            serde_json::Value::Object(map) if map.contains_key("preset") => match map.get("preset") {
                Some(serde_json::Value::String(name)) if map.len() == 1 => Ok(Self::Preset(name.clone())),
                _ => Err(D::Error::custom("`preset` must be the only key and a string")),
            },
            _ => TransferFunction::deserialize(value)
                .map(Self::Inline)
                .map_err(D::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub camera: Camera,
    #[serde(default)]
    pub transfer_function: TransferFunctionSpec,
    #[serde(default)]
    pub settings: RenderSettings,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequestError {
    #[error(transparent)]
    TransferFunction(#[from] TransferFunctionError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl RequestError {
    pub fn code(&self) -> &'static str {
        match self {
            RequestError::TransferFunction(TransferFunctionError::UnknownPreset(_)) => "UnknownPreset",
            RequestError::TransferFunction(_) => "InvalidTransferFunction",
            RequestError::Render(e) => e.code(),
        }
    }
}

impl RenderRequest {
    /// Validates everything that does not depend on the volume.
    pub fn validate(&self) -> Result<TransferFunction, RequestError> {
        self.camera.validate()?;
        self.settings.validate()?;
        Ok(self.transfer_function.resolve()?)
    }

    pub fn execute(&self, vol: &ScalarVolume) -> Result<ImageRgba, RequestError> {
        let tf = self.validate()?;
        Ok(Renderer::<f32>::new(vol, &tf, &self.settings)?.render(&self.camera)?)
    }
}
