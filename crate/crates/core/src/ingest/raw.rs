//! Header-less binary volumes with a JSON sidecar.

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::volume::ScalarVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    U8,
    I16,
    U16,
}

impl SampleFormat {
    pub fn width(self) -> usize {
        match self {
            SampleFormat::U8 => 1,
            SampleFormat::I16 | SampleFormat::U16 => 2,
        }
    }
}

impl std::str::FromStr for SampleFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "u8" => Ok(Self::U8),
            "i16" => Ok(Self::I16),
            "u16" => Ok(Self::U16),
            other => Err(format!("unknown sample format {other:?} (expected u8, i16 or u16)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    #[default]
    Little,
}

/// Sidecar describing a raw payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawManifest {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub sample_format: SampleFormat,
    #[serde(default)]
    pub endianness: Endianness,
}

/// Decodes a little-endian raw payload. `u16` samples above `i16::MAX` are
/// clamped and counted in [`ScalarVolume::clamped_samples`].
pub fn load_raw(
    bytes: &[u8],
    dims: [usize; 3],
    spacing: [f64; 3],
    format: SampleFormat,
) -> Result<ScalarVolume, IngestError> {
    let expected = dims.iter().product::<usize>() * format.width();
    if bytes.len() != expected {
        return Err(IngestError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let mut clamped = 0u64;
    let values: Vec<i16> = match format {
        SampleFormat::U8 => bytes.iter().map(|&b| i16::from(b)).collect(),
        SampleFormat::I16 => bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect(),
        SampleFormat::U16 => bytes
            .chunks_exact(2)
            .map(|c| {
                let v = u16::from_le_bytes([c[0], c[1]]);
                i16::try_from(v).unwrap_or_else(|_| {
                    clamped += 1;
                    i16::MAX
                })
            })
            .collect(),
    };
    Ok(ScalarVolume::new(dims, spacing, values)?.with_clamped_samples(clamped))
}

pub fn load_raw_with_manifest(bytes: &[u8], manifest: &RawManifest) -> Result<ScalarVolume, IngestError> {
    load_raw(bytes, manifest.dims, manifest.spacing, manifest.sample_format)
}

/// Encodes a volume as little-endian i16, the inverse of `load_raw(.., I16)`.
pub fn save_raw(vol: &ScalarVolume) -> Vec<u8> {
    vol.values().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn manifest_for(vol: &ScalarVolume) -> RawManifest {
    RawManifest {
        dims: vol.dims(),
        spacing: vol.spacing(),
        sample_format: SampleFormat::I16,
        endianness: Endianness::Little,
    }
}
