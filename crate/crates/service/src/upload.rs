//! Turning uploaded payloads into volumes.

use std::io::{Cursor, Read};

use thiserror::Error;
use voxcast_core::ingest::raw::load_raw_with_manifest;
use voxcast_core::ingest::{assemble_volume, parse_dicom_slice, RawManifest};
use voxcast_core::{IngestError, ScalarVolume};

#[derive(Debug, Error)]
pub enum UploadError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("invalid zip archive: {0}")]
    InvalidArchive(String),
    #[error("invalid raw manifest: {0}")]
    InvalidManifest(String),
    #[error("{0}")]
    MissingPart(String),
}

impl UploadError {
    pub fn code(&self) -> &'static str {
        match self {
            UploadError::Ingest(e) => e.code(),
            UploadError::InvalidArchive(_) => "InvalidArchive",
            UploadError::InvalidManifest(_) => "InvalidManifest",
            UploadError::MissingPart(_) => "MissingPart",
        }
    }
}

/// Parses and assembles a set of DICOM slice files.
pub fn volume_from_dicom_files<B: AsRef<[u8]>>(files: &[B]) -> Result<ScalarVolume, UploadError> {
    let slices = files
        .iter()
        .map(|f| parse_dicom_slice(f.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_volume(&slices)?)
}

/// Reads every regular file of a zip archive as one DICOM slice.
pub fn volume_from_dicom_zip(bytes: &[u8]) -> Result<ScalarVolume, UploadError> {
    let mut archive =
        zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| UploadError::InvalidArchive(e.to_string()))?;
    let mut files = Vec::new();
    for i in 0..archive.len() {
        let mut entry = archive
            .by_index(i)
            .map_err(|e| UploadError::InvalidArchive(e.to_string()))?;
        if entry.is_dir() || entry.name().starts_with("__MACOSX/") {
            continue;
        }
        let mut data = Vec::with_capacity(entry.size() as usize);
        entry
            .read_to_end(&mut data)
            .map_err(|e| UploadError::InvalidArchive(e.to_string()))?;
        files.push(data);
    }
    volume_from_dicom_files(&files)
}

pub fn volume_from_raw(bytes: &[u8], manifest_json: &[u8]) -> Result<ScalarVolume, UploadError> {
    let manifest: RawManifest =
        serde_json::from_slice(manifest_json).map_err(|e| UploadError::InvalidManifest(e.to_string()))?;
    Ok(load_raw_with_manifest(bytes, &manifest)?)
}
