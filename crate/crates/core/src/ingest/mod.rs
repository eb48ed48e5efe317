//! Turning CT slice stacks, raw dumps and synthetic phantoms into
//! [`ScalarVolume`]s.
//!
//! Samples are calibrated (`slope·raw + intercept`) before anything else sees
//! them, so every downstream stage works in Hounsfield-like units.

pub mod dicom;
pub mod phantom;
pub mod raw;

use thiserror::Error;

use crate::volume::ScalarVolume;

pub use dicom::{parse_dicom_slice, write_dicom_slice, SliceFixture};
pub use phantom::{generate_phantom, shell_radii, sphere_radius, PhantomKind};
pub use raw::{load_raw, save_raw, RawManifest, SampleFormat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("missing DICM magic at offset 128")]
    MissingMagic,
    #[error("unsupported transfer syntax {uid}")]
    UnsupportedTransferSyntax { uid: String },
    #[error("missing required tag {tag}")]
    MissingRequiredTag { tag: &'static str },
    #[error("pixel data holds {actual} bytes, expected {expected}")]
    PixelDataLengthMismatch { expected: usize, actual: usize },
    #[error("unsupported BitsAllocated {bits_allocated} (only 16 is accepted)")]
    UnsupportedPixelFormat { bits_allocated: u16 },
    #[error("multi-frame images are not supported")]
    UnsupportedMultiFrame,
    #[error("malformed value for {tag}")]
    MalformedValue { tag: &'static str },
    #[error("input truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("need at least 2 slices, got {count}")]
    TooFewSlices { count: usize },
    #[error("slices disagree on rows/columns/pixel spacing")]
    InconsistentGeometry,
    #[error("slice gap {gap} mm deviates more than 10% from median gap {median} mm")]
    NonUniformSpacing { gap: f64, median: f64 },
    #[error("two slices share position {position} mm")]
    DuplicatePosition { position: f64 },
    #[error("payload holds {actual} samples/bytes, expected {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("every dimension must be at least 2, got {dims:?}")]
    InvalidDimensions { dims: [usize; 3] },
    #[error("spacing must be positive and finite, got {spacing:?}")]
    InvalidSpacing { spacing: [f64; 3] },
}

impl IngestError {
    /// Stable machine-readable name, used in CLI and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Self::MissingMagic => "MissingMagic",
            Self::UnsupportedTransferSyntax { .. } => "UnsupportedTransferSyntax",
            Self::MissingRequiredTag { .. } => "MissingRequiredTag",
            Self::PixelDataLengthMismatch { .. } => "PixelDataLengthMismatch",
            Self::UnsupportedPixelFormat { .. } => "UnsupportedPixelFormat",
            Self::UnsupportedMultiFrame => "UnsupportedMultiFrame",
            Self::MalformedValue { .. } => "MalformedValue",
            Self::Truncated { .. } => "Truncated",
            Self::TooFewSlices { .. } => "TooFewSlices",
            Self::InconsistentGeometry => "InconsistentGeometry",
            Self::NonUniformSpacing { .. } => "NonUniformSpacing",
            Self::DuplicatePosition { .. } => "DuplicatePosition",
            Self::SizeMismatch { .. } => "SizeMismatch",
            Self::InvalidDimensions { .. } => "InvalidDimensions",
            Self::InvalidSpacing { .. } => "InvalidSpacing",
        }
    }
}

/// One decoded CT slice, samples still uncalibrated.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub rows: usize,
    pub cols: usize,
    /// (row spacing, column spacing) in mm, as stored in PixelSpacing.
    pub pixel_spacing: (f64, f64),
    pub slice_position: f64,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    /// Row-major stored values (signed or unsigned 16-bit, widened).
    pub samples: Vec<i32>,
}

impl SliceImage {
    pub fn new(
        rows: usize,
        cols: usize,
        pixel_spacing: (f64, f64),
        slice_position: f64,
        rescale_slope: f64,
        rescale_intercept: f64,
        samples: Vec<i32>,
    ) -> Result<Self, IngestError> {
        if rows == 0 || cols == 0 {
            return Err(IngestError::InvalidDimensions { dims: [cols, rows, 1] });
        }
        if samples.len() != rows * cols {
            return Err(IngestError::SizeMismatch {
                expected: rows * cols,
                actual: samples.len(),
            });
        }
        if !(pixel_spacing.0 > 0.0 && pixel_spacing.1 > 0.0) {
            return Err(IngestError::InvalidSpacing {
                spacing: [pixel_spacing.1, pixel_spacing.0, 1.0],
            });
        }
        Ok(Self {
            rows,
            cols,
            pixel_spacing,
            slice_position,
            rescale_slope,
            rescale_intercept,
            samples,
        })
    }

    /// Calibrated value of one stored sample, rounded and clamped to i16.
    pub fn calibrate(&self, raw: i32) -> i16 {
        let v = self.rescale_slope * f64::from(raw) + self.rescale_intercept;
        v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
    }
}

const GAP_TOLERANCE: f64 = 0.10;

/// Stacks slices into a volume ordered by ascending position.
///
/// The z spacing is the median adjacent gap (lower median for an even count of
/// gaps); any gap further than 10% from it is rejected.
pub fn assemble_volume(slices: &[SliceImage]) -> Result<ScalarVolume, IngestError> {
    if slices.len() < 2 {
        return Err(IngestError::TooFewSlices { count: slices.len() });
    }
    let first = &slices[0];
    if slices
        .iter()
        .any(|s| s.rows != first.rows || s.cols != first.cols || s.pixel_spacing != first.pixel_spacing)
    {
        return Err(IngestError::InconsistentGeometry);
    }

    let mut order: Vec<&SliceImage> = slices.iter().collect();
    order.sort_by(|a, b| a.slice_position.total_cmp(&b.slice_position));

    let mut gaps = Vec::with_capacity(order.len() - 1);
    for pair in order.windows(2) {
        let gap = pair[1].slice_position - pair[0].slice_position;
        if gap == 0.0 {
            return Err(IngestError::DuplicatePosition {
                position: pair[0].slice_position,
            });
        }
        gaps.push(gap);
    }
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    if let Some(&gap) = gaps.iter().find(|&&g| (g - median).abs() > GAP_TOLERANCE * median) {
        return Err(IngestError::NonUniformSpacing { gap, median });
    }

    let mut values = Vec::with_capacity(first.rows * first.cols * order.len());
    for s in &order {
        values.extend(s.samples.iter().map(|&raw| s.calibrate(raw)));
    }
    let (row_spacing, col_spacing) = first.pixel_spacing;
    ScalarVolume::new(
        [first.cols, first.rows, order.len()],
        [col_spacing, row_spacing, median],
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice(z: f64, samples: Vec<i32>) -> SliceImage {
        SliceImage::new(2, 2, (1.0, 1.0), z, 1.0, 0.0, samples).unwrap()
    }

    fn flat(z: f64) -> SliceImage {
        slice(z, vec![z as i32; 4])
    }

    #[test]
    fn stacks_three_slices() {
        let vol = assemble_volume(&[flat(0.0), flat(1.0), flat(2.0)]).unwrap();
        assert_eq!(vol.dims(), [2, 2, 3]);
        assert_eq!(vol.spacing()[2], 1.0);
        assert_eq!(vol.value_range(), (0, 2));
    }

    #[test]
    fn non_uniform_gap() {
        let err = assemble_volume(&[flat(0.0), flat(1.0), flat(5.0)]).unwrap_err();
        assert_eq!(err, IngestError::NonUniformSpacing { gap: 4.0, median: 1.0 });
    }

    #[test]
    fn gap_within_tolerance_is_accepted() {
        let vol = assemble_volume(&[flat(0.0), flat(1.0), flat(2.09), flat(3.09)]).unwrap();
        assert_eq!(vol.spacing()[2], 1.0);
    }

    #[test]
    fn duplicate_position() {
        let err = assemble_volume(&[flat(0.0), flat(0.0)]).unwrap_err();
        assert_eq!(err.code(), "DuplicatePosition");
    }

    #[test]
    fn mixed_geometry() {
        let odd = SliceImage::new(1, 4, (1.0, 1.0), 1.0, 1.0, 0.0, vec![0; 4]).unwrap();
        assert_eq!(
            assemble_volume(&[flat(0.0), odd]).unwrap_err(),
            IngestError::InconsistentGeometry
        );
        let spaced = SliceImage::new(2, 2, (0.5, 1.0), 1.0, 1.0, 0.0, vec![0; 4]).unwrap();
        assert_eq!(
            assemble_volume(&[flat(0.0), spaced]).unwrap_err(),
            IngestError::InconsistentGeometry
        );
    }

    #[test]
    fn single_slice_is_rejected() {
        assert_eq!(assemble_volume(&[flat(0.0)]).unwrap_err().code(), "TooFewSlices");
    }

    #[test]
    fn calibration_is_linear_and_clamped() {
        let mut s = slice(0.0, vec![0; 4]);
        s.rescale_slope = 2.0;
        s.rescale_intercept = -1024.0;
        for raw in -2000..2000 {
            assert_eq!(i32::from(s.calibrate(raw)), (2 * raw - 1024).clamp(-32768, 32767));
        }
        assert_eq!(s.calibrate(40000), i16::MAX);
    }

    #[test]
    fn pixel_spacing_maps_columns_to_x() {
        let a = SliceImage::new(2, 3, (0.8, 0.5), 0.0, 1.0, 0.0, vec![0; 6]).unwrap();
        let mut b = a.clone();
        b.slice_position = 2.0;
        let vol = assemble_volume(&[a, b]).unwrap();
        assert_eq!(vol.dims(), [3, 2, 2]);
        assert_eq!(vol.spacing(), [0.5, 0.8, 2.0]);
    }
}
