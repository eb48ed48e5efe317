//! Calibrated scalar volumes and their catalogue metadata.

use serde::{Deserialize, Serialize};

use crate::ingest::IngestError;
use crate::real::{Real, Vec3};

/// Dense 3-D grid of calibrated 16-bit scalars, x varying fastest.
///
/// Voxel `(i, j, k)` sits at physical position `(i·sx, j·sy, k·sz)` mm, so the
/// sampled domain is the box `[0, (n−1)·s]` on each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    values: Vec<i16>,
    value_range: (i16, i16),
    clamped_samples: u64,
}

impl ScalarVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<i16>) -> Result<Self, IngestError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(IngestError::InvalidDimensions { dims });
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(IngestError::InvalidSpacing { spacing });
        }
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(IngestError::SizeMismatch {
                expected,
                actual: values.len(),
            });
        }
        let value_range = values
            .iter()
            .fold((i16::MAX, i16::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Self {
            dims,
            spacing,
            values,
            value_range,
            clamped_samples: 0,
        })
    }

    /// Builds a volume by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> i16,
    ) -> Result<Self, IngestError> {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, spacing, values)
    }

    pub(crate) fn with_clamped_samples(mut self, count: u64) -> Self {
        self.clamped_samples = count;
        self
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn spacing_vec<T: Real>(&self) -> Vec3<T> {
        Vec3::from(self.spacing).cast()
    }

    #[inline]
    pub fn values(&self) -> &[i16] {
        &self.values
    }

    /// `(min, max)` of the stored values.
    #[inline]
    pub fn value_range(&self) -> (i16, i16) {
        self.value_range
    }

    /// Number of source samples that had to be clamped into the i16 range on load.
    pub fn clamped_samples(&self) -> u64 {
        self.clamped_samples
    }

    pub fn voxel_count(&self) -> usize {
        self.values.len()
    }

    #[inline(always)]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize, k: usize) -> i16 {
        self.values[self.index(i, j, k)]
    }

    /// Physical extent of the sampled box, `(n−1)·s` per axis.
    pub fn extent_mm(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| (self.dims[a] - 1) as f64 * self.spacing[a])
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn center_mm(&self) -> [f64; 3] {
        self.extent_mm().map(|e| e / 2.0)
    }

    /// Copies out an axis-aligned slice as a row-major 2-D array.
    ///
    /// The returned `(width, height, values)` uses the two remaining axes in
    /// ascending order (x-slices are `y × z`, y-slices `x × z`, z-slices `x × y`).
    pub fn slice(&self, axis: usize, index: usize) -> Option<(usize, usize, Vec<i16>)> {
        if axis > 2 || index >= self.dims[axis] {
            return None;
        }
        let [nx, ny, nz] = self.dims;
        let out = match axis {
            0 => {
                let mut v = Vec::with_capacity(ny * nz);
                for k in 0..nz {
                    for j in 0..ny {
                        v.push(self.get(index, j, k));
                    }
                }
                (ny, nz, v)
            }
            1 => {
                let mut v = Vec::with_capacity(nx * nz);
                for k in 0..nz {
                    for i in 0..nx {
                        v.push(self.get(i, index, k));
                    }
                }
                (nx, nz, v)
            }
            _ => {
                let start = self.index(0, 0, index);
                (nx, ny, self.values[start..start + nx * ny].to_vec())
            }
        };
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeSource {
    Dicom,
    Raw,
    Phantom,
}

/// Catalogue entry for a stored volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeManifest {
    pub id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub value_range: (i16, i16),
    pub source: VolumeSource,
    pub created_at: String,
    #[serde(default)]
    pub clamped_samples: u64,
}

impl VolumeManifest {
    pub fn describe(id: String, vol: &ScalarVolume, source: VolumeSource, created_at: String) -> Self {
        Self {
            id,
            dims: vol.dims(),
            spacing: vol.spacing(),
            value_range: vol.value_range(),
            source,
            created_at,
            clamped_samples: vol.clamped_samples(),
        }
    }
}
