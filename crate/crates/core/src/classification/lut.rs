use crate::real::Real;
use crate::sampling::Lattice;
use crate::volume::ScalarVolume;

use super::TransferFunction;

pub const DEFAULT_LUT_BINS: usize = 4096;

/// Transfer function tabulated at `bins` evenly spaced bin centres spanning
/// the domain end points inclusively.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedLut {
    entries: Vec<[f32; 4]>,
    domain: (f64, f64),
    scale: f64,
}

pub fn build_lut(tf: &TransferFunction, bins: usize) -> ClassifiedLut {
    assert!(bins >= 2, "a lookup table needs at least 2 bins");
    let (lo, hi) = tf.domain();
    let width = (hi - lo) / (bins - 1) as f64;
    let entries = (0..bins)
        .map(|i| tf.eval(lo + i as f64 * width).map(|c| c as f32))
        .collect();
    ClassifiedLut {
        entries,
        domain: (lo, hi),
        scale: (bins - 1) as f64 / (hi - lo),
    }
}

impl ClassifiedLut {
    pub fn bins(&self) -> usize {
        self.entries.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn entries(&self) -> &[[f32; 4]] {
        &self.entries
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.domain.0 + bin as f64 / self.scale
    }

    /// Nearest bin after clamping to the domain.
    #[inline]
    pub fn bin_of<T: Real>(&self, s: T) -> usize {
        let pos = (s.as_f64() - self.domain.0) * self.scale;
        let last = self.entries.len() - 1;
        if pos.is_nan() || pos <= 0.0 {
            0
        } else {
            (pos.round() as usize).min(last)
        }
    }

    /// Post-classification of an interpolated scalar.
    #[inline]
    pub fn classify<T: Real>(&self, s: T) -> [T; 4] {
        self.entries[self.bin_of(s)].map(|c| T::lit(f64::from(c)))
    }

    /// Largest opacity of any bin a value in `[lo, hi]` can map to.
    pub fn max_opacity_in(&self, lo: f64, hi: f64) -> f32 {
        let (a, b) = (self.bin_of(lo), self.bin_of(hi));
        self.entries[a.min(b)..=a.max(b)]
            .iter()
            .map(|e| e[3])
            .fold(0.0, f32::max)
    }

    /// Same table with every opacity replaced by `f(opacity)`.
    pub fn map_opacity(&self, f: impl Fn(f64) -> f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&[r, g, b, a]| [r, g, b, f(f64::from(a)) as f32])
            .collect();
        Self { entries, ..*self }
    }

    pub fn is_fully_transparent(&self) -> bool {
        self.entries.iter().all(|e| e[3] == 0.0)
    }
}

/// Per-voxel classified volume, 8-bit straight-alpha RGBA (4 bytes/voxel).
#[derive(Debug, Clone, PartialEq)]
pub struct RgbaVolume {
    dims: [usize; 3],
    voxels: Vec<[u8; 4]>,
}

impl RgbaVolume {
    pub fn voxels(&self) -> &[[u8; 4]] {
        &self.voxels
    }

    pub fn size_in_bytes(&self) -> usize {
        self.voxels.len() * std::mem::size_of::<[u8; 4]>()
    }
}

impl Lattice for RgbaVolume {
    type Voxel = [u8; 4];

    fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn voxels(&self) -> &[[u8; 4]] {
        &self.voxels
    }
}

fn quantize(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Classifies every voxel up front ("colour before interpolation").
pub fn preclassify_volume(vol: &ScalarVolume, lut: &ClassifiedLut) -> RgbaVolume {
    RgbaVolume {
        dims: vol.dims(),
        voxels: vol
            .values()
            .iter()
            .map(|&v| lut.entries[lut.bin_of(f64::from(v))].map(quantize))
            .collect(),
    }
}
