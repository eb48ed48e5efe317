use crate::real::Real;

use super::ClassifiedLut;

pub const DEFAULT_TABLE_BINS: usize = 256;
pub const DEFAULT_SUBSTEPS: usize = 64;

/// Segment integrals of a [`ClassifiedLut`] indexed by (front, back) scalar.
///
/// Entries hold premultiplied colour and opacity of a ray segment of length
/// `l_ref` over which the scalar varies linearly from front to back. LUT
/// opacities are read as opacities of one `l_ref` segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PreintegratedTable {
    bins: usize,
    entries: Vec<[f32; 4]>,
    domain: (f64, f64),
    scale: f64,
    l_ref: f64,
}

pub fn build_preintegrated(lut: &ClassifiedLut, l_ref: f64) -> PreintegratedTable {
    build_preintegrated_with(lut, l_ref, DEFAULT_TABLE_BINS, DEFAULT_SUBSTEPS)
}

pub fn build_preintegrated_with(lut: &ClassifiedLut, l_ref: f64, bins: usize, substeps: usize) -> PreintegratedTable {
    assert!(l_ref > 0.0, "reference length must be positive");
    assert!(bins >= 2 && substeps >= 1);
    let (lo, hi) = lut.domain();
    let width = (hi - lo) / (bins - 1) as f64;
    // Per-LUT-bin colour and sub-step opacity, so each table cell is just a
    // compositing loop.
    let exponent = 1.0 / substeps as f64;
    let sub: Vec<([f64; 3], f64)> = lut
        .entries()
        .iter()
        .map(|e| {
            let a = 1.0 - (1.0 - f64::from(e[3])).powf(exponent);
            ([f64::from(e[0]), f64::from(e[1]), f64::from(e[2])], a)
        })
        .collect();

    let mut entries = Vec::with_capacity(bins * bins);
    for f in 0..bins {
        let front = lo + f as f64 * width;
        for b in 0..bins {
            let back = lo + b as f64 * width;
            let (mut c, mut a) = ([0.0f64; 3], 0.0f64);
            for j in 0..substeps {
                let s = front + (j as f64 + 0.5) / substeps as f64 * (back - front);
                let (rgb, alpha) = sub[lut.bin_of(s)];
                let w = (1.0 - a) * alpha;
                for ch in 0..3 {
                    c[ch] += w * rgb[ch];
                }
                a += w;
            }
            entries.push([c[0] as f32, c[1] as f32, c[2] as f32, a as f32]);
        }
    }
    PreintegratedTable {
        bins,
        entries,
        domain: (lo, hi),
        scale: (bins - 1) as f64 / (hi - lo),
        l_ref,
    }
}

impl PreintegratedTable {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn l_ref(&self) -> f64 {
        self.l_ref
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.domain.0 + bin as f64 / self.scale
    }

    pub fn entry(&self, front_bin: usize, back_bin: usize) -> [f32; 4] {
        self.entries[front_bin * self.bins + back_bin]
    }

    #[inline]
    fn bin_of<T: Real>(&self, s: T) -> usize {
        let pos = (s.as_f64() - self.domain.0) * self.scale;
        if pos.is_nan() || pos <= 0.0 {
            0
        } else {
            (pos.round() as usize).min(self.bins - 1)
        }
    }

    /// Premultiplied RGBA of the segment from `front` to `back`.
    #[inline]
    pub fn lookup<T: Real>(&self, front: T, back: T) -> [T; 4] {
        self.entry(self.bin_of(front), self.bin_of(back))
            .map(|c| T::lit(f64::from(c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::{build_lut, ControlPoint, TransferFunction, DEFAULT_LUT_BINS};

    fn transparent() -> TransferFunction {
        TransferFunction::new(vec![ControlPoint::new(0.0, 1.0, 1.0, 1.0, 0.0)], (-1024.0, 3071.0)).unwrap()
    }

    #[test]
    fn transparent_tf_gives_transparent_table() {
        let table = build_preintegrated_with(&build_lut(&transparent(), 256), 0.5, 32, 64);
        assert!((0..32).all(|f| (0..32).all(|b| table.entry(f, b)[3] == 0.0)));
    }

    #[test]
    fn diagonal_matches_single_sample() {
        let tf = TransferFunction::preset("bone").unwrap();
        let lut = build_lut(&tf, DEFAULT_LUT_BINS);
        let table = build_preintegrated_with(&lut, 0.5, 64, 64);
        for bin in 0..64 {
            let s = table.bin_center(bin);
            let [r, g, b, a] = lut.classify(s);
            let e = table.entry(bin, bin).map(f64::from);
            let want = [r * a, g * a, b * a, a];
            for c in 0..4 {
                assert!((e[c] - want[c]).abs() < 1e-5, "bin {bin}: {e:?} vs {want:?}");
            }
        }
    }
}
