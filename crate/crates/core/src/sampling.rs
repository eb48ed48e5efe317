//! Continuous reconstruction of voxel data.
//!
//! Positions are in voxel units with voxel `(0,0,0)` at the origin. Reads are
//! clamped to an inclusive [`VoxelBox`] (the whole volume, or one block of a
//! decomposition), which doubles as the clamp-to-edge boundary rule.

use serde::{Deserialize, Serialize};

use crate::real::{Real, Vec3};
use crate::volume::ScalarVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    #[default]
    Tricubic,
}

impl Interpolation {
    /// Voxels of support beyond the enclosing cell on each side.
    pub fn support_radius(self) -> usize {
        match self {
            Interpolation::Trilinear => 0,
            Interpolation::Tricubic => 1,
        }
    }
}

/// Inclusive voxel index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl VoxelBox {
    pub fn whole(dims: [usize; 3]) -> Self {
        Self {
            lo: [0; 3],
            hi: dims.map(|d| d - 1),
        }
    }

    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        let p = [i, j, k];
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    pub fn extent(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.hi[a] - self.lo[a] + 1)
    }
}

/// A dense x-fastest voxel grid.
pub trait Lattice: Sync {
    type Voxel: Copy;
    fn dims(&self) -> [usize; 3];
    fn voxels(&self) -> &[Self::Voxel];
}

impl Lattice for ScalarVolume {
    type Voxel = i16;

    fn dims(&self) -> [usize; 3] {
        ScalarVolume::dims(self)
    }

    fn voxels(&self) -> &[i16] {
        self.values()
    }
}

/// Value type that can be linearly combined with real weights.
pub trait Blend<T>: Copy {
    fn zero() -> Self;
    fn mul_add(self, v: Self, w: T) -> Self;
}

impl<T: Real> Blend<T> for T {
    #[inline(always)]
    fn zero() -> Self {
        T::zero()
    }

    #[inline(always)]
    fn mul_add(self, v: Self, w: T) -> Self {
        self + v * w
    }
}

impl<T: Real> Blend<T> for [T; 4] {
    #[inline(always)]
    fn zero() -> Self {
        [T::zero(); 4]
    }

    #[inline(always)]
    fn mul_add(self, v: Self, w: T) -> Self {
        [
            self[0] + v[0] * w,
            self[1] + v[1] * w,
            self[2] + v[2] * w,
            self[3] + v[3] * w,
        ]
    }
}

/// Conversion from a stored voxel to the quantity that gets interpolated.
pub trait Lift<T: Real>: Copy {
    type Out: Blend<T>;
    fn lift(self) -> Self::Out;
}

impl<T: Real> Lift<T> for i16 {
    type Out = T;

    #[inline(always)]
    fn lift(self) -> T {
        T::from_i16(self).unwrap()
    }
}

/// 8-bit straight-alpha RGBA lifts to premultiplied `[0, 1]` channels.
impl<T: Real> Lift<T> for [u8; 4] {
    type Out = [T; 4];

    #[inline(always)]
    fn lift(self) -> [T; 4] {
        let s = T::lit(1.0 / 255.0);
        let a = T::from_u8(self[3]).unwrap() * s;
        [
            T::from_u8(self[0]).unwrap() * s * a,
            T::from_u8(self[1]).unwrap() * s * a,
            T::from_u8(self[2]).unwrap() * s * a,
            a,
        ]
    }
}

#[inline(always)]
fn clamp_coord<T: Real>(p: T, lo: usize, hi: usize) -> T {
    p.max(T::from_usize_lossy(lo)).min(T::from_usize_lossy(hi))
}

/// Catmull-Rom weights for taps at offsets −1, 0, 1, 2.
#[inline(always)]
pub fn catmull_rom_weights<T: Real>(t: T) -> [T; 4] {
    let half = T::lit(0.5);
    let t2 = t * t;
    let t3 = t2 * t;
    [
        half * (-t3 + T::lit(2.0) * t2 - t),
        half * (T::lit(3.0) * t3 - T::lit(5.0) * t2 + T::lit(2.0)),
        half * (T::lit(-3.0) * t3 + T::lit(4.0) * t2 + t),
        half * (t3 - t2),
    ]
}

/// Derivatives of [`catmull_rom_weights`] with respect to `t`.
#[inline(always)]
pub fn catmull_rom_derivatives<T: Real>(t: T) -> [T; 4] {
    let half = T::lit(0.5);
    let t2 = t * t;
    [
        half * (T::lit(-3.0) * t2 + T::lit(4.0) * t - T::one()),
        half * (T::lit(9.0) * t2 - T::lit(10.0) * t),
        half * (T::lit(-9.0) * t2 + T::lit(8.0) * t + T::one()),
        half * (T::lit(3.0) * t2 - T::lit(2.0) * t),
    ]
}

/// Trilinear reconstruction at `p`, reading only voxels inside `bounds`.
#[inline]
pub fn trilinear_in<L, T>(lat: &L, bounds: &VoxelBox, p: Vec3<T>) -> <L::Voxel as Lift<T>>::Out
where
    L: Lattice,
    L::Voxel: Lift<T>,
    T: Real,
{
    let dims = lat.dims();
    let data = lat.voxels();
    let p = p.to_array();
    let mut base = [0usize; 3];
    let mut next = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for a in 0..3 {
        let (lo, hi) = (bounds.lo[a], bounds.hi[a]);
        let c = clamp_coord(p[a], lo, hi);
        let f = c.floor().to_usize().unwrap().min(hi.saturating_sub(1).max(lo));
        base[a] = f;
        next[a] = (f + 1).min(hi);
        frac[a] = c - T::from_usize_lossy(f);
    }
    let sx = 1;
    let sy = dims[0];
    let sz = dims[0] * dims[1];
    let idx = |i: usize, j: usize, k: usize| i * sx + j * sy + k * sz;
    let one = T::one();
    let mut acc = <<L::Voxel as Lift<T>>::Out as Blend<T>>::zero();
    for (k, wz) in [(base[2], one - frac[2]), (next[2], frac[2])] {
        for (j, wy) in [(base[1], one - frac[1]), (next[1], frac[1])] {
            let wzy = wz * wy;
            for (i, wx) in [(base[0], one - frac[0]), (next[0], frac[0])] {
                acc = acc.mul_add(data[idx(i, j, k)].lift(), wzy * wx);
            }
        }
    }
    acc
}

/// Separable Catmull-Rom reconstruction over the 4³ neighbourhood of `p`,
/// taps clamped into `bounds`.
#[inline]
pub fn tricubic_in<L, T>(lat: &L, bounds: &VoxelBox, p: Vec3<T>) -> <L::Voxel as Lift<T>>::Out
where
    L: Lattice,
    L::Voxel: Lift<T>,
    T: Real,
{
    let dims = lat.dims();
    let data = lat.voxels();
    let p = p.to_array();
    let mut taps = [[0usize; 4]; 3];
    let mut weights = [[T::zero(); 4]; 3];
    for a in 0..3 {
        let (lo, hi) = (bounds.lo[a], bounds.hi[a]);
        let c = clamp_coord(p[a], lo, hi);
        let f = c.floor().to_usize().unwrap().min(hi);
        weights[a] = catmull_rom_weights(c - T::from_usize_lossy(f));
        for (n, tap) in taps[a].iter_mut().enumerate() {
            *tap = (f + n).saturating_sub(1).clamp(lo, hi);
        }
    }
    let sy = dims[0];
    let sz = dims[0] * dims[1];
    for t in taps[1].iter_mut() {
        *t *= sy;
    }
    for t in taps[2].iter_mut() {
        *t *= sz;
    }
    let zero = <<L::Voxel as Lift<T>>::Out as Blend<T>>::zero();
    let mut acc = zero;
    for (kz, &wz) in taps[2].iter().zip(&weights[2]) {
        let mut plane = zero;
        for (jy, &wy) in taps[1].iter().zip(&weights[1]) {
            let row = kz + jy;
            let mut line = zero;
            for (ix, &wx) in taps[0].iter().zip(&weights[0]) {
                line = line.mul_add(data[row + ix].lift(), wx);
            }
            plane = plane.mul_add(line, wy);
        }
        acc = acc.mul_add(plane, wz);
    }
    acc
}

/// Exact gradient (value units per voxel) of the Catmull-Rom interpolant,
/// read from the same 4³ taps as [`tricubic_in`].
#[inline]
pub fn tricubic_gradient_in<T: Real>(vol: &ScalarVolume, bounds: &VoxelBox, p: Vec3<T>) -> Vec3<T> {
    let dims = vol.dims();
    let data = vol.values();
    let p = p.to_array();
    let mut taps = [[0usize; 4]; 3];
    let mut w = [[T::zero(); 4]; 3];
    let mut dw = [[T::zero(); 4]; 3];
    for a in 0..3 {
        let (lo, hi) = (bounds.lo[a], bounds.hi[a]);
        let c = clamp_coord(p[a], lo, hi);
        let f = c.floor().to_usize().unwrap().min(hi);
        let t = c - T::from_usize_lossy(f);
        w[a] = catmull_rom_weights(t);
        dw[a] = catmull_rom_derivatives(t);
        for (n, tap) in taps[a].iter_mut().enumerate() {
            *tap = (f + n).saturating_sub(1).clamp(lo, hi);
        }
    }
    let (sy, sz) = (dims[0], dims[0] * dims[1]);
    let mut g = [T::zero(); 3];
    for z in 0..4 {
        for y in 0..4 {
            let row = taps[2][z] * sz + taps[1][y] * sy;
            // Per-row sums of value·w(x) and value·w'(x).
            let (mut line, mut dline) = (T::zero(), T::zero());
            for x in 0..4 {
                let v: T = data[row + taps[0][x]].lift();
                line += v * w[0][x];
                dline += v * dw[0][x];
            }
            g[0] += dline * w[1][y] * w[2][z];
            g[1] += line * dw[1][y] * w[2][z];
            g[2] += line * w[1][y] * dw[2][z];
        }
    }
    Vec3::from(g)
}

#[inline]
pub fn interpolate_in<L, T>(lat: &L, bounds: &VoxelBox, p: Vec3<T>, interp: Interpolation) -> <L::Voxel as Lift<T>>::Out
where
    L: Lattice,
    L::Voxel: Lift<T>,
    T: Real,
{
    match interp {
        Interpolation::Trilinear => trilinear_in(lat, bounds, p),
        Interpolation::Tricubic => tricubic_in(lat, bounds, p),
    }
}

/// Gradient of the reconstruction at `p` in value units per mm.
///
/// Tricubic uses the interpolant's exact derivative. Trilinear uses a central
/// difference with a half-voxel step, since the interpolant's own derivative
/// jumps at cell faces. Both read within one voxel of the enclosing cell.
#[inline]
pub fn gradient_in<T: Real>(
    vol: &ScalarVolume,
    bounds: &VoxelBox,
    p: Vec3<T>,
    interp: Interpolation,
    spacing: Vec3<T>,
) -> Vec3<T> {
    if interp == Interpolation::Tricubic {
        return tricubic_gradient_in(vol, bounds, p).component_div(spacing);
    }
    let h = T::lit(0.5);
    let axis = |e: Vec3<T>, s: T| {
        let ahead: T = trilinear_in(vol, bounds, p + e * h);
        let behind: T = trilinear_in(vol, bounds, p - e * h);
        // (ahead − behind) / (2h voxels · s mm/voxel), with 2h = 1.
        (ahead - behind) / s
    };
    Vec3::new(
        axis(Vec3::new(T::one(), T::zero(), T::zero()), spacing.x),
        axis(Vec3::new(T::zero(), T::one(), T::zero()), spacing.y),
        axis(Vec3::new(T::zero(), T::zero(), T::one()), spacing.z),
    )
}

pub fn sample_trilinear<T: Real>(vol: &ScalarVolume, p: Vec3<T>) -> T {
    trilinear_in(vol, &VoxelBox::whole(vol.dims()), p)
}

pub fn sample_tricubic<T: Real>(vol: &ScalarVolume, p: Vec3<T>) -> T {
    tricubic_in(vol, &VoxelBox::whole(vol.dims()), p)
}

pub fn sample<T: Real>(vol: &ScalarVolume, p: Vec3<T>, interp: Interpolation) -> T {
    interpolate_in(vol, &VoxelBox::whole(vol.dims()), p, interp)
}

pub fn gradient<T: Real>(vol: &ScalarVolume, p: Vec3<T>, interp: Interpolation) -> Vec3<T> {
    gradient_in(vol, &VoxelBox::whole(vol.dims()), p, interp, vol.spacing_vec())
}
