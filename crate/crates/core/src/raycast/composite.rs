use crate::real::{Real, Vec3};

/// Opacity of a segment of length `ratio · ref_step` given the opacity of a
/// reference-length segment.
#[inline]
pub fn correct_opacity<T: Real>(alpha: T, ratio: T) -> T {
    if ratio == T::one() || alpha <= T::zero() {
        alpha.max(T::zero())
    } else if alpha >= T::one() {
        T::one()
    } else {
        T::one() - (T::one() - alpha).powf(ratio)
    }
}

/// Front-to-back "under" blend of a straight-alpha colour with an already
/// step-corrected opacity into a premultiplied accumulator.
#[inline]
pub fn blend_under<T: Real>(accum: [T; 4], rgb: [T; 3], alpha: T) -> [T; 4] {
    let w = (T::one() - accum[3]) * alpha;
    [
        accum[0] + w * rgb[0],
        accum[1] + w * rgb[1],
        accum[2] + w * rgb[2],
        accum[3] + w,
    ]
}

/// One front-to-back compositing step with opacity correction for the
/// actual step length.
pub fn composite_step<T: Real>(accum: [T; 4], sample: [T; 4], step: T, ref_step: T) -> [T; 4] {
    let alpha = correct_opacity(sample[3], step / ref_step);
    blend_under(accum, [sample[0], sample[1], sample[2]], alpha)
}

/// Fixed Phong coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phong {
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
}

pub const PHONG: Phong = Phong {
    ambient: 0.1,
    diffuse: 0.7,
    specular: 0.2,
    shininess: 32.0,
};

/// Gradients shorter than this (value units per mm) count as zero.
pub const MIN_GRADIENT: f64 = 1e-3;

/// Phong shading with the surface normal taken as the negated, normalized
/// gradient. `view_dir` and `light_dir` point from the surface towards the
/// eye and the light.
pub fn shade_phong<T: Real>(base: [T; 3], gradient: Vec3<T>, view_dir: Vec3<T>, light_dir: Vec3<T>) -> [T; 3] {
    let len = gradient.norm();
    if !(len > T::lit(MIN_GRADIENT)) {
        return base;
    }
    let n = -gradient / len;
    let n_dot_l = n.dot(light_dir);
    let diffuse = n_dot_l.max(T::zero());
    let reflected = n * (T::lit(2.0) * n_dot_l) - light_dir;
    let specular = if n_dot_l > T::zero() {
        T::lit(PHONG.specular) * reflected.dot(view_dir).max(T::zero()).powf(T::lit(PHONG.shininess))
    } else {
        T::zero()
    };
    let k = T::lit(PHONG.ambient) + T::lit(PHONG.diffuse) * diffuse;
    base.map(|c| c * k + specular)
}
