use std::time::Instant;

use rayon::prelude::*;

use super::camera::{Camera, Ray};
use super::composite::{blend_under, correct_opacity, shade_phong};
use super::settings::{RenderMode, RenderSettings};
use super::RenderError;
use crate::blockgrid::{decompose, prepare, Block, BlockGrid};
use crate::classification::{
    build_lut, build_preintegrated, preclassify_volume, Classification, ClassifiedLut, PreintegratedTable, RgbaVolume,
    TransferFunction, DEFAULT_LUT_BINS,
};
use crate::image::{ImageRgba, RenderStats};
use crate::real::{Real, Vec3};
use crate::sampling::{gradient_in, interpolate_in, VoxelBox};
use crate::volume::ScalarVolume;

/// Pixel rectangle `(x, y, width, height)`.
pub type PixelRect = (u32, u32, u32, u32);

/// Bisection iterations used to refine an isosurface crossing.
const BISECTION_STEPS: usize = 8;

enum Classifier {
    /// Opacity-corrected table for the render step.
    Post(ClassifiedLut),
    Pre(RgbaVolume),
    /// Segment table for the render step.
    Preintegrated(PreintegratedTable),
}

struct Blocks {
    grid: BlockGrid,
    /// Per block: no sample it owns can contribute.
    skip: Vec<bool>,
    /// Per block: per-sample skipping outside the tight box is exact.
    box_skip: Vec<bool>,
}

/// A volume prepared for rendering under one transfer function and settings.
///
/// Construction does all camera-independent work (lookup tables, optional
/// pre-classified volume, block decomposition), so one renderer can serve many
/// cameras.
pub struct Renderer<'a, T: Real = f32> {
    vol: &'a ScalarVolume,
    settings: RenderSettings,
    lut: ClassifiedLut,
    classifier: Classifier,
    blocks: Option<Blocks>,
    whole: VoxelBox,
    upper: Vec3<T>,
    spacing: Vec3<T>,
    step: T,
    ratio: T,
    iso: T,
}

#[derive(Default)]
struct RayStats {
    taken: u64,
    skipped: u64,
    blocks: u64,
    last_block: Option<usize>,
}

/// Where a sample is read from and whether it can be skipped.
struct Site<'g> {
    bounds: VoxelBox,
    block: Option<(usize, &'g Block)>,
}

impl<'a, T: Real> Renderer<'a, T> {
    pub fn new(vol: &'a ScalarVolume, tf: &TransferFunction, settings: &RenderSettings) -> Result<Self, RenderError> {
        Self::build(vol, tf, settings, None)
    }

    /// Uses an existing decomposition of `vol` instead of building one from
    /// the settings' block size and overlap.
    pub fn with_grid(
        vol: &'a ScalarVolume,
        grid: BlockGrid,
        tf: &TransferFunction,
        settings: &RenderSettings,
    ) -> Result<Self, RenderError> {
        assert_eq!(grid.dims(), vol.dims(), "grid belongs to a different volume");
        let settings = RenderSettings {
            use_blocks: true,
            block_size: grid.block_size(),
            block_overlap: grid.overlap(),
            ..settings.clone()
        };
        Self::build(vol, tf, &settings, Some(grid))
    }

    fn build(
        vol: &'a ScalarVolume,
        tf: &TransferFunction,
        settings: &RenderSettings,
        grid: Option<BlockGrid>,
    ) -> Result<Self, RenderError> {
        settings.validate()?;
        let (vmin, vmax) = vol.value_range();
        let iso = settings.isovalue.unwrap_or(0.0);
        if settings.mode == RenderMode::Isosurface && !(f64::from(vmin) <= iso && iso <= f64::from(vmax)) {
            return Err(RenderError::IsovalueOutOfRange {
                isovalue: iso,
                min: vmin,
                max: vmax,
            });
        }
        let ref_step = 0.5 * vol.min_spacing();
        let step = settings.resolved_step(vol.min_spacing());
        let ratio = step / ref_step;
        let lut = build_lut(tf, DEFAULT_LUT_BINS);
        let classifier = match settings.classification {
            Classification::Post => Classifier::Post(corrected_lut(&lut, ratio)),
            Classification::Pre => Classifier::Pre(preclassify_volume(vol, &lut)),
            Classification::Preintegrated => {
                Classifier::Preintegrated(build_preintegrated(&corrected_lut(&lut, ratio), step))
            }
        };

        let blocks = if settings.use_blocks {
            let grid = match grid {
                Some(g) => g,
                None => decompose(vol, settings.block_size, settings.block_overlap)?,
            };
            let grid = prepare(vol, grid, &lut);
            let skip: Vec<bool> = grid
                .blocks()
                .iter()
                .map(|b| {
                    settings.empty_space_skipping
                        && match settings.mode {
                            RenderMode::Dvr => b.empty,
                            RenderMode::Isosurface => iso < f64::from(b.value_min) || iso > f64::from(b.value_max),
                        }
                })
                .collect();
            let per_sample = settings.empty_space_skipping
                && settings.mode == RenderMode::Dvr
                && settings.classification != Classification::Preintegrated;
            let box_skip = grid
                .blocks()
                .iter()
                .map(|b| {
                    per_sample
                        && b.tight_aabb.is_some()
                        && (settings.classification == Classification::Pre
                            || transparent_values_contiguous(&lut, b.value_min, b.value_max))
                })
                .collect();
            Some(Blocks { grid, skip, box_skip })
        } else {
            None
        };

        let dims = vol.dims();
        Ok(Self {
            vol,
            settings: settings.clone(),
            lut,
            classifier,
            blocks,
            whole: VoxelBox::whole(dims),
            upper: Vec3::new(dims[0], dims[1], dims[2]).map(|n| T::from_usize_lossy(n - 1)),
            spacing: vol.spacing_vec(),
            step: T::lit(step),
            ratio: T::lit(ratio),
            iso: T::lit(iso),
        })
    }

    pub fn settings(&self) -> &RenderSettings {
        &self.settings
    }

    /// The decomposition used by the block path, after culling.
    pub fn grid(&self) -> Option<&BlockGrid> {
        self.blocks.as_ref().map(|b| &b.grid)
    }

    pub fn render(&self, camera: &Camera) -> Result<ImageRgba, RenderError> {
        let [w, h] = camera.image_size;
        self.render_region(camera, (0, 0, w, h))
    }

    /// Renders a sub-rectangle of the camera's image.
    pub fn render_region(&self, camera: &Camera, rect: PixelRect) -> Result<ImageRgba, RenderError> {
        camera.validate()?;
        let (x0, y0, w, h) = rect;
        let [cw, ch] = camera.image_size;
        if x0.checked_add(w).is_none_or(|e| e > cw) || y0.checked_add(h).is_none_or(|e| e > ch) {
            return Err(RenderError::InvalidSettings {
                field: "region",
                message: format!("{rect:?} exceeds the {cw}x{ch} image"),
            });
        }
        let start = Instant::now();
        let frame = camera.frame::<T>();
        let background = premultiplied::<T>(self.settings.background);
        let rows: Vec<(Vec<u8>, RayStats)> = (0..h)
            .into_par_iter()
            .map(|row| {
                let mut stats = RayStats::default();
                let mut out = Vec::with_capacity(w as usize * 4);
                for col in 0..w {
                    let ray = frame.pixel_ray(x0 + col, y0 + row);
                    stats.last_block = None;
                    let acc = self.trace(&ray, &mut stats);
                    out.extend_from_slice(&to_rgba8(blend_premultiplied(acc, background)));
                }
                (out, stats)
            })
            .collect();

        let mut pixels = Vec::with_capacity(w as usize * h as usize * 4);
        let mut stats = RenderStats {
            rays: u64::from(w) * u64::from(h),
            ..RenderStats::default()
        };
        for (row, s) in rows {
            pixels.extend_from_slice(&row);
            stats.samples_taken += s.taken;
            stats.samples_skipped += s.skipped;
            stats.blocks_visited += s.blocks;
        }
        if let Some(b) = &self.blocks {
            stats.blocks_total = b.grid.total() as u64;
            stats.blocks_empty = b.grid.empty_count() as u64;
        }
        stats.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut image = ImageRgba::new(w, h, pixels);
        image.stats = stats;
        Ok(image)
    }

    /// Distance along `ray` (mm) of its first isovalue crossing inside the
    /// volume.
    pub fn isosurface_hit(&self, ray: &Ray<T>) -> Option<T> {
        let mut stats = RayStats::default();
        self.march_isosurface(&self.to_voxel_ray(ray), &mut stats)
    }

    fn to_voxel_ray(&self, ray: &Ray<T>) -> Ray<T> {
        Ray {
            origin: ray.origin.component_div(self.spacing),
            direction: ray.direction.component_div(self.spacing),
        }
    }

    /// Parametric entry and exit of a voxel-space ray through the sampled box.
    fn clip(&self, ray: &Ray<T>) -> Option<(T, T)> {
        let (mut t0, mut t1) = (T::zero(), T::infinity());
        for a in 0..3 {
            let (o, d, hi) = (ray.origin[a], ray.direction[a], self.upper[a]);
            if d == T::zero() {
                if o < T::zero() || o > hi {
                    return None;
                }
                continue;
            }
            let (mut near, mut far) = ((T::zero() - o) / d, (hi - o) / d);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
        }
        (t0 <= t1).then_some((t0, t1))
    }

    #[inline]
    fn position(&self, ray: &Ray<T>, t: T) -> Vec3<T> {
        let p = ray.at(t);
        Vec3::new(
            p.x.max(T::zero()).min(self.upper.x),
            p.y.max(T::zero()).min(self.upper.y),
            p.z.max(T::zero()).min(self.upper.z),
        )
    }

    #[inline]
    fn site(&self, p: Vec3<T>) -> Site<'_> {
        match &self.blocks {
            None => Site {
                bounds: self.whole,
                block: None,
            },
            Some(b) => {
                let index = b.grid.owner_of(p);
                let linear = b.grid.linear_index(index);
                let block = &b.grid.blocks()[linear];
                Site {
                    bounds: block.bounds(),
                    block: Some((linear, block)),
                }
            }
        }
    }

    /// First sample index at or beyond the exit of `block`'s core.
    fn leap(&self, ray: &Ray<T>, t_start: T, k: usize, block: &Block) -> usize {
        let grid = &self.blocks.as_ref().unwrap().grid;
        let mut t_exit = T::infinity();
        for a in 0..3 {
            let d = ray.direction[a];
            let (lo, hi) = grid.core_interval(a, block.index[a]);
            let bound = if d > T::zero() {
                hi
            } else if d < T::zero() {
                lo
            } else {
                continue;
            };
            if bound.is_finite() {
                t_exit = t_exit.min((T::lit(bound) - ray.origin[a]) / d);
            }
        }
        if !t_exit.is_finite() {
            return usize::MAX;
        }
        let next = ((t_exit - t_start) / self.step).ceil();
        if next <= T::zero() {
            k + 1
        } else {
            next.to_usize().unwrap_or(usize::MAX).max(k + 1)
        }
    }

    fn value(&self, p: Vec3<T>, bounds: &VoxelBox) -> T {
        interpolate_in(self.vol, bounds, p, self.settings.interpolation)
    }

    fn shade(&self, rgb: [T; 3], p: Vec3<T>, bounds: &VoxelBox, dir: Vec3<T>) -> [T; 3] {
        if !self.settings.lighting {
            return rgb;
        }
        let g = gradient_in(self.vol, bounds, p, self.settings.interpolation, self.spacing);
        // Shading happens in the physical frame.
        let view = -dir;
        shade_phong(rgb, g, view, view)
    }

    /// Premultiplied colour accumulated along one ray.
    fn trace(&self, ray: &Ray<T>, stats: &mut RayStats) -> [T; 4] {
        let vray = self.to_voxel_ray(ray);
        match self.settings.mode {
            RenderMode::Dvr => self.march_dvr(&vray, ray.direction, stats),
            RenderMode::Isosurface => match self.march_isosurface(&vray, stats) {
                None => [T::zero(); 4],
                Some(t) => {
                    let p = self.position(&vray, t);
                    let site = self.site(p);
                    let [r, g, b, _] = self.lut.classify(self.iso);
                    let [r, g, b] = self.shade([r, g, b], p, &site.bounds, ray.direction);
                    [r, g, b, T::one()]
                }
            },
        }
    }

    fn note_block(&self, site: &Site<'_>, stats: &mut RayStats) {
        if let Some((linear, _)) = site.block {
            if stats.last_block != Some(linear) {
                stats.last_block = Some(linear);
                stats.blocks += 1;
            }
        }
    }

    /// Samples along `ray` at `t0 + k·step`, calling `visit` for every sample
    /// that is not provably empty. `visit` receives the sample position, its
    /// read bounds, and whether the previous sample was skipped, and returns
    /// `true` to stop. `per_sample` enables tight-box skipping.
    fn walk(
        &self,
        ray: &Ray<T>,
        stats: &mut RayStats,
        per_sample: bool,
        mut visit: impl FnMut(usize, T, Vec3<T>, &VoxelBox, bool) -> bool,
    ) {
        let Some((t0, t1)) = self.clip(ray) else {
            return;
        };
        let last = ((t1 - t0) / self.step).floor().to_usize().unwrap_or(0);
        let radius = T::from_usize_lossy(self.settings.interpolation.support_radius());
        let mut prev_skipped = true;
        let mut k = 0;
        while k <= last {
            let t = t0 + self.step * T::from_usize_lossy(k);
            let p = self.position(ray, t);
            let site = self.site(p);
            if let (Some((linear, block)), Some(b)) = (site.block, &self.blocks) {
                if b.skip[linear] {
                    let next = self.leap(ray, t0, k, block).min(last + 1);
                    stats.skipped += (next - k) as u64;
                    k = next;
                    prev_skipped = true;
                    continue;
                }
                if per_sample && b.box_skip[linear] {
                    let aabb = block.tight_aabb.unwrap();
                    let outside = (0..3).any(|a| {
                        p[a] < T::from_usize_lossy(aabb.lo[a]) - radius
                            || p[a] > T::from_usize_lossy(aabb.hi[a]) + radius
                    });
                    if outside {
                        stats.skipped += 1;
                        k += 1;
                        prev_skipped = true;
                        continue;
                    }
                }
            }
            self.note_block(&site, stats);
            stats.taken += 1;
            if visit(k, t, p, &site.bounds, prev_skipped) {
                return;
            }
            prev_skipped = false;
            k += 1;
        }
    }

    fn march_dvr(&self, ray: &Ray<T>, dir: Vec3<T>, stats: &mut RayStats) -> [T; 4] {
        let mut acc = [T::zero(); 4];
        let stop = T::lit(self.settings.early_termination_alpha);
        match &self.classifier {
            Classifier::Post(lut) => self.walk(ray, stats, true, |_, _, p, bounds, _| {
                let [r, g, b, a] = lut.classify(self.value(p, bounds));
                if a > T::zero() {
                    let rgb = self.shade([r, g, b], p, bounds, dir);
                    acc = blend_under(acc, rgb, a);
                }
                acc[3] >= stop
            }),
            Classifier::Pre(rgba) => self.walk(ray, stats, true, |_, _, p, bounds, _| {
                let v: [T; 4] = interpolate_in(rgba, bounds, p, self.settings.interpolation);
                let a = v[3].min(T::one());
                if a > T::zero() {
                    let rgb = [v[0], v[1], v[2]].map(|c| (c / a).max(T::zero()).min(T::one()));
                    let rgb = self.shade(rgb, p, bounds, dir);
                    acc = blend_under(acc, rgb, correct_opacity(a, self.ratio));
                }
                acc[3] >= stop
            }),
            Classifier::Preintegrated(table) => {
                let mut front = T::zero();
                self.walk(ray, stats, false, |k, t, p, bounds, prev_skipped| {
                    let back = self.value(p, bounds);
                    if k > 0 && prev_skipped {
                        let q = self.position(ray, t - self.step);
                        front = self.value(q, &self.site(q).bounds);
                    }
                    if k > 0 {
                        let seg = table.lookup(front, back);
                        if seg[3] > T::zero() {
                            let rgb = [seg[0], seg[1], seg[2]].map(|c| (c / seg[3]).min(T::one()));
                            let rgb = self.shade(rgb, p, bounds, dir);
                            acc = blend_under(acc, rgb, seg[3]);
                        }
                    }
                    front = back;
                    acc[3] >= stop
                });
            }
        }
        acc
    }

    fn march_isosurface(&self, ray: &Ray<T>, stats: &mut RayStats) -> Option<T> {
        let mut front = T::zero();
        let mut hit = None;
        let above = |v: T| v >= self.iso;
        self.walk(ray, stats, false, |k, t, p, bounds, prev_skipped| {
            let back = self.value(p, bounds);
            if k > 0 && prev_skipped {
                let q = self.position(ray, t - self.step);
                front = self.value(q, &self.site(q).bounds);
            }
            if k > 0 && above(front) != above(back) {
                let (mut lo, mut hi) = (t - self.step, t);
                let side = above(front);
                for _ in 0..BISECTION_STEPS {
                    let mid = (lo + hi) * T::lit(0.5);
                    let q = self.position(ray, mid);
                    if above(self.value(q, &self.site(q).bounds)) == side {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hit = Some((lo + hi) * T::lit(0.5));
                return true;
            }
            front = back;
            false
        });
        hit
    }
}

/// Whether the zero-opacity bins between `lo` and `hi` form one run, so that
/// any convex combination of transparent values is transparent.
fn transparent_values_contiguous(lut: &ClassifiedLut, lo: i16, hi: i16) -> bool {
    let (a, b) = (lut.bin_of(f64::from(lo)), lut.bin_of(f64::from(hi)));
    let mut runs = 0;
    let mut inside = false;
    for e in &lut.entries()[a..=b] {
        let clear = e[3] == 0.0;
        if clear && !inside {
            runs += 1;
        }
        inside = clear;
    }
    runs <= 1
}

fn corrected_lut(lut: &ClassifiedLut, ratio: f64) -> ClassifiedLut {
    lut.map_opacity(|a| correct_opacity(a, ratio))
}

fn premultiplied<T: Real>(c: [f64; 4]) -> [T; 4] {
    [c[0] * c[3], c[1] * c[3], c[2] * c[3], c[3]].map(T::lit)
}

/// `front` over `back`, both premultiplied.
fn blend_premultiplied<T: Real>(front: [T; 4], back: [T; 4]) -> [T; 4] {
    let rest = T::one() - front[3];
    [0, 1, 2, 3].map(|c| front[c] + rest * back[c])
}

fn to_rgba8<T: Real>(c: [T; 4]) -> [u8; 4] {
    let q = |v: T| {
        (v.max(T::zero()).min(T::one()) * T::lit(255.0))
            .round()
            .to_u8()
            .unwrap_or(0)
    };
    let a = c[3];
    if a <= T::zero() {
        return [0; 4];
    }
    [q(c[0] / a), q(c[1] / a), q(c[2] / a), q(a)]
}

/// Renders `vol` in single precision.
pub fn render(
    vol: &ScalarVolume,
    camera: &Camera,
    tf: &TransferFunction,
    settings: &RenderSettings,
) -> Result<ImageRgba, RenderError> {
    Renderer::<f32>::new(vol, tf, settings)?.render(camera)
}

pub fn render_region(
    vol: &ScalarVolume,
    camera: &Camera,
    tf: &TransferFunction,
    settings: &RenderSettings,
    rect: PixelRect,
) -> Result<ImageRgba, RenderError> {
    Renderer::<f32>::new(vol, tf, settings)?.render_region(camera, rect)
}
