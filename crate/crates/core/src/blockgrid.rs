//! Overlapping block decomposition with per-block value ranges, empty-block
//! culling, tight visible-voxel boxes and camera-ordered traversal.
//!
//! Block `i` on an axis covers voxels `[i·(B−o), i·(B−o)+B)` clipped to the
//! volume. Each ray sample is owned by exactly one block: the one whose core
//! region contains it. Cores are split at the middle of every overlap slab,
//! the remaining overlap voxels being read-only interpolation support.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classification::ClassifiedLut;
use crate::real::{Real, Vec3};
use crate::sampling::VoxelBox;
use crate::volume::ScalarVolume;

pub const DEFAULT_BLOCK_SIZE: usize = 64;
pub const DEFAULT_OVERLAP: usize = 3;
pub const MIN_BLOCK_SIZE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockError {
    #[error("invalid block spec: size {block_size}, overlap {overlap} (need size ≥ 8 and 1 ≤ overlap < size)")]
    InvalidBlockSpec { block_size: usize, overlap: usize },
    #[error("block {index:?} has no visible voxels")]
    EmptyBlock { index: [usize; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: [usize; 3],
    pub origin: [usize; 3],
    pub extent: [usize; 3],
    pub value_min: i16,
    pub value_max: i16,
    pub empty: bool,
    pub tight_aabb: Option<VoxelBox>,
}

impl Block {
    /// Inclusive voxel bounds of the block, overlap included.
    pub fn bounds(&self) -> VoxelBox {
        VoxelBox {
            lo: self.origin,
            hi: [0, 1, 2].map(|a| self.origin[a] + self.extent[a] - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    block_size: usize,
    overlap: usize,
    dims: [usize; 3],
    spacing: [f64; 3],
    counts: [usize; 3],
    blocks: Vec<Block>,
    empty: usize,
}

fn blocks_along(n: usize, block_size: usize, stride: usize) -> usize {
    if n <= block_size {
        1
    } else {
        (n - block_size).div_ceil(stride) + 1
    }
}

pub fn decompose(vol: &ScalarVolume, block_size: usize, overlap: usize) -> Result<BlockGrid, BlockError> {
    if block_size < MIN_BLOCK_SIZE || overlap < 1 || overlap >= block_size {
        return Err(BlockError::InvalidBlockSpec { block_size, overlap });
    }
    let dims = vol.dims();
    let stride = block_size - overlap;
    let counts = dims.map(|n| blocks_along(n, block_size, stride));
    let mut indices = Vec::with_capacity(counts.iter().product());
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                indices.push([i, j, k]);
            }
        }
    }
    let blocks = indices
        .into_par_iter()
        .map(|index| {
            let origin = index.map(|i| i * stride);
            let extent = [0, 1, 2].map(|a| block_size.min(dims[a] - origin[a]));
            let (mut lo, mut hi) = (i16::MAX, i16::MIN);
            for k in origin[2]..origin[2] + extent[2] {
                for j in origin[1]..origin[1] + extent[1] {
                    let row = vol.index(origin[0], j, k);
                    for &v in &vol.values()[row..row + extent[0]] {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            Block {
                index,
                origin,
                extent,
                value_min: lo,
                value_max: hi,
                empty: false,
                tight_aabb: None,
            }
        })
        .collect();
    Ok(BlockGrid {
        block_size,
        overlap,
        dims,
        spacing: vol.spacing(),
        counts,
        blocks,
        empty: 0,
    })
}

/// Marks blocks whose whole value range maps to zero opacity.
pub fn cull_empty(mut grid: BlockGrid, lut: &ClassifiedLut) -> BlockGrid {
    for b in &mut grid.blocks {
        b.empty = lut.max_opacity_in(f64::from(b.value_min), f64::from(b.value_max)) == 0.0;
        if b.empty {
            b.tight_aabb = None;
        }
    }
    grid.empty = grid.blocks.iter().filter(|b| b.empty).count();
    grid
}

/// Smallest box around the block's nonzero-opacity voxels, dilated by one
/// voxel and clipped to the block.
pub fn fit_bounding_box(vol: &ScalarVolume, block: &Block, lut: &ClassifiedLut) -> Result<Block, BlockError> {
    let empty = || BlockError::EmptyBlock { index: block.index };
    if block.empty {
        return Err(empty());
    }
    let bounds = block.bounds();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for k in bounds.lo[2]..=bounds.hi[2] {
        for j in bounds.lo[1]..=bounds.hi[1] {
            for i in bounds.lo[0]..=bounds.hi[0] {
                let v = vol.get(i, j, k);
                if lut.classify(f64::from(v))[3] > 0.0 {
                    any = true;
                    for (a, c) in [i, j, k].into_iter().enumerate() {
                        lo[a] = lo[a].min(c);
                        hi[a] = hi[a].max(c);
                    }
                }
            }
        }
    }
    if !any {
        return Err(empty());
    }
    let aabb = VoxelBox {
        lo: [0, 1, 2].map(|a| lo[a].saturating_sub(1).max(bounds.lo[a])),
        hi: [0, 1, 2].map(|a| (hi[a] + 1).min(bounds.hi[a])),
    };
    Ok(Block {
        tight_aabb: Some(aabb),
        ..block.clone()
    })
}

/// Culls empty blocks and fits the tight box of every remaining block.
///
/// A block whose value range admits opacity but whose individual voxels are
/// all transparent keeps the whole block as its box.
pub fn prepare(vol: &ScalarVolume, grid: BlockGrid, lut: &ClassifiedLut) -> BlockGrid {
    let mut grid = cull_empty(grid, lut);
    grid.blocks.par_iter_mut().filter(|b| !b.empty).for_each(|b| {
        b.tight_aabb = Some(match fit_bounding_box(vol, b, lut) {
            Ok(fitted) => fitted.tight_aabb.unwrap(),
            Err(_) => b.bounds(),
        });
    });
    grid
}

/// Non-empty blocks sorted by distance from `eye` (mm) to the block centre,
/// ties broken lexicographically by index.
pub fn traversal_order(grid: &BlockGrid, eye: [f64; 3]) -> Vec<[usize; 3]> {
    let mut keyed: Vec<(f64, [usize; 3])> = grid
        .blocks
        .iter()
        .filter(|b| !b.empty)
        .map(|b| {
            let c = grid.block_center_mm(b);
            let d2: f64 = (0..3).map(|a| (c[a] - eye[a]).powi(2)).sum();
            (d2, b.index)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

impl BlockGrid {
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn stride(&self) -> usize {
        self.block_size - self.overlap
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Blocks per axis.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.blocks.len()
    }

    pub fn empty_count(&self) -> usize {
        self.empty
    }

    pub fn empty_fraction(&self) -> f64 {
        self.empty as f64 / self.blocks.len() as f64
    }

    pub fn linear_index(&self, index: [usize; 3]) -> usize {
        index[0] + self.counts[0] * (index[1] + self.counts[1] * index[2])
    }

    pub fn block(&self, index: [usize; 3]) -> &Block {
        &self.blocks[self.linear_index(index)]
    }

    pub fn block_center_mm(&self, b: &Block) -> [f64; 3] {
        [0, 1, 2].map(|a| (b.origin[a] as f64 + (b.extent[a] as f64 - 1.0) / 2.0) * self.spacing[a])
    }

    /// Lower edge (voxel units) of block `i`'s core on an axis.
    fn core_start(&self, i: usize) -> f64 {
        i as f64 * self.stride() as f64 + (self.overlap as f64 - 1.0) / 2.0
    }

    /// Half-open core interval `[lo, hi)` of block `i` on `axis`, in voxel
    /// units; the outermost blocks extend to infinity.
    pub fn core_interval(&self, axis: usize, i: usize) -> (f64, f64) {
        let lo = if i == 0 { f64::NEG_INFINITY } else { self.core_start(i) };
        let hi = if i + 1 == self.counts[axis] {
            f64::INFINITY
        } else {
            self.core_start(i + 1)
        };
        (lo, hi)
    }

    /// Index of the block whose core contains the voxel-space point `p`.
    #[inline]
    pub fn owner_of<T: Real>(&self, p: Vec3<T>) -> [usize; 3] {
        let offset = (self.overlap as f64 - 1.0) / 2.0;
        let stride = self.stride() as f64;
        let p = p.to_array();
        [0, 1, 2].map(|a| {
            let q = ((p[a].as_f64() - offset) / stride).floor();
            if q <= 0.0 {
                0
            } else {
                (q as usize).min(self.counts[a] - 1)
            }
        })
    }

    pub fn stats(&self) -> BlockStats {
        BlockStats {
            dims: self.dims,
            block_size: self.block_size,
            overlap: self.overlap,
            blocks_per_axis: self.counts,
            total: self.total(),
            empty: self.empty,
            empty_percent: 100.0 * self.empty_fraction(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockSummary {
                    index: b.index,
                    min: b.value_min,
                    max: b.value_max,
                    empty: b.empty,
                })
                .collect(),
        }
    }
}

/// JSON-friendly summary of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub dims: [usize; 3],
    pub block_size: usize,
    pub overlap: usize,
    pub blocks_per_axis: [usize; 3],
    pub total: usize,
    pub empty: usize,
    pub empty_percent: f64,
    pub blocks: Vec<BlockSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub index: [usize; 3],
    pub min: i16,
    pub max: i16,
    pub empty: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::{build_lut, ControlPoint, TransferFunction, CT_DOMAIN};
    use crate::ingest::{generate_phantom, PhantomKind};

    fn constant(dims: [usize; 3]) -> ScalarVolume {
        ScalarVolume::new(dims, [1.0; 3], vec![0; dims.iter().product()]).unwrap()
    }

    /// Checks every voxel is covered and adjacent blocks share exactly
    /// `overlap` layers, by enumerating coverage per axis.
    fn check_coverage(n: usize, b: usize, o: usize) -> usize {
        let vol = constant([n, 2, 2]);
        let grid = decompose(&vol, b, o).unwrap();
        let count = grid.counts()[0];
        let mut covered = vec![0usize; n];
        for i in 0..count {
            let blk = grid.block([i, 0, 0]);
            for c in &mut covered[blk.origin[0]..blk.origin[0] + blk.extent[0]] {
                *c += 1;
            }
            if i + 1 < count {
                let next = grid.block([i + 1, 0, 0]);
                let shared = blk.origin[0] + blk.extent[0] - next.origin[0];
                assert_eq!(shared, o, "n={n} b={b} o={o} block {i}");
            }
        }
        assert!(covered.iter().all(|&c| c >= 1), "n={n} b={b} o={o}");
        count
    }

    #[test]
    fn coverage_and_overlap_exhaustive() {
        for n in 2..200 {
            for (b, o) in [(8, 1), (8, 3), (16, 3), (64, 3), (10, 9)] {
                check_coverage(n, b, o);
            }
        }
        assert_eq!(check_coverage(512, 64, 3), 9);
    }

    #[test]
    fn count_512_cube() {
        assert_eq!(blocks_along(512, 64, 61), 9);
        assert_eq!(blocks_along(512, 64, 61).pow(3), 729);
    }

    #[test]
    fn single_block_volume() {
        let grid = decompose(&constant([64, 64, 64]), 64, 3).unwrap();
        assert_eq!(grid.total(), 1);
        assert_eq!(grid.blocks()[0].extent, [64; 3]);
    }

    #[test]
    fn rejects_bad_specs() {
        let vol = constant([8, 8, 8]);
        assert!(matches!(
            decompose(&vol, 64, 64),
            Err(BlockError::InvalidBlockSpec { .. })
        ));
        assert!(decompose(&vol, 4, 1).is_err());
        assert!(decompose(&vol, 16, 0).is_err());
    }

    #[test]
    fn min_max_match_brute_force() {
        let vol = generate_phantom(PhantomKind::Torso, [40, 36, 44]);
        let grid = decompose(&vol, 16, 3).unwrap();
        for b in grid.blocks() {
            let bx = b.bounds();
            let mut lo = i16::MAX;
            let mut hi = i16::MIN;
            for k in bx.lo[2]..=bx.hi[2] {
                for j in bx.lo[1]..=bx.hi[1] {
                    for i in bx.lo[0]..=bx.hi[0] {
                        lo = lo.min(vol.get(i, j, k));
                        hi = hi.max(vol.get(i, j, k));
                    }
                }
            }
            assert_eq!((b.value_min, b.value_max), (lo, hi));
        }
    }

    #[test]
    fn cores_partition_each_axis() {
        let vol = constant([130, 2, 2]);
        let grid = decompose(&vol, 16, 3).unwrap();
        for step in 0..1300 {
            let x = step as f64 * 0.1 - 0.05;
            let owner = grid.owner_of(Vec3::new(x, 0.0, 0.0))[0];
            let (lo, hi) = grid.core_interval(0, owner);
            assert!(x >= lo && x < hi, "x={x} owner={owner}");
            let bounds = grid.block([owner, 0, 0]).bounds();
            // Core stays inside the block with one voxel of support either side.
            if owner > 0 {
                assert!(lo >= bounds.lo[0] as f64 + 1.0);
            }
            if owner + 1 < grid.counts()[0] {
                assert!(hi <= bounds.hi[0] as f64 - 1.0);
            }
        }
    }

    #[test]
    fn culling_extremes() {
        let vol = generate_phantom(PhantomKind::Torso, [48; 3]);
        let grid = decompose(&vol, 16, 3).unwrap();
        let clear = TransferFunction::new(vec![ControlPoint::new(0.0, 1.0, 1.0, 1.0, 0.0)], CT_DOMAIN).unwrap();
        let opaque = TransferFunction::new(vec![ControlPoint::new(0.0, 1.0, 1.0, 1.0, 1.0)], CT_DOMAIN).unwrap();
        let all = cull_empty(grid.clone(), &build_lut(&clear, 4096));
        assert_eq!(all.empty_count(), all.total());
        assert_eq!(cull_empty(grid, &build_lut(&opaque, 4096)).empty_count(), 0);
    }

    #[test]
    fn culling_is_conservative_and_exact_on_torso() {
        let vol = generate_phantom(PhantomKind::Torso, [128; 3]);
        for preset in ["bone", "soft-tissue"] {
            let lut = build_lut(&TransferFunction::preset(preset).unwrap(), 4096);
            let grid = cull_empty(decompose(&vol, 64, 3).unwrap(), &lut);
            for b in grid.blocks() {
                let bx = b.bounds();
                let mut visible = false;
                for k in bx.lo[2]..=bx.hi[2] {
                    for j in bx.lo[1]..=bx.hi[1] {
                        for i in bx.lo[0]..=bx.hi[0] {
                            visible |= lut.classify(f64::from(vol.get(i, j, k)))[3] > 0.0;
                        }
                    }
                }
                assert_eq!(b.empty, !visible, "{preset} block {:?}", b.index);
            }
            assert!(grid.empty_fraction() >= 0.35, "{preset}: {}", grid.empty_fraction());
        }
    }

    #[test]
    fn bounding_boxes() {
        let lut = build_lut(
            &TransferFunction::new(
                vec![
                    ControlPoint::new(0.0, 1.0, 1.0, 1.0, 0.0),
                    ControlPoint::new(1.0, 1.0, 1.0, 1.0, 1.0),
                ],
                CT_DOMAIN,
            )
            .unwrap(),
            4096,
        );
        let full = ScalarVolume::new([12, 12, 12], [1.0; 3], vec![5; 1728]).unwrap();
        let grid = cull_empty(decompose(&full, 12, 3).unwrap(), &lut);
        let fitted = fit_bounding_box(&full, &grid.blocks()[0], &lut).unwrap();
        assert_eq!(fitted.tight_aabb, Some(grid.blocks()[0].bounds()));

        let dot = ScalarVolume::from_fn([12, 12, 12], [1.0; 3], |i, j, k| i16::from((i, j, k) == (6, 5, 7))).unwrap();
        let grid = cull_empty(decompose(&dot, 12, 3).unwrap(), &lut);
        let fitted = fit_bounding_box(&dot, &grid.blocks()[0], &lut).unwrap();
        assert_eq!(
            fitted.tight_aabb,
            Some(VoxelBox {
                lo: [5, 4, 6],
                hi: [7, 6, 8]
            })
        );

        let none = ScalarVolume::new([12, 12, 12], [1.0; 3], vec![0; 1728]).unwrap();
        let grid = cull_empty(decompose(&none, 12, 3).unwrap(), &lut);
        assert_eq!(
            fit_bounding_box(&none, &grid.blocks()[0], &lut),
            Err(BlockError::EmptyBlock { index: [0, 0, 0] })
        );
    }

    #[test]
    fn torso_boxes_contain_all_visible_voxels() {
        let vol = generate_phantom(PhantomKind::Torso, [64; 3]);
        let lut = build_lut(&TransferFunction::preset("bone").unwrap(), 4096);
        let grid = prepare(&vol, decompose(&vol, 16, 3).unwrap(), &lut);
        for b in grid.blocks().iter().filter(|b| !b.empty) {
            let aabb = b.tight_aabb.unwrap();
            let bx = b.bounds();
            for k in bx.lo[2]..=bx.hi[2] {
                for j in bx.lo[1]..=bx.hi[1] {
                    for i in bx.lo[0]..=bx.hi[0] {
                        if lut.classify(f64::from(vol.get(i, j, k)))[3] > 0.0 {
                            assert!(aabb.contains(i, j, k), "block {:?} voxel {:?}", b.index, (i, j, k));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn traversal_from_plus_z_starts_at_top_face() {
        let vol = constant([40, 40, 40]);
        let grid = decompose(&vol, 16, 3).unwrap();
        let order = traversal_order(&grid, [19.5, 19.5, 500.0]);
        assert_eq!(order.len(), grid.total());
        let top = grid.counts()[2] - 1;
        assert_eq!(order[0][2], top);
        let first = grid.block(order[0]);
        let c = grid.block_center_mm(first);
        // Nearest block: on the top layer and closest to the axis.
        for b in grid.blocks() {
            let d = grid.block_center_mm(b);
            let dist = |p: [f64; 3]| (p[0] - 19.5).powi(2) + (p[1] - 19.5).powi(2) + (p[2] - 500.0).powi(2);
            assert!(dist(c) <= dist(d));
        }
    }

    #[test]
    fn traversal_of_empty_grid_is_empty() {
        let vol = constant([20, 20, 20]);
        let clear = TransferFunction::new(vec![ControlPoint::new(0.0, 1.0, 1.0, 1.0, 0.0)], CT_DOMAIN).unwrap();
        let grid = cull_empty(decompose(&vol, 8, 3).unwrap(), &build_lut(&clear, 64));
        assert!(traversal_order(&grid, [0.0, 0.0, 100.0]).is_empty());
    }

    #[test]
    fn mirrored_camera_reverses_order() {
        // 3×3×3 blocks of equal size: 8 + 2·(8−1) = 22 voxels per axis.
        let vol = constant([22, 22, 22]);
        let grid = decompose(&vol, 8, 1).unwrap();
        assert_eq!(grid.counts(), [3, 3, 3]);
        let center = [10.5; 3];
        let eye = [10.5 + 900.0, 10.5 + 300.0, 10.5 + 100.0];
        let mirrored = [0, 1, 2].map(|a| 2.0 * center[a] - eye[a]);
        let forward = traversal_order(&grid, eye);
        let backward = traversal_order(&grid, mirrored);

        // Oracle: brute-force distance sort of all 27 blocks.
        let dist = |e: [f64; 3], idx: [usize; 3]| {
            let c = grid.block_center_mm(grid.block(idx));
            (0..3).map(|a| (c[a] - e[a]).powi(2)).sum::<f64>()
        };
        let mut brute: Vec<[usize; 3]> = grid.blocks().iter().map(|b| b.index).collect();
        brute.sort_by(|a, b| dist(eye, *a).total_cmp(&dist(eye, *b)));
        let keys = |order: &[[usize; 3]], e: [f64; 3]| -> Vec<i64> {
            order.iter().map(|&i| (dist(e, i) * 1e6).round() as i64).collect()
        };
        assert_eq!(keys(&forward, eye), keys(&brute, eye));

        // Reversal holds up to ties: compare tie groups as sets.
        let groups = |order: Vec<[usize; 3]>, e: [f64; 3]| {
            let mut out: Vec<Vec<[usize; 3]>> = Vec::new();
            let mut last = None;
            for i in order {
                let k = (dist(e, i) * 1e6).round() as i64;
                if last != Some(k) {
                    out.push(Vec::new());
                    last = Some(k);
                }
                out.last_mut().unwrap().push(i);
            }
            for g in &mut out {
                g.sort();
            }
            out
        };
        let mut reversed = groups(forward, eye);
        reversed.reverse();
        assert_eq!(reversed, groups(backward, mirrored));
    }
}
