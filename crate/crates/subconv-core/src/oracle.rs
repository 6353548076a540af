//! Deliberately naive reference implementations used to check the engine.
//!
//! Nothing here touches the tiler, codec or matcher: the submanifold
//! references walk the coordinate map directly with nested loops, and the
//! dense reference materializes the whole volume. Slow and obvious on
//! purpose — these are the ground truth the fast path must reproduce.

use std::collections::BTreeSet;

use crate::compute::PostOp;
use crate::error::{Error, Result};
use crate::grid::{Coordinate, Extent, Kernel, SparseGrid};

/// Reference submanifold convolution in quantized integer arithmetic.
///
/// For every active site p, `out(p)[m] = sum over offsets o and input
/// channels n of in(p + o - h)[n] * w[o][n][m]`, with absent neighbors
/// contributing zero. The accumulator is requantized exactly like the
/// engine: arithmetic right shift, clamp to i16, then the post-op.
pub fn subconv_reference_int(
    grid: &SparseGrid<i16>,
    kernel: &Kernel<i8>,
    requant_shift: u32,
    post_op: PostOp,
) -> Result<SparseGrid<i16>> {
    if kernel.c_in() != grid.channels() {
        return Err(Error::Config(format!(
            "kernel expects {} input channels, grid has {}",
            kernel.c_in(),
            grid.channels()
        )));
    }
    let k = kernel.k();
    let h = kernel.halo() as i64;
    let extent = grid.extent();
    let mut out = SparseGrid::new(extent, kernel.c_out())?;

    for (p, _) in grid.iter() {
        let mut acc = vec![0i64; kernel.c_out()];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let qx = p.x as i64 + kx as i64 - h;
                    let qy = p.y as i64 + ky as i64 - h;
                    let qz = p.z as i64 + kz as i64 - h;
                    if qx < 0 || qy < 0 || qz < 0 {
                        continue;
                    }
                    let q = Coordinate::new(qx as u32, qy as u32, qz as u32);
                    if !extent.contains(q) {
                        continue;
                    }
                    let Some(features) = grid.get(q) else { continue };
                    for (n, &a) in features.iter().enumerate() {
                        for (m, slot) in acc.iter_mut().enumerate() {
                            *slot += a as i64 * kernel.get(kx, ky, kz, n, m) as i64;
                        }
                    }
                }
            }
        }
        let features: Vec<i16> = acc
            .into_iter()
            .map(|v| {
                let shifted = v >> requant_shift;
                let clamped = shifted.clamp(i16::MIN as i64, i16::MAX as i64) as i16;
                match post_op {
                    PostOp::None => clamped,
                    PostOp::Relu => clamped.max(0),
                }
            })
            .collect();
        out.insert(p, features)?;
    }
    Ok(out)
}

/// Reference submanifold convolution in real arithmetic. Same traversal as
/// the integer variant; no requantization, post-op on the value only.
pub fn subconv_reference_f32(
    grid: &SparseGrid<f32>,
    kernel: &Kernel<f32>,
    post_op: PostOp,
) -> Result<SparseGrid<f32>> {
    if kernel.c_in() != grid.channels() {
        return Err(Error::Config(format!(
            "kernel expects {} input channels, grid has {}",
            kernel.c_in(),
            grid.channels()
        )));
    }
    let k = kernel.k();
    let h = kernel.halo() as i64;
    let extent = grid.extent();
    let mut out = SparseGrid::new(extent, kernel.c_out())?;

    for (p, _) in grid.iter() {
        let mut acc = vec![0f32; kernel.c_out()];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let qx = p.x as i64 + kx as i64 - h;
                    let qy = p.y as i64 + ky as i64 - h;
                    let qz = p.z as i64 + kz as i64 - h;
                    if qx < 0 || qy < 0 || qz < 0 {
                        continue;
                    }
                    let q = Coordinate::new(qx as u32, qy as u32, qz as u32);
                    if !extent.contains(q) {
                        continue;
                    }
                    let Some(features) = grid.get(q) else { continue };
                    for (n, &a) in features.iter().enumerate() {
                        for (m, slot) in acc.iter_mut().enumerate() {
                            *slot += a * kernel.get(kx, ky, kz, n, m);
                        }
                    }
                }
            }
        }
        let features: Vec<f32> = acc
            .into_iter()
            .map(|v| match post_op {
                PostOp::None => v,
                PostOp::Relu => v.max(0.0),
            })
            .collect();
        out.insert(p, features)?;
    }
    Ok(out)
}

/// Total number of (center, neighbor) pairs a submanifold convolution with a
/// `k`^3 kernel would compute on this grid. Independent recount used to
/// check match traces.
pub fn count_neighbor_pairs<T: crate::grid::Scalar>(grid: &SparseGrid<T>, k: usize) -> u64 {
    let h = (k / 2) as i64;
    let extent = grid.extent();
    let mut total = 0u64;
    for (p, _) in grid.iter() {
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let qx = p.x as i64 + kx as i64 - h;
                    let qy = p.y as i64 + ky as i64 - h;
                    let qz = p.z as i64 + kz as i64 - h;
                    if qx < 0 || qy < 0 || qz < 0 {
                        continue;
                    }
                    let q = Coordinate::new(qx as u32, qy as u32, qz as u32);
                    if extent.contains(q) && grid.contains(q) {
                        total += 1;
                    }
                }
            }
        }
    }
    total
}

/// Dense zero-padded feature volume, for demonstrating what ordinary
/// convolution does to sparsity. Guarded to small extents.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid {
    pub extent: Extent,
    pub channels: usize,
    /// Row-major `[z][y][x][channel]`.
    pub data: Vec<f32>,
}

const DENSE_VOLUME_LIMIT: u64 = 64 * 64 * 64;

impl DenseGrid {
    pub fn zeros(extent: Extent, channels: usize) -> Result<Self> {
        if extent.volume() > DENSE_VOLUME_LIMIT {
            return Err(Error::InvalidInput(format!(
                "dense reference is limited to {DENSE_VOLUME_LIMIT} voxels, extent {extent} has {}",
                extent.volume()
            )));
        }
        if channels == 0 {
            return Err(Error::InvalidInput("channel count must be positive".into()));
        }
        Ok(DenseGrid {
            extent,
            channels,
            data: vec![0.0; extent.volume() as usize * channels],
        })
    }

    pub fn from_sparse(grid: &SparseGrid<f32>) -> Result<Self> {
        let mut dense = DenseGrid::zeros(grid.extent(), grid.channels())?;
        for (c, f) in grid.iter() {
            let base = dense.index(c);
            dense.data[base..base + f.len()].copy_from_slice(f);
        }
        Ok(dense)
    }

    fn index(&self, c: Coordinate) -> usize {
        (((c.z as usize * self.extent.y as usize) + c.y as usize) * self.extent.x as usize
            + c.x as usize)
            * self.channels
    }

    pub fn at(&self, c: Coordinate) -> &[f32] {
        let base = self.index(c);
        &self.data[base..base + self.channels]
    }

    /// Coordinates with any non-zero channel.
    pub fn support(&self) -> BTreeSet<Coordinate> {
        let mut set = BTreeSet::new();
        for z in 0..self.extent.z {
            for y in 0..self.extent.y {
                for x in 0..self.extent.x {
                    let c = Coordinate::new(x, y, z);
                    if self.at(c).iter().any(|&v| v != 0.0) {
                        set.insert(c);
                    }
                }
            }
        }
        set
    }
}

/// Ordinary (non-submanifold) stride-1 zero-padded dense convolution.
/// Computes an output at every position, so a sparse input dilates: the
/// output support is a superset of the input support for positive kernels.
pub fn dense_conv_reference(grid: &DenseGrid, kernel: &Kernel<f32>) -> Result<DenseGrid> {
    if kernel.c_in() != grid.channels {
        return Err(Error::Config(format!(
            "kernel expects {} input channels, grid has {}",
            kernel.c_in(),
            grid.channels
        )));
    }
    let k = kernel.k();
    let h = kernel.halo() as i64;
    let extent = grid.extent;
    let mut out = DenseGrid::zeros(extent, kernel.c_out())?;

    for z in 0..extent.z {
        for y in 0..extent.y {
            for x in 0..extent.x {
                let mut acc = vec![0f32; kernel.c_out()];
                for kz in 0..k {
                    for ky in 0..k {
                        for kx in 0..k {
                            let qx = x as i64 + kx as i64 - h;
                            let qy = y as i64 + ky as i64 - h;
                            let qz = z as i64 + kz as i64 - h;
                            if qx < 0
                                || qy < 0
                                || qz < 0
                                || qx >= extent.x as i64
                                || qy >= extent.y as i64
                                || qz >= extent.z as i64
                            {
                                continue; // zero padding
                            }
                            let f = grid.at(Coordinate::new(qx as u32, qy as u32, qz as u32));
                            for (n, &a) in f.iter().enumerate() {
                                for (m, slot) in acc.iter_mut().enumerate() {
                                    *slot += a * kernel.get(kx, ky, kz, n, m);
                                }
                            }
                        }
                    }
                }
                let c = Coordinate::new(x, y, z);
                let base = out.index(c);
                out.data[base..base + acc.len()].copy_from_slice(&acc);
            }
        }
    }
    Ok(out)
}
