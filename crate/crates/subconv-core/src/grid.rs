//! Core data model: coordinates, sparse voxel grids, kernels and
//! quantization schemes.
//!
//! A [`SparseGrid`] stores only active sites. Activity is positional: a site
//! that is present is active even if every stored feature is zero, and the
//! engine is required to preserve the active set exactly (submanifold
//! semantics — outputs appear only where inputs were active).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::compute::PostOp;
use crate::error::{Error, Result};

/// Voxel index within a grid; each component is bounded by the grid extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Coordinate {
    pub fn new(x: u32, y: u32, z: u32) -> Self {
        Coordinate { x, y, z }
    }
}

/// Coordinates order in scan-raster order: ascending z, then y, then x.
/// Everything that iterates grid sites inherits this canonical order.
impl Ord for Coordinate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.z, self.y, self.x).cmp(&(other.z, other.y, other.x))
    }
}

impl PartialOrd for Coordinate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// Grid dimensions in voxels along x (width), y (height) and z (depth).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Extent {
    pub fn new(x: u32, y: u32, z: u32) -> Self {
        Extent { x, y, z }
    }

    /// Cubic extent, e.g. `Extent::cube(192)` for a 192^3 grid.
    pub fn cube(edge: u32) -> Self {
        Extent::new(edge, edge, edge)
    }

    pub fn volume(&self) -> u64 {
        self.x as u64 * self.y as u64 * self.z as u64
    }

    pub fn contains(&self, c: Coordinate) -> bool {
        c.x < self.x && c.y < self.y && c.z < self.z
    }
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// A raw input point: real-valued position plus a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub position: [f64; 3],
    pub features: Vec<f32>,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, features: Vec<f32>) -> Self {
        Point {
            position: [x, y, z],
            features,
        }
    }
}

/// Feature element type stored in a grid. Implemented for `f32` (real
/// arithmetic) and `i16` (quantized arithmetic with `i8` weights and a wide
/// integer accumulator).
pub trait Scalar: Copy + PartialEq + fmt::Debug + Send + Sync + 'static {
    /// Weight element type paired with this activation type.
    type Weight: Copy + PartialEq + fmt::Debug + Send + Sync + 'static;
    /// Accumulator type; wide enough that a valid quantization scheme never
    /// overflows it (see [`QuantScheme::validate`]).
    type Acc: Copy;

    /// On-disk dtype code in grid files (0 = f32, 1 = i16).
    const DTYPE: u32;
    /// Bytes per stored feature element.
    const BYTES: u64;

    fn zero_acc() -> Self::Acc;
    fn mul_acc(acc: Self::Acc, a: Self, w: Self::Weight) -> Self::Acc;
    /// Reduce a finished accumulator to an activation: integer mode applies
    /// an arithmetic right shift by `requant_shift` and clamps to the
    /// activation range; real mode ignores `requant_shift`. The post-op acts
    /// on the value only.
    fn finalize(acc: Self::Acc, requant_shift: u32, post_op: PostOp) -> Self;

    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()>;
    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self>;
}

impl Scalar for f32 {
    type Weight = f32;
    type Acc = f32;

    const DTYPE: u32 = 0;
    const BYTES: u64 = 4;

    fn zero_acc() -> f32 {
        0.0
    }

    fn mul_acc(acc: f32, a: f32, w: f32) -> f32 {
        acc + a * w
    }

    fn finalize(acc: f32, _requant_shift: u32, post_op: PostOp) -> f32 {
        match post_op {
            PostOp::None => acc,
            PostOp::Relu => acc.max(0.0),
        }
    }

    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_f32::<LittleEndian>(self)
    }

    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self> {
        r.read_f32::<LittleEndian>()
    }
}

impl Scalar for i16 {
    type Weight = i8;
    type Acc = i64;

    const DTYPE: u32 = 1;
    const BYTES: u64 = 2;

    fn zero_acc() -> i64 {
        0
    }

    fn mul_acc(acc: i64, a: i16, w: i8) -> i64 {
        acc + a as i64 * w as i64
    }

    fn finalize(acc: i64, requant_shift: u32, post_op: PostOp) -> i16 {
        let shifted = acc >> requant_shift;
        let clamped = shifted.clamp(i16::MIN as i64, i16::MAX as i64) as i16;
        match post_op {
            PostOp::None => clamped,
            PostOp::Relu => clamped.max(0),
        }
    }

    fn write_le<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_i16::<LittleEndian>(self)
    }

    fn read_le<R: Read>(r: &mut R) -> std::io::Result<Self> {
        r.read_i16::<LittleEndian>()
    }
}

/// Sparse voxel grid: extent, channel count and a map from active coordinate
/// to its feature vector. Sites iterate in canonical (z, y, x) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrid<T: Scalar> {
    extent: Extent,
    channels: usize,
    sites: BTreeMap<Coordinate, Vec<T>>,
}

impl<T: Scalar> SparseGrid<T> {
    pub fn new(extent: Extent, channels: usize) -> Result<Self> {
        if extent.x == 0 || extent.y == 0 || extent.z == 0 {
            return Err(Error::InvalidInput(format!(
                "extent must be positive, got {extent}"
            )));
        }
        if channels == 0 {
            return Err(Error::InvalidInput("channel count must be positive".into()));
        }
        Ok(SparseGrid {
            extent,
            channels,
            sites: BTreeMap::new(),
        })
    }

    pub fn from_sites<I>(extent: Extent, channels: usize, sites: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Coordinate, Vec<T>)>,
    {
        let mut grid = SparseGrid::new(extent, channels)?;
        for (c, f) in sites {
            grid.insert(c, f)?;
        }
        Ok(grid)
    }

    /// Insert (or replace) an active site. A site stays active even when all
    /// of its features are zero.
    pub fn insert(&mut self, coord: Coordinate, features: Vec<T>) -> Result<()> {
        if !self.extent.contains(coord) {
            return Err(Error::InvalidInput(format!(
                "site {coord} outside extent {}",
                self.extent
            )));
        }
        if features.len() != self.channels {
            return Err(Error::InvalidInput(format!(
                "site {coord} has {} features, grid has {} channels",
                features.len(),
                self.channels
            )));
        }
        self.sites.insert(coord, features);
        Ok(())
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of active sites.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn get(&self, coord: Coordinate) -> Option<&[T]> {
        self.sites.get(&coord).map(|v| v.as_slice())
    }

    pub fn contains(&self, coord: Coordinate) -> bool {
        self.sites.contains_key(&coord)
    }

    /// Sites in canonical (z, y, x) order.
    pub fn iter(&self) -> impl Iterator<Item = (Coordinate, &[T])> {
        self.sites.iter().map(|(c, f)| (*c, f.as_slice()))
    }

    /// Active coordinates in canonical order.
    pub fn coords(&self) -> impl Iterator<Item = Coordinate> + '_ {
        self.sites.keys().copied()
    }

    /// Sites whose coordinates lie in `lane` (fixed y, z) with x in
    /// `[x_lo, x_hi)`, ascending in x. Contiguous in the canonical order, so
    /// this is a cheap range scan.
    pub fn lane_range(
        &self,
        y: u32,
        z: u32,
        x_lo: u32,
        x_hi: u32,
    ) -> impl Iterator<Item = (Coordinate, &[T])> {
        let lo = Coordinate::new(x_lo, y, z);
        let hi = Coordinate::new(x_hi, y, z);
        self.sites
            .range(lo..hi)
            .map(|(c, f)| (*c, f.as_slice()))
    }
}

/// Convolution kernel: `k`^3 spatial offsets by `c_in` by `c_out` weights.
///
/// Offsets linearize z-major: index `(kz * k + ky) * k + kx`, matching the
/// on-disk `[offset][ic][oc]` weight layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<W> {
    k: usize,
    c_in: usize,
    c_out: usize,
    weights: Vec<W>,
}

impl<W: Copy> Kernel<W> {
    /// `weights` must hold `k^3 * c_in * c_out` elements in
    /// `[offset][ic][oc]` order; `k` must be odd.
    pub fn new(k: usize, c_in: usize, c_out: usize, weights: Vec<W>) -> Result<Self> {
        if k == 0 || k % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {k}")));
        }
        if c_in == 0 || c_out == 0 {
            return Err(Error::Config("kernel channel counts must be positive".into()));
        }
        let expect = k * k * k * c_in * c_out;
        if weights.len() != expect {
            return Err(Error::Config(format!(
                "kernel {k}x{k}x{k} with {c_in}->{c_out} channels needs {expect} weights, got {}",
                weights.len()
            )));
        }
        Ok(Kernel {
            k,
            c_in,
            c_out,
            weights,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    /// Half-width of the kernel window (`k / 2`).
    pub fn halo(&self) -> usize {
        self.k / 2
    }

    pub fn weights(&self) -> &[W] {
        &self.weights
    }

    #[inline]
    pub fn offset_index(&self, kx: usize, ky: usize, kz: usize) -> usize {
        debug_assert!(kx < self.k && ky < self.k && kz < self.k);
        (kz * self.k + ky) * self.k + kx
    }

    #[inline]
    pub fn get(&self, kx: usize, ky: usize, kz: usize, n: usize, m: usize) -> W {
        debug_assert!(n < self.c_in && m < self.c_out);
        self.weights[self.offset_index(kx, ky, kz) * self.c_in * self.c_out + n * self.c_out + m]
    }

    /// Weight block for one spatial offset, `c_in * c_out` long (`[ic][oc]`).
    #[inline]
    pub fn offset_block(&self, kx: usize, ky: usize, kz: usize) -> &[W] {
        let stride = self.c_in * self.c_out;
        let base = self.offset_index(kx, ky, kz) * stride;
        &self.weights[base..base + stride]
    }
}

impl<W: Copy + Default> Kernel<W> {
    pub fn zeros(k: usize, c_in: usize, c_out: usize) -> Result<Self> {
        Kernel::new(k, c_in, c_out, vec![W::default(); k * k * k * c_in * c_out])
    }

    /// Kernel that copies the center activation: `one` at the center offset
    /// on the channel diagonal, zero elsewhere.
    pub fn identity(k: usize, channels: usize, one: W) -> Result<Self> {
        let mut kernel = Kernel::zeros(k, channels, channels)?;
        let h = k / 2;
        let stride = channels * channels;
        let base = kernel.offset_index(h, h, h) * stride;
        for n in 0..channels {
            kernel.weights[base + n * channels + n] = one;
        }
        Ok(kernel)
    }
}

/// Fixed-point layer arithmetic description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub accumulator_bits: u32,
}

impl Default for QuantScheme {
    fn default() -> Self {
        QuantScheme {
            weight_bits: 8,
            activation_bits: 16,
            accumulator_bits: 32,
        }
    }
}

impl QuantScheme {
    /// Signed activation range implied by `activation_bits`.
    pub fn activation_range(&self) -> (i32, i32) {
        let half = 1i32 << (self.activation_bits - 1);
        (-half, half - 1)
    }

    /// Check that the accumulator cannot overflow for a `k`^3 kernel with
    /// `c_in` input channels:
    /// `accumulator_bits >= weight_bits + activation_bits + ceil(log2(k^3 * c_in))`.
    pub fn validate(&self, k: usize, c_in: usize) -> Result<()> {
        if !(2..=8).contains(&self.weight_bits) {
            return Err(Error::Config(format!(
                "weight_bits must be in 2..=8 for i8 storage, got {}",
                self.weight_bits
            )));
        }
        if !(2..=16).contains(&self.activation_bits) {
            return Err(Error::Config(format!(
                "activation_bits must be in 2..=16 for i16 storage, got {}",
                self.activation_bits
            )));
        }
        let terms = (k * k * k * c_in) as u64;
        let headroom = 64 - (terms - 1).leading_zeros(); // ceil(log2(terms))
        let needed = self.weight_bits + self.activation_bits + headroom;
        if self.accumulator_bits < needed {
            return Err(Error::Config(format!(
                "accumulator_bits {} too narrow: {}^3 kernel with {} input channels needs {} \
                 ({} weight + {} activation + {} headroom)",
                self.accumulator_bits,
                k,
                c_in,
                needed,
                self.weight_bits,
                self.activation_bits,
                headroom
            )));
        }
        Ok(())
    }

    /// Default scheme widened just enough for this layer shape.
    pub fn for_layer(k: usize, c_in: usize) -> Self {
        let mut scheme = QuantScheme::default();
        if scheme.validate(k, c_in).is_err() {
            scheme.accumulator_bits = 64;
        }
        scheme
    }
}

/// Map a point cloud onto a voxel grid.
///
/// The cloud's axis-aligned bounding box is scaled isotropically to fit the
/// extent and centered; each point lands in the voxel containing its scaled
/// position, with positions on the upper boundary clamped to the last voxel.
/// Points falling in the same voxel have their features averaged. An empty
/// cloud produces an empty (but valid) grid.
pub fn voxelize(points: &[Point], extent: Extent, channels: usize) -> Result<SparseGrid<f32>> {
    let mut grid = SparseGrid::new(extent, channels)?;
    if points.is_empty() {
        return Ok(grid);
    }

    for (i, p) in points.iter().enumerate() {
        if p.features.len() != channels {
            return Err(Error::InvalidInput(format!(
                "point {i} has {} features, expected {channels}",
                p.features.len()
            )));
        }
        if p.position.iter().any(|v| !v.is_finite())
            || p.features.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate or feature"
            )));
        }
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p.position[a]);
            hi[a] = hi[a].max(p.position[a]);
        }
    }
    let ext = [extent.x as f64, extent.y as f64, extent.z as f64];
    let mut scale = f64::INFINITY;
    for a in 0..3 {
        let size = hi[a] - lo[a];
        if size > 0.0 {
            scale = scale.min(ext[a] / size);
        }
    }
    if !scale.is_finite() {
        // Degenerate bounding box: every point coincides and maps to the
        // center voxel.
        scale = 0.0;
    }

    let mut bins: BTreeMap<Coordinate, (Vec<f64>, u64)> = BTreeMap::new();
    for p in points {
        let mut v = [0u32; 3];
        for a in 0..3 {
            let center = 0.5 * (lo[a] + hi[a]);
            let t = (p.position[a] - center) * scale + 0.5 * ext[a];
            let cell = t.floor();
            v[a] = cell.clamp(0.0, ext[a] - 1.0) as u32;
        }
        let coord = Coordinate::new(v[0], v[1], v[2]);
        let entry = bins
            .entry(coord)
            .or_insert_with(|| (vec![0.0; channels], 0));
        for (s, f) in entry.0.iter_mut().zip(&p.features) {
            *s += *f as f64;
        }
        entry.1 += 1;
    }

    for (coord, (sums, count)) in bins {
        let features = sums.iter().map(|s| (*s / count as f64) as f32).collect();
        grid.insert(coord, features)?;
    }
    Ok(grid)
}

/// Quantize a real grid to integer activations: `clamp(round(v / scale))`
/// into the scheme's activation range. The active set is unchanged.
pub fn quantize_grid(
    grid: &SparseGrid<f32>,
    scheme: &QuantScheme,
    scale: f32,
) -> Result<SparseGrid<i16>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidInput(format!(
            "quantization scale must be positive and finite, got {scale}"
        )));
    }
    let (lo, hi) = scheme.activation_range();
    let mut out = SparseGrid::new(grid.extent(), grid.channels())?;
    for (coord, features) in grid.iter() {
        let mut q = Vec::with_capacity(features.len());
        for &v in features {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite feature at site {coord}"
                )));
            }
            let scaled = (v / scale).round();
            q.push(scaled.clamp(lo as f32, hi as f32) as i16);
        }
        out.insert(coord, q)?;
    }
    Ok(out)
}
