//! Index-mask / valid-data encoding of active tiles.
//!
//! Each surviving tile is stored as a set of lanes, one per (y, z) position
//! of the halo-extended cross-section. A lane carries a bit mask over the
//! x range `[origin.x - h, origin.x + interior.x + h)` (h = k/2) plus a
//! compact buffer of the non-zero activations in ascending x. Bits that fall
//! outside the grid are always zero, and the mask popcount always equals the
//! number of buffered activations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{Coordinate, Extent, Scalar, SparseGrid};
use crate::tiler::ActiveTile;

/// Variable-length bit string with cheap ranged popcounts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitLane {
    words: Vec<u64>,
    len: usize,
}

impl BitLane {
    pub fn new(len: usize) -> Self {
        BitLane {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut lane = BitLane::new(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                lane.set(i);
            }
        }
        lane
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for lane of {}", self.len);
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for lane of {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Popcount over the half-open bit range `[lo, hi)`.
    pub fn count_range(&self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi && hi <= self.len, "range {lo}..{hi} out of bounds");
        let mut count = 0usize;
        let (wl, wh) = (lo / 64, hi.div_ceil(64));
        for w in wl..wh {
            let mut word = self.words[w];
            if w == lo / 64 {
                word &= !0u64 << (lo % 64);
            }
            if w == (hi - 1) / 64 && hi % 64 != 0 {
                word &= !0u64 >> (64 - hi % 64);
            }
            count += word.count_ones() as usize;
        }
        count
    }

    /// Positions of set bits in `[lo, hi)`, ascending.
    pub fn ones_in(&self, lo: usize, hi: usize) -> impl Iterator<Item = usize> + '_ {
        (lo..hi).filter(|&i| self.get(i))
    }

    /// '0'/'1' string, lowest index first.
    pub fn bit_string(&self) -> String {
        let mut s = String::with_capacity(self.len);
        for i in 0..self.len {
            let _ = write!(s, "{}", self.get(i) as u8);
        }
        s
    }
}

/// One lane of an encoded tile: mask bits plus the activations those bits
/// point at, flattened with a stride of `channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane<T> {
    pub mask: BitLane,
    pub data: Vec<T>,
}

impl<T: Scalar> Lane<T> {
    /// Number of buffered activations (feature vectors) in this lane.
    pub fn activation_count(&self, channels: usize) -> usize {
        self.data.len() / channels
    }

    /// Feature vector at buffer position `j` (0-based, ascending x).
    pub fn activation(&self, j: usize, channels: usize) -> &[T] {
        &self.data[j * channels..(j + 1) * channels]
    }
}

/// Mask + valid-data encoding of one active tile, halo included.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTile<T: Scalar> {
    /// Minimum corner of the tile interior in grid coordinates.
    pub origin: Coordinate,
    /// Tile size clipped to the grid boundary.
    pub interior: Extent,
    /// Window half-width, `k / 2`.
    pub halo: usize,
    /// Extent of the grid the tile was cut from (bits outside it are zero).
    pub grid_extent: Extent,
    pub channels: usize,
    /// Lanes of the halo-extended cross-section, y-major per z row:
    /// index `lz * (interior.y + 2h) + ly`.
    pub lanes: Vec<Lane<T>>,
    /// Per interior scanline (index `sz * interior.y + sy`), the activity
    /// bits of the interior x positions only.
    pub center_interior_mask: Vec<BitLane>,
}

impl<T: Scalar> EncodedTile<T> {
    /// Kernel size this encoding was built for.
    pub fn k(&self) -> usize {
        2 * self.halo + 1
    }

    /// Lanes per z row of the haloed cross-section.
    pub fn lane_cols(&self) -> usize {
        self.interior.y as usize + 2 * self.halo
    }

    /// Z rows of the haloed cross-section.
    pub fn lane_rows(&self) -> usize {
        self.interior.z as usize + 2 * self.halo
    }

    /// Bits per lane.
    pub fn lane_len(&self) -> usize {
        self.interior.x as usize + 2 * self.halo
    }

    /// Lane holding global (y, z) = (origin.y + sy + dy, origin.z + sz + dz)
    /// for an interior scanline (sy, sz) and column offset (dy, dz) in
    /// `[-h, h]`.
    pub fn lane_for(&self, sy: usize, sz: usize, dy: isize, dz: isize) -> &Lane<T> {
        let h = self.halo as isize;
        let ly = sy as isize + h + dy;
        let lz = sz as isize + h + dz;
        debug_assert!(ly >= 0 && (ly as usize) < self.lane_cols());
        debug_assert!(lz >= 0 && (lz as usize) < self.lane_rows());
        &self.lanes[lz as usize * self.lane_cols() + ly as usize]
    }

    /// Interior activity bits for scanline (sy, sz).
    pub fn interior_line(&self, sy: usize, sz: usize) -> &BitLane {
        &self.center_interior_mask[sz * self.interior.y as usize + sy]
    }
}

/// Encode one active tile against the full grid.
///
/// The halo is read from the grid itself, so neighboring sites that live in
/// other tiles (or in regions whose tiles were removed) contribute exactly
/// what the grid stores: their activations, or nothing.
pub fn encode_tile<T: Scalar>(
    grid: &SparseGrid<T>,
    tile: &ActiveTile,
    k: usize,
) -> Result<EncodedTile<T>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Config(format!("window size must be odd, got {k}")));
    }
    let h = k / 2;
    let extent = grid.extent();
    let channels = grid.channels();
    let interior = tile.interior;
    let origin = tile.origin;
    let lane_len = interior.x as usize + 2 * h;
    let cols = interior.y as usize + 2 * h;
    let rows = interior.z as usize + 2 * h;

    // Clip the lane x range to the grid; bits outside stay zero.
    let x_lo = (origin.x as i64 - h as i64).max(0) as u32;
    let x_hi = (origin.x as i64 + interior.x as i64 + h as i64).min(extent.x as i64) as u32;

    let mut lanes = Vec::with_capacity(rows * cols);
    for lz in 0..rows {
        let gz = origin.z as i64 + lz as i64 - h as i64;
        for ly in 0..cols {
            let gy = origin.y as i64 + ly as i64 - h as i64;
            let mut lane = Lane {
                mask: BitLane::new(lane_len),
                data: Vec::new(),
            };
            let in_grid =
                gz >= 0 && gz < extent.z as i64 && gy >= 0 && gy < extent.y as i64 && x_lo < x_hi;
            if in_grid {
                for (coord, features) in grid.lane_range(gy as u32, gz as u32, x_lo, x_hi) {
                    let bit = (coord.x as i64 - origin.x as i64 + h as i64) as usize;
                    lane.mask.set(bit);
                    lane.data.extend_from_slice(features);
                }
            }
            lanes.push(lane);
        }
    }

    // Interior activity is the center region of the corresponding lane.
    let mut center_interior_mask = Vec::with_capacity(interior.y as usize * interior.z as usize);
    for sz in 0..interior.z as usize {
        for sy in 0..interior.y as usize {
            let lane = &lanes[(sz + h) * cols + (sy + h)];
            let mut line = BitLane::new(interior.x as usize);
            for u in 0..interior.x as usize {
                if lane.mask.get(u + h) {
                    line.set(u);
                }
            }
            center_interior_mask.push(line);
        }
    }

    Ok(EncodedTile {
        origin,
        interior,
        halo: h,
        grid_extent: extent,
        channels,
        lanes,
        center_interior_mask,
    })
}

/// Decode an encoded tile back into (coordinate, features) pairs over its
/// haloed box, validating the encoding invariants along the way.
pub fn decode_tile<T: Scalar>(enc: &EncodedTile<T>) -> Result<BTreeMap<Coordinate, Vec<T>>> {
    let h = enc.halo;
    let lane_len = enc.lane_len();
    let mut out = BTreeMap::new();

    if enc.lanes.len() != enc.lane_rows() * enc.lane_cols() {
        return Err(Error::CorruptEncoding(format!(
            "tile at {} has {} lanes, expected {}",
            enc.origin,
            enc.lanes.len(),
            enc.lane_rows() * enc.lane_cols()
        )));
    }

    for lz in 0..enc.lane_rows() {
        for ly in 0..enc.lane_cols() {
            let lane = &enc.lanes[lz * enc.lane_cols() + ly];
            if lane.mask.len() != lane_len {
                return Err(Error::CorruptEncoding(format!(
                    "lane ({ly},{lz}) of tile at {} has {} mask bits, expected {lane_len}",
                    enc.origin,
                    lane.mask.len()
                )));
            }
            if lane.data.len() % enc.channels != 0 {
                return Err(Error::CorruptEncoding(format!(
                    "lane ({ly},{lz}) of tile at {} holds {} values, not a multiple of {} channels",
                    enc.origin,
                    lane.data.len(),
                    enc.channels
                )));
            }
            let stored = lane.data.len() / enc.channels;
            let popcount = lane.mask.count_ones();
            if popcount != stored {
                return Err(Error::CorruptEncoding(format!(
                    "lane ({ly},{lz}) of tile at {}: mask popcount {popcount} != {stored} stored activations",
                    enc.origin
                )));
            }

            let gy = enc.origin.y as i64 + ly as i64 - h as i64;
            let gz = enc.origin.z as i64 + lz as i64 - h as i64;
            for (j, bit) in lane.mask.ones_in(0, lane_len).enumerate() {
                let gx = enc.origin.x as i64 + bit as i64 - h as i64;
                let in_grid = gx >= 0
                    && gy >= 0
                    && gz >= 0
                    && gx < enc.grid_extent.x as i64
                    && gy < enc.grid_extent.y as i64
                    && gz < enc.grid_extent.z as i64;
                if !in_grid {
                    return Err(Error::CorruptEncoding(format!(
                        "lane ({ly},{lz}) of tile at {} has a set bit outside the grid at x index {bit}",
                        enc.origin
                    )));
                }
                out.insert(
                    Coordinate::new(gx as u32, gy as u32, gz as u32),
                    lane.activation(j, enc.channels).to_vec(),
                );
            }
        }
    }

    // The interior mask must agree with the lanes it was derived from.
    for sz in 0..enc.interior.z as usize {
        for sy in 0..enc.interior.y as usize {
            let line = enc.interior_line(sy, sz);
            if line.len() != enc.interior.x as usize {
                return Err(Error::CorruptEncoding(format!(
                    "interior mask line ({sy},{sz}) of tile at {} has wrong length",
                    enc.origin
                )));
            }
            let lane = enc.lane_for(sy, sz, 0, 0);
            for u in 0..enc.interior.x as usize {
                if line.get(u) != lane.mask.get(u + h) {
                    return Err(Error::CorruptEncoding(format!(
                        "interior mask of tile at {} disagrees with lane bits at ({u},{sy},{sz})",
                        enc.origin
                    )));
                }
            }
        }
    }

    Ok(out)
}
