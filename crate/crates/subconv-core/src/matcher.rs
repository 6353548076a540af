//! Activation matching over encoded tiles.
//!
//! A k^3 window (the sparse receptive field, SRF) slides along x over every
//! interior position of a tile. The window decomposes into k^2 columns, one
//! per lane offset (dy, dz) in `[-h, h]^2`, each k bits long. Matching runs
//! in four steps per scanline, mirroring a pipelined hardware unit:
//!
//! 1. read the lane masks,
//! 2. judge state — a window produces work only if its center bit is set,
//! 3. generate state indices — per column, `cumulative` counts the set bits
//!    from the lane start through the window's leading edge and `window`
//!    counts the set bits inside the window (zero when the center is
//!    inactive); the window's activations then occupy the buffer fragment
//!    `(cumulative - window, cumulative]` in 1-indexed terms,
//! 4. fetch — read those fragments and pair each activation with its kernel
//!    offset.
//!
//! Matches within a group order by column raster order (kz outer, ky inner),
//! then ascending x: the fixed order a FIFO-per-column plus output
//! multiplexer arrangement would produce.

use crate::codec::{BitLane, EncodedTile};
use crate::error::{Error, Result};
use crate::grid::{Coordinate, Scalar};

/// Per-column match bookkeeping at one scan position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndex {
    /// Set bits from the lane start through the window's leading edge.
    pub cumulative: u32,
    /// Set bits inside the window; zero when the window's center is inactive.
    pub window: u32,
}

impl StateIndex {
    /// Buffer positions of the window's activations, 0-based half-open
    /// (the 1-indexed fragment `(cumulative - window, cumulative]`).
    pub fn fragment(&self) -> std::ops::Range<usize> {
        (self.cumulative - self.window) as usize..self.cumulative as usize
    }
}

/// One matched activation for a center site.
#[derive(Debug, Clone, PartialEq)]
pub struct Match<T> {
    /// Feature vector of the matched (neighbor) site.
    pub activation: Vec<T>,
    /// Kernel offset (kx, ky, kz) in `[0, k)^3`; kx is the bit position
    /// within the window, (ky, kz) the column offset shifted by +h.
    pub kernel_offset: [usize; 3],
    /// Column index `kz * k + ky`.
    pub column: usize,
    /// 0-based position of the activation in its lane buffer.
    pub buffer_index: usize,
}

/// All matches for one active center, in MUX order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchGroup<T> {
    pub center: Coordinate,
    pub matches: Vec<Match<T>>,
}

/// Result of scanning one tile: a group per active interior site plus the
/// number of window positions examined.
#[derive(Debug, Clone, PartialEq)]
pub struct TileScan<T> {
    pub groups: Vec<MatchGroup<T>>,
    /// Interior positions scanned (active or not).
    pub srf_scanned: u64,
}

impl<T> TileScan<T> {
    pub fn total_matches(&self) -> u64 {
        self.groups.iter().map(|g| g.matches.len() as u64).sum()
    }
}

/// Interior (sy, sz, u) offsets of a center coordinate within a tile.
/// Panics if the center lies outside the tile interior — halo sites belong
/// to their own tiles and must never be judged here.
fn interior_offsets<T: Scalar>(enc: &EncodedTile<T>, center: Coordinate) -> (usize, usize, usize) {
    let inside = center.x >= enc.origin.x
        && center.x < enc.origin.x + enc.interior.x
        && center.y >= enc.origin.y
        && center.y < enc.origin.y + enc.interior.y
        && center.z >= enc.origin.z
        && center.z < enc.origin.z + enc.interior.z;
    assert!(
        inside,
        "center {center} outside the interior of tile at {} ({})",
        enc.origin, enc.interior
    );
    (
        (center.y - enc.origin.y) as usize,
        (center.z - enc.origin.z) as usize,
        (center.x - enc.origin.x) as usize,
    )
}

/// Is the window centered on `center` active? Submanifold convolution
/// computes only where the center site itself is active.
pub fn judge_state<T: Scalar>(enc: &EncodedTile<T>, center: Coordinate) -> bool {
    let (sy, sz, u) = interior_offsets(enc, center);
    enc.interior_line(sy, sz).get(u)
}

/// Compute the per-position state indices for one lane.
///
/// `mask` is the lane's bit string (interior plus halo), `k` the window
/// size, and `active[u]` says whether the SRF centered at interior position
/// `u` is active. `cumulative` is seeded from the first window's popcount
/// and advanced by the bit entering at each step; `window` is the in-window
/// popcount, forced to zero at inactive positions.
pub fn generate_state_index(mask: &BitLane, k: usize, active: &[bool]) -> Vec<StateIndex> {
    assert!(k % 2 == 1, "window size must be odd, got {k}");
    assert_eq!(
        mask.len(),
        active.len() + k - 1,
        "lane of {} bits cannot host {} scan positions with a {k}-wide window",
        mask.len(),
        active.len()
    );
    let mut out = Vec::with_capacity(active.len());
    let mut cumulative = 0u32;
    for (u, &is_active) in active.iter().enumerate() {
        if u == 0 {
            cumulative = mask.count_range(0, k) as u32;
        } else {
            cumulative += mask.get(u + k - 1) as u32;
        }
        let window = if is_active {
            mask.count_range(u, u + k) as u32
        } else {
            0
        };
        out.push(StateIndex { cumulative, window });
    }
    out
}

/// Fetch the match group for an active center given one state index per
/// column (k^2 entries in column raster order).
pub fn fetch_match_group<T: Scalar>(
    enc: &EncodedTile<T>,
    center: Coordinate,
    states: &[StateIndex],
) -> Result<MatchGroup<T>> {
    let k = enc.k();
    let h = enc.halo as isize;
    assert_eq!(states.len(), k * k, "need one state index per column");
    assert!(
        judge_state(enc, center),
        "fetch requires an active center, {center} is not"
    );
    let (sy, sz, u) = interior_offsets(enc, center);

    let mut matches = Vec::new();
    for (column, state) in states.iter().enumerate() {
        let dz = (column / k) as isize - h;
        let dy = (column % k) as isize - h;
        let lane = enc.lane_for(sy, sz, dy, dz);
        let stored = lane.activation_count(enc.channels);

        if state.window > state.cumulative {
            return Err(Error::CorruptEncoding(format!(
                "column {column} at center {center}: window count {} exceeds cumulative {}",
                state.window, state.cumulative
            )));
        }
        if state.cumulative as usize > stored {
            return Err(Error::CorruptEncoding(format!(
                "column {column} at center {center}: fragment end {} past lane buffer of {stored}",
                state.cumulative
            )));
        }
        let in_window: Vec<usize> = lane.mask.ones_in(u, u + k).collect();
        if in_window.len() != state.window as usize {
            return Err(Error::CorruptEncoding(format!(
                "column {column} at center {center}: {} set bits in window but state says {}",
                in_window.len(),
                state.window
            )));
        }
        let fragment = state.fragment();
        for (j, bit) in in_window.into_iter().enumerate() {
            let buffer_index = fragment.start + j;
            matches.push(Match {
                activation: lane.activation(buffer_index, enc.channels).to_vec(),
                kernel_offset: [bit - u, (dy + h) as usize, (dz + h) as usize],
                column,
                buffer_index,
            });
        }
    }
    Ok(MatchGroup { center, matches })
}

/// Scan every interior position of a tile and emit one match group per
/// active center, in scan-raster order (ascending z, then y, then x).
pub fn scan_tile<T: Scalar>(enc: &EncodedTile<T>) -> Result<TileScan<T>> {
    let k = enc.k();
    let h = enc.halo as isize;
    let (ix, iy, iz) = (
        enc.interior.x as usize,
        enc.interior.y as usize,
        enc.interior.z as usize,
    );
    let mut groups = Vec::new();
    let mut srf_scanned = 0u64;

    for sz in 0..iz {
        for sy in 0..iy {
            srf_scanned += ix as u64;
            let line = enc.interior_line(sy, sz);
            let active: Vec<bool> = (0..ix).map(|u| line.get(u)).collect();
            if !active.iter().any(|&a| a) {
                continue;
            }

            // State sequences per column; counters reset each scanline.
            let mut per_column = Vec::with_capacity(k * k);
            for dz in -h..=h {
                for dy in -h..=h {
                    let lane = enc.lane_for(sy, sz, dy, dz);
                    per_column.push(generate_state_index(&lane.mask, k, &active));
                }
            }

            let mut states = vec![StateIndex { cumulative: 0, window: 0 }; k * k];
            for (u, &is_active) in active.iter().enumerate() {
                if !is_active {
                    continue;
                }
                for (c, seq) in per_column.iter().enumerate() {
                    states[c] = seq[u];
                }
                let center = Coordinate::new(
                    enc.origin.x + u as u32,
                    enc.origin.y + sy as u32,
                    enc.origin.z + sz as u32,
                );
                groups.push(fetch_match_group(enc, center, &states)?);
            }
        }
    }
    Ok(TileScan { groups, srf_scanned })
}
