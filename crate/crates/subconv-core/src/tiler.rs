//! Tile-based zero removing: carve the grid into fixed-size tiles and keep
//! only the tiles that contain at least one active site.
//!
//! Removal is lossless for submanifold convolution — a tile with no active
//! sites can produce no outputs and contributes nothing to its neighbors'
//! windows beyond zeros — so dropping empty tiles never changes the result.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coordinate, Extent, Scalar, SparseGrid};

/// Tile dimensions in voxels. Tiles need not divide the grid extent; edge
/// tiles are clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig::cube(8)
    }
}

impl TileConfig {
    pub fn new(x: u32, y: u32, z: u32) -> Self {
        TileConfig { x, y, z }
    }

    pub fn cube(edge: u32) -> Self {
        TileConfig::new(edge, edge, edge)
    }

    /// Tile sized to cover the whole grid in one piece (disables removal).
    pub fn whole_grid(extent: Extent) -> Self {
        TileConfig::new(extent.x, extent.y, extent.z)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x == 0 || self.y == 0 || self.z == 0 {
            return Err(Error::Config(format!(
                "tile dimensions must be positive, got {}x{}x{}",
                self.x, self.y, self.z
            )));
        }
        Ok(())
    }
}

/// One tile that survived zero removing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveTile {
    /// Minimum corner of the tile in grid coordinates.
    pub origin: Coordinate,
    /// Tile size clipped to the grid boundary.
    pub interior: Extent,
    /// Active sites inside the tile, in canonical (z, y, x) order.
    pub sites: Vec<Coordinate>,
}

/// Partition outcome counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileStats {
    pub active_tiles: u64,
    /// Total tile count over the full extent:
    /// product over axes of `ceil(extent / tile)`.
    pub all_tiles: u64,
}

impl TileStats {
    /// Fraction of tiles removed, `(all - active) / all`.
    pub fn removing_ratio(&self) -> f64 {
        (self.all_tiles - self.active_tiles) as f64 / self.all_tiles as f64
    }

    /// Removing ratio as a percentage string, truncated to two decimals.
    pub fn ratio_string(&self) -> Result<String> {
        removal_ratio_string(self.active_tiles, self.all_tiles)
    }
}

fn ceil_div(a: u32, b: u32) -> u64 {
    (a as u64 + b as u64 - 1) / b as u64
}

/// Assign every active site to its tile and drop the empty tiles.
///
/// Runs in time proportional to the number of active sites, never the grid
/// volume. Tiles return in ascending (z, y, x) origin order; together they
/// cover every active site exactly once.
pub fn partition<T: Scalar>(
    grid: &SparseGrid<T>,
    config: &TileConfig,
) -> Result<(Vec<ActiveTile>, TileStats)> {
    config.validate()?;
    let extent = grid.extent();
    let all_tiles = ceil_div(extent.x, config.x)
        .checked_mul(ceil_div(extent.y, config.y))
        .and_then(|v| v.checked_mul(ceil_div(extent.z, config.z)))
        .ok_or_else(|| Error::Config("tile grid too large to count".into()))?;

    let mut by_origin: BTreeMap<Coordinate, Vec<Coordinate>> = BTreeMap::new();
    for coord in grid.coords() {
        let origin = Coordinate::new(
            coord.x / config.x * config.x,
            coord.y / config.y * config.y,
            coord.z / config.z * config.z,
        );
        // Sites arrive in canonical order, so each per-tile list stays sorted.
        by_origin.entry(origin).or_default().push(coord);
    }

    let tiles: Vec<ActiveTile> = by_origin
        .into_iter()
        .map(|(origin, sites)| ActiveTile {
            origin,
            interior: Extent::new(
                config.x.min(extent.x - origin.x),
                config.y.min(extent.y - origin.y),
                config.z.min(extent.z - origin.z),
            ),
            sites,
        })
        .collect();

    let stats = TileStats {
        active_tiles: tiles.len() as u64,
        all_tiles,
    };
    Ok((tiles, stats))
}

/// Format the removing ratio `(all - active) / all` as a percentage with two
/// decimals. The value is truncated, not rounded: 99.438...% prints as
/// "99.43%".
pub fn removal_ratio_string(active_tiles: u64, all_tiles: u64) -> Result<String> {
    if all_tiles == 0 {
        return Err(Error::InvalidInput(
            "removing ratio undefined for zero tiles".into(),
        ));
    }
    if active_tiles > all_tiles {
        return Err(Error::InvalidInput(format!(
            "active tile count {active_tiles} exceeds total {all_tiles}"
        )));
    }
    let removed = (all_tiles - active_tiles) as u128;
    // Percentage scaled by 100 so integer division performs the truncation.
    let scaled = removed * 10_000 / all_tiles as u128;
    Ok(format!("{}.{:02}%", scaled / 100, scaled % 100))
}
