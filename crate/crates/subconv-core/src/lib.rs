//! Software engine for submanifold sparse 3D convolution with an
//! accelerator-style dataflow.
//!
//! The pipeline mirrors how a streaming hardware design would process a
//! sparse voxel grid:
//!
//! 1. [`tiler`] — partition the grid into fixed-size tiles and drop the
//!    fully-empty ones (tile-based zero removing).
//! 2. [`codec`] — encode each surviving tile as per-lane bit masks plus a
//!    compact buffer of the non-zero activations (index mask + valid data).
//! 3. [`matcher`] — slide a K-cubed window along each tile interior and pair
//!    active centers with their in-window neighbors using cumulative /
//!    in-window popcount state indices.
//! 4. [`compute`] — accumulate matched activation x weight products per
//!    output site with configurable input/output channel parallelism.
//! 5. [`perf`] — turn match traces into cycle counts, effective-GOPS and
//!    modeled runtime figures.
//!
//! [`oracle`] holds deliberately naive reference convolutions used to check
//! the engine, and [`synth`] generates deterministic synthetic inputs.

pub mod codec;
pub mod compute;
pub mod error;
pub mod grid;
pub mod io;
pub mod matcher;
pub mod oracle;
pub mod perf;
pub mod synth;
pub mod tiler;

pub use codec::{BitLane, EncodedTile};
pub use compute::{
    compute_match_group, run_layer, run_layer_traced, run_network, run_network_traced,
    ComputeConfig, LayerConfig, PostOp,
};
pub use error::{Error, Result};
pub use grid::{
    quantize_grid, voxelize, Coordinate, Extent, Kernel, Point, QuantScheme, Scalar, SparseGrid,
};
pub use io::{load_grid_file, load_layer_stack, read_point_cloud_file, save_grid_file, AnyGrid, LayerSpec, LoadedStack};
pub use matcher::{
    fetch_match_group, generate_state_index, judge_state, scan_tile, Match, MatchGroup, StateIndex,
    TileScan,
};
pub use perf::{estimate, CycleReport, HwConfig, MatchTrace, TileTrace};
pub use tiler::{partition, removal_ratio_string, ActiveTile, TileConfig, TileStats};
