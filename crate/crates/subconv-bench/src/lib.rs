//! Shared fixtures for the engine benchmarks: deterministic grids and layers
//! at the sparsity levels the benchmarks sweep.

use subconv_core::compute::LayerConfig;
use subconv_core::grid::{Extent, SparseGrid};
use subconv_core::synth;

/// Synthetic i16 grid at a given sparsity (fraction of empty voxels).
pub fn grid_at_sparsity(extent: Extent, sparsity: f64, channels: usize, seed: u64) -> SparseGrid<i16> {
    let sites = synth::sites_for_sparsity(extent, sparsity);
    synth::uniform_grid_i16(extent, sites, channels, seed).expect("fixture grid")
}

/// Quantized 3x3x3 layer with seeded random weights.
pub fn layer(c_in: usize, c_out: usize, seed: u64) -> LayerConfig<i16> {
    LayerConfig::with_defaults(synth::random_kernel_i8(3, c_in, c_out, seed).expect("kernel"))
        .expect("layer")
}
