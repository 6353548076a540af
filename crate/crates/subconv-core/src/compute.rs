//! MAC core and engine orchestration.
//!
//! [`compute_match_group`] reduces one match group to an output feature
//! vector; [`run_layer`] drives the whole pipeline — partition, encode,
//! scan, compute — and [`run_network`] chains layers. Channel parallelism
//! (`ic/oc_parallelism`) models how the hardware tiles the channel loops; it
//! changes cycle accounting only, never the computed values.

use serde::{Deserialize, Serialize};

use crate::codec::encode_tile;
use crate::error::{Error, Result};
use crate::grid::{Kernel, QuantScheme, Scalar, SparseGrid};
use crate::matcher::{scan_tile, MatchGroup};
use crate::perf::{MatchTrace, TileTrace};
use crate::tiler::{partition, ActiveTile, TileConfig};

/// Value transform applied after accumulation. Acts on the value only; the
/// output site stays active even when the result is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostOp {
    #[default]
    None,
    Relu,
}

/// MAC array configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeConfig {
    /// Input channels processed per pass.
    pub ic_parallelism: usize,
    /// Output channels processed per pass.
    pub oc_parallelism: usize,
    /// Arithmetic right shift applied to integer accumulators; ignored in
    /// real arithmetic.
    pub requant_shift: u32,
    pub post_op: PostOp,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        ComputeConfig {
            ic_parallelism: 16,
            oc_parallelism: 16,
            requant_shift: 0,
            post_op: PostOp::None,
        }
    }
}

impl ComputeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ic_parallelism == 0 || self.oc_parallelism == 0 {
            return Err(Error::Config(
                "channel parallelism must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One convolution layer: kernel, MAC configuration and the quantization
/// scheme backing the integer arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerConfig<T: Scalar> {
    pub kernel: Kernel<T::Weight>,
    pub compute: ComputeConfig,
    pub quant: QuantScheme,
}

impl<T: Scalar> LayerConfig<T> {
    pub fn new(kernel: Kernel<T::Weight>, compute: ComputeConfig, quant: QuantScheme) -> Result<Self> {
        compute.validate()?;
        if T::DTYPE == 1 {
            quant.validate(kernel.k(), kernel.c_in())?;
        }
        Ok(LayerConfig {
            kernel,
            compute,
            quant,
        })
    }

    /// Layer with default MAC configuration and a quantization scheme wide
    /// enough for the kernel shape.
    pub fn with_defaults(kernel: Kernel<T::Weight>) -> Result<Self> {
        let quant = QuantScheme::for_layer(kernel.k(), kernel.c_in());
        LayerConfig::new(kernel, ComputeConfig::default(), quant)
    }

    pub fn k(&self) -> usize {
        self.kernel.k()
    }

    pub fn c_in(&self) -> usize {
        self.kernel.c_in()
    }

    pub fn c_out(&self) -> usize {
        self.kernel.c_out()
    }
}

/// Accumulate one match group into an output feature vector.
///
/// Matches are consumed in their stored (MUX) order and input channels in
/// ascending order, so real-valued results are reproducible bit for bit.
/// Integer accumulators are requantized once at the end: arithmetic right
/// shift by `requant_shift`, clamp to the activation range, then the
/// post-op.
pub fn compute_match_group<T: Scalar>(
    group: &MatchGroup<T>,
    kernel: &Kernel<T::Weight>,
    cfg: &ComputeConfig,
) -> Vec<T> {
    let c_in = kernel.c_in();
    let c_out = kernel.c_out();
    let mut acc: Vec<T::Acc> = vec![T::zero_acc(); c_out];
    for m in &group.matches {
        assert_eq!(
            m.activation.len(),
            c_in,
            "match at center {} carries {} channels, kernel expects {c_in}",
            group.center,
            m.activation.len()
        );
        let [kx, ky, kz] = m.kernel_offset;
        let block = kernel.offset_block(kx, ky, kz);
        for (n, &a) in m.activation.iter().enumerate() {
            let row = &block[n * c_out..(n + 1) * c_out];
            for (slot, &w) in acc.iter_mut().zip(row) {
                *slot = T::mul_acc(*slot, a, w);
            }
        }
    }
    acc.into_iter()
        .map(|v| T::finalize(v, cfg.requant_shift, cfg.post_op))
        .collect()
}

/// Run one layer over an explicit tile list (any order). The output is
/// assembled into canonical site order and the trace rows are sorted by
/// tile origin, so the result is independent of tile order and safe to
/// compare byte for byte.
pub fn process_tiles<T: Scalar>(
    grid: &SparseGrid<T>,
    layer: &LayerConfig<T>,
    tiles: &[ActiveTile],
) -> Result<(SparseGrid<T>, MatchTrace)> {
    if layer.c_in() != grid.channels() {
        return Err(Error::Config(format!(
            "layer expects {} input channels, grid has {}",
            layer.c_in(),
            grid.channels()
        )));
    }
    let mut out = SparseGrid::new(grid.extent(), layer.c_out())?;
    let mut rows = Vec::with_capacity(tiles.len());
    for tile in tiles {
        let enc = encode_tile(grid, tile, layer.k())?;
        let scan = scan_tile(&enc)?;
        rows.push(TileTrace {
            origin: tile.origin,
            srf_scanned: scan.srf_scanned,
            matches: scan.total_matches(),
        });
        for group in &scan.groups {
            let features = compute_match_group(group, &layer.kernel, &layer.compute);
            out.insert(group.center, features)?;
        }
    }
    rows.sort_by_key(|r| r.origin);
    Ok((
        out,
        MatchTrace {
            channels_in: layer.c_in(),
            tiles: rows,
        },
    ))
}

/// Run one layer end to end, returning the output grid and its match trace.
pub fn run_layer_traced<T: Scalar>(
    grid: &SparseGrid<T>,
    layer: &LayerConfig<T>,
    tiles: &TileConfig,
) -> Result<(SparseGrid<T>, MatchTrace)> {
    let (tile_list, _) = partition(grid, tiles)?;
    process_tiles(grid, layer, &tile_list)
}

/// Run one layer end to end.
pub fn run_layer<T: Scalar>(
    grid: &SparseGrid<T>,
    layer: &LayerConfig<T>,
    tiles: &TileConfig,
) -> Result<SparseGrid<T>> {
    run_layer_traced(grid, layer, tiles).map(|(out, _)| out)
}

/// Run a stack of layers, checking channel compatibility up front. An empty
/// stack returns the input unchanged.
pub fn run_network_traced<T: Scalar>(
    grid: &SparseGrid<T>,
    layers: &[LayerConfig<T>],
    tiles: &TileConfig,
) -> Result<(SparseGrid<T>, Vec<MatchTrace>)> {
    let mut channels = grid.channels();
    for (i, layer) in layers.iter().enumerate() {
        if layer.c_in() != channels {
            return Err(Error::Config(format!(
                "layer {i} expects {} input channels but receives {channels}",
                layer.c_in()
            )));
        }
        channels = layer.c_out();
    }
    let mut current = grid.clone();
    let mut traces = Vec::with_capacity(layers.len());
    for layer in layers {
        let (next, trace) = run_layer_traced(&current, layer, tiles)?;
        traces.push(trace);
        current = next;
    }
    Ok((current, traces))
}

/// Run a stack of layers.
pub fn run_network<T: Scalar>(
    grid: &SparseGrid<T>,
    layers: &[LayerConfig<T>],
    tiles: &TileConfig,
) -> Result<SparseGrid<T>> {
    run_network_traced(grid, layers, tiles).map(|(out, _)| out)
}
