//! Cycle accounting and throughput model.
//!
//! The model is deliberately ideal: the matcher and the MAC array run fully
//! overlapped with no FIFO stalls and no memory backpressure, so every
//! figure here is an estimate derived from match counts — never a
//! measurement. Published hardware figures ship in [`reference`] purely as
//! labeled comparison baselines.

use serde::{Deserialize, Serialize};

use crate::compute::LayerConfig;
use crate::error::{Error, Result};
use crate::grid::{Coordinate, Scalar};

/// Assumption string attached to every emitted report.
pub const MODEL_ASSUMPTIONS: &str = "ideal-pipeline model: no FIFO stalls, matcher and MAC array \
     fully overlapped, no memory backpressure; all figures are model estimates, not measurements";

/// Modeled hardware parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwConfig {
    pub ic_parallelism: usize,
    pub oc_parallelism: usize,
    pub frequency_mhz: f64,
    /// Depth of the four-step matching pipeline (read masks, judge,
    /// generate state index, fetch).
    pub sdmu_pipeline_depth: u64,
}

impl Default for HwConfig {
    fn default() -> Self {
        HwConfig {
            ic_parallelism: 16,
            oc_parallelism: 16,
            frequency_mhz: 270.0,
            sdmu_pipeline_depth: 4,
        }
    }
}

impl HwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ic_parallelism == 0 || self.oc_parallelism == 0 {
            return Err(Error::Config("channel parallelism must be positive".into()));
        }
        if !(self.frequency_mhz.is_finite() && self.frequency_mhz > 0.0) {
            return Err(Error::Config(format!(
                "frequency must be positive, got {} MHz",
                self.frequency_mhz
            )));
        }
        Ok(())
    }
}

/// Per-tile match counters recorded by a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileTrace {
    pub origin: Coordinate,
    /// Interior window positions examined.
    pub srf_scanned: u64,
    /// Matches produced across all groups of the tile.
    pub matches: u64,
}

/// Match trace of one layer run: per-tile counters in canonical tile order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchTrace {
    /// Input channel count of the layer that produced the trace.
    pub channels_in: usize,
    pub tiles: Vec<TileTrace>,
}

impl MatchTrace {
    pub fn total_matches(&self) -> u64 {
        self.tiles.iter().map(|t| t.matches).sum()
    }

    pub fn srf_scanned(&self) -> u64 {
        self.tiles.iter().map(|t| t.srf_scanned).sum()
    }
}

/// Cycle and throughput estimate for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// Interior window positions scanned across active tiles.
    pub srf_scanned: u64,
    pub total_matches: u64,
    /// MAC array cycles: one pass per match per channel tile,
    /// `total_matches * ceil(c_in / ic_par) * ceil(c_out / oc_par)`.
    pub cc_cycles: u64,
    /// Matcher cycles: every scanned position plus the pipeline depth.
    pub sdmu_cycles: u64,
    /// `max(sdmu_cycles, cc_cycles)` plus the pipeline drain.
    pub total_cycles: u64,
    /// Multiply + accumulate over matched (non-zero) work only:
    /// `2 * total_matches * c_in * c_out`.
    pub effective_ops: u64,
    /// Effective throughput at the modeled frequency, in GOPS.
    pub gops: f64,
    /// Modeled runtime in microseconds.
    pub runtime_us: f64,
}

/// Estimate cycles and throughput for one layer from its match trace.
pub fn estimate<T: Scalar>(
    trace: &MatchTrace,
    layer: &LayerConfig<T>,
    hw: &HwConfig,
) -> Result<CycleReport> {
    hw.validate()?;
    if trace.channels_in != layer.c_in() {
        return Err(Error::Config(format!(
            "trace recorded {} input channels, layer expects {}",
            trace.channels_in,
            layer.c_in()
        )));
    }
    let total_matches = trace.total_matches();
    let srf_scanned = trace.srf_scanned();
    let c_in = layer.c_in() as u64;
    let c_out = layer.c_out() as u64;
    let ic_passes = c_in.div_ceil(hw.ic_parallelism as u64);
    let oc_passes = c_out.div_ceil(hw.oc_parallelism as u64);

    let cc_cycles = total_matches * ic_passes * oc_passes;
    let sdmu_cycles = srf_scanned + hw.sdmu_pipeline_depth;
    let total_cycles = sdmu_cycles.max(cc_cycles) + hw.sdmu_pipeline_depth;
    let effective_ops = 2 * total_matches * c_in * c_out;
    let frequency_hz = hw.frequency_mhz * 1e6;
    let gops = effective_ops as f64 / (total_cycles as f64 / frequency_hz) / 1e9;
    let runtime_us = total_cycles as f64 / hw.frequency_mhz;

    Ok(CycleReport {
        srf_scanned,
        total_matches,
        cc_cycles,
        sdmu_cycles,
        total_cycles,
        effective_ops,
        gops,
        runtime_us,
    })
}

/// One row of a throughput comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub name: String,
    pub baseline_gops: f64,
    pub model_gops: f64,
    /// `model_gops / baseline_gops`.
    pub speedup: f64,
}

/// Compare a modeled report against named throughput baselines.
pub fn effective_gops_comparison(
    report: &CycleReport,
    baselines: &[(&str, f64)],
) -> Vec<BaselineComparison> {
    baselines
        .iter()
        .map(|(name, gops)| BaselineComparison {
            name: (*name).to_string(),
            baseline_gops: *gops,
            model_gops: report.gops,
            speedup: report.gops / gops,
        })
        .collect()
}

/// Published hardware figures used only as labeled reference baselines.
///
/// These numbers were reported for physical implementations (an FPGA
/// accelerator of this dataflow and a GPU baseline). This crate never
/// measures or reproduces them; they exist so modeled throughput can be put
/// next to the published numbers.
pub mod reference {
    /// Reported effective throughput of the FPGA accelerator, GOPS.
    pub const ACCELERATOR_GOPS: f64 = 17.73;
    /// Reported power of the FPGA accelerator, watts.
    pub const ACCELERATOR_POWER_W: f64 = 3.45;
    /// Reported efficiency of the FPGA accelerator, GOPS per watt.
    pub const ACCELERATOR_GOPS_PER_W: f64 = 5.14;
    /// Clock the FPGA accelerator was reported at, MHz.
    pub const ACCELERATOR_FREQUENCY_MHZ: f64 = 270.0;
    /// Reported throughput of the Tesla P100 GPU baseline, GOPS.
    pub const GPU_BASELINE_GOPS: f64 = 9.40;
    /// Reported power of the GPU baseline, watts.
    pub const GPU_BASELINE_POWER_W: f64 = 90.56;
    /// Reported efficiency of the GPU baseline, GOPS per watt.
    pub const GPU_BASELINE_GOPS_PER_W: f64 = 0.10;
}

/// Per-layer entry of a network report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub c_in: usize,
    pub c_out: usize,
    #[serde(flatten)]
    pub cycles: CycleReport,
}

/// JSON-serializable report for a network run. Layer figures are reported
/// per layer and labeled as model output via `assumptions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub assumptions: String,
    pub frequency_mhz: f64,
    pub ic_parallelism: usize,
    pub oc_parallelism: usize,
    pub layers: Vec<LayerReport>,
    /// Cycle and op totals across layers, with aggregate GOPS at the same
    /// frequency.
    pub total_cycles: u64,
    pub total_effective_ops: u64,
    pub total_runtime_us: f64,
    pub aggregate_gops: f64,
}

/// Assemble the network report from per-layer traces.
pub fn network_report<T: Scalar>(
    traces: &[MatchTrace],
    layers: &[LayerConfig<T>],
    hw: &HwConfig,
) -> Result<NetworkReport> {
    if traces.len() != layers.len() {
        return Err(Error::Config(format!(
            "{} traces for {} layers",
            traces.len(),
            layers.len()
        )));
    }
    let mut reports = Vec::with_capacity(traces.len());
    for (i, (trace, layer)) in traces.iter().zip(layers).enumerate() {
        reports.push(LayerReport {
            layer: i,
            c_in: layer.c_in(),
            c_out: layer.c_out(),
            cycles: estimate(trace, layer, hw)?,
        });
    }
    let total_cycles: u64 = reports.iter().map(|r| r.cycles.total_cycles).sum();
    let total_effective_ops: u64 = reports.iter().map(|r| r.cycles.effective_ops).sum();
    let total_runtime_us: f64 = reports.iter().map(|r| r.cycles.runtime_us).sum();
    let aggregate_gops = if total_cycles == 0 {
        0.0
    } else {
        total_effective_ops as f64 / (total_cycles as f64 / (hw.frequency_mhz * 1e6)) / 1e9
    };
    Ok(NetworkReport {
        assumptions: MODEL_ASSUMPTIONS.to_string(),
        frequency_mhz: hw.frequency_mhz,
        ic_parallelism: hw.ic_parallelism,
        oc_parallelism: hw.oc_parallelism,
        layers: reports,
        total_cycles,
        total_effective_ops,
        total_runtime_us,
        aggregate_gops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::{run_layer_traced, LayerConfig};
    use crate::grid::{Extent, Kernel};
    use crate::oracle::count_neighbor_pairs;
    use crate::synth;
    use crate::tiler::TileConfig;

    fn trace_of(matches: u64, srf: u64, c_in: usize) -> MatchTrace {
        MatchTrace {
            channels_in: c_in,
            tiles: vec![TileTrace {
                origin: Coordinate::new(0, 0, 0),
                srf_scanned: srf,
                matches,
            }],
        }
    }

    fn layer_16_16() -> LayerConfig<i16> {
        LayerConfig::<i16>::with_defaults(Kernel::<i8>::zeros(3, 16, 16).unwrap()).unwrap()
    }

    #[test]
    fn single_match_single_pass() {
        let report = estimate(&trace_of(1, 1, 16), &layer_16_16(), &HwConfig::default()).unwrap();
        assert_eq!(report.cc_cycles, 1, "16x16 channels fit one pass");
        assert_eq!(report.effective_ops, 2 * 16 * 16);
        assert_eq!(report.sdmu_cycles, 1 + 4);
        assert_eq!(report.total_cycles, 5 + 4);
    }

    #[test]
    fn empty_trace_yields_zero_throughput() {
        let trace = MatchTrace {
            channels_in: 16,
            tiles: vec![],
        };
        let report = estimate(&trace, &layer_16_16(), &HwConfig::default()).unwrap();
        assert_eq!(report.total_matches, 0);
        assert_eq!(report.effective_ops, 0);
        assert_eq!(report.gops, 0.0);
        // Pipeline fill + drain still costs 2 * depth cycles.
        assert_eq!(report.total_cycles, 8);
        assert!((report.runtime_us - 8.0 / 270.0).abs() < 1e-12);
    }

    #[test]
    fn cc_cycles_double_when_c_out_doubles() {
        let hw = HwConfig::default();
        let narrow =
            LayerConfig::<i16>::with_defaults(Kernel::<i8>::zeros(3, 16, 16).unwrap()).unwrap();
        let wide =
            LayerConfig::<i16>::with_defaults(Kernel::<i8>::zeros(3, 16, 32).unwrap()).unwrap();
        let trace = trace_of(1000, 4096, 16);
        let a = estimate(&trace, &narrow, &hw).unwrap();
        let b = estimate(&trace, &wide, &hw).unwrap();
        assert_eq!(b.cc_cycles, 2 * a.cc_cycles);
        assert_eq!(b.effective_ops, 2 * a.effective_ops);
    }

    #[test]
    fn partial_channel_tiles_round_up() {
        let layer =
            LayerConfig::<i16>::with_defaults(Kernel::<i8>::zeros(3, 17, 16).unwrap()).unwrap();
        let report = estimate(&trace_of(10, 10, 17), &layer, &HwConfig::default()).unwrap();
        assert_eq!(report.cc_cycles, 10 * 2, "17 input channels need 2 passes");
    }

    #[test]
    fn trace_channel_mismatch_rejected() {
        let err = estimate(&trace_of(1, 1, 8), &layer_16_16(), &HwConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn trace_matches_equal_independent_recount() {
        for seed in 0..5u64 {
            let grid = synth::uniform_grid_i16(Extent::cube(18), 150, 2, seed).unwrap();
            let kernel = synth::random_kernel_i8(3, 2, 2, seed + 9).unwrap();
            let layer = LayerConfig::<i16>::with_defaults(kernel).unwrap();
            let (_, trace) = run_layer_traced(&grid, &layer, &TileConfig::cube(6)).unwrap();
            assert_eq!(
                trace.total_matches(),
                count_neighbor_pairs(&grid, 3),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn more_sites_never_fewer_matches() {
        let sparse = synth::uniform_grid_i16(Extent::cube(16), 40, 1, 77).unwrap();
        let mut denser = sparse.clone();
        for (c, f) in synth::uniform_grid_i16(Extent::cube(16), 80, 1, 78)
            .unwrap()
            .iter()
        {
            denser.insert(c, f.to_vec()).unwrap();
        }
        assert!(count_neighbor_pairs(&denser, 3) >= count_neighbor_pairs(&sparse, 3));
    }

    #[test]
    fn speedup_against_published_gpu_baseline() {
        let mut report =
            estimate(&trace_of(1, 1, 16), &layer_16_16(), &HwConfig::default()).unwrap();
        report.gops = reference::ACCELERATOR_GOPS; // published figure as model stand-in
        let rows = effective_gops_comparison(&report, &[("gpu", reference::GPU_BASELINE_GOPS)]);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].speedup - 1.886).abs() < 5e-4, "17.73 / 9.40");
    }

    #[test]
    fn published_reference_values() {
        assert_eq!(reference::ACCELERATOR_GOPS, 17.73);
        assert_eq!(reference::ACCELERATOR_GOPS_PER_W, 5.14);
        assert_eq!(reference::ACCELERATOR_POWER_W, 3.45);
        assert_eq!(reference::ACCELERATOR_FREQUENCY_MHZ, 270.0);
        assert_eq!(reference::GPU_BASELINE_GOPS, 9.40);
        assert_eq!(reference::GPU_BASELINE_POWER_W, 90.56);
        assert_eq!(reference::GPU_BASELINE_GOPS_PER_W, 0.10);
    }

    #[test]
    fn network_report_serializes_with_assumptions() {
        let grid = synth::uniform_grid_i16(Extent::cube(12), 50, 2, 55).unwrap();
        let kernel = synth::random_kernel_i8(3, 2, 2, 56).unwrap();
        let layer = LayerConfig::<i16>::with_defaults(kernel).unwrap();
        let (_, trace) = run_layer_traced(&grid, &layer, &TileConfig::cube(4)).unwrap();
        let report =
            network_report(&[trace], std::slice::from_ref(&layer), &HwConfig::default()).unwrap();
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("model estimates"));
        assert!(json.contains("total_matches"));
        assert!(json.contains("\"frequency_mhz\": 270.0"));
        let parsed: NetworkReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn degenerate_hw_config_rejected() {
        let mut hw = HwConfig::default();
        hw.frequency_mhz = 0.0;
        assert!(estimate(&trace_of(1, 1, 16), &layer_16_16(), &hw).is_err());
        let mut hw = HwConfig::default();
        hw.ic_parallelism = 0;
        assert!(estimate(&trace_of(1, 1, 16), &layer_16_16(), &hw).is_err());
    }
}
