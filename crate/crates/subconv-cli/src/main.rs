//! `subconv` — command-line front end for the sparse convolution engine.
//!
//! Subcommands: `voxelize` (point cloud → binary grid), `tilestats`
//! (occupancy CSV), `run` (layer stack execution with optional cycle
//! report), `check` (differential test against the reference convolution),
//! and `bench` (deterministic sparsity/tile sweeps as CSV).
//!
//! Exit codes: 0 success, 1 check failure, 2 input/format/usage error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use subconv_core::codec::encode_tile;
use subconv_core::compute::{ComputeConfig, LayerConfig, PostOp};
use subconv_core::grid::{quantize_grid, voxelize, Extent, QuantScheme, Scalar, SparseGrid};
use subconv_core::io::{
    self, load_grid_file, load_layer_stack, read_layer_stack, read_point_cloud_file, save_grid_file,
    AnyGrid, LayerMode, LayerSpec, LoadedStack,
};
use subconv_core::matcher::scan_tile;
use subconv_core::oracle::{subconv_reference_f32, subconv_reference_int};
use subconv_core::perf::{estimate, network_report, HwConfig, MatchTrace};
use subconv_core::synth;
use subconv_core::tiler::{partition, TileConfig};
use subconv_core::{run_network_traced, Error, Result};

#[derive(Parser)]
#[command(name = "subconv", version, about = "Sparse submanifold convolution engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a text point cloud (or a synthetic one) into a binary grid.
    Voxelize(VoxelizeArgs),
    /// Print tile-occupancy statistics for a grid as CSV.
    Tilestats(TilestatsArgs),
    /// Run a layer stack over a grid.
    Run(RunArgs),
    /// Differential-check the engine against the reference convolution.
    Check(CheckArgs),
    /// Sweep sparsity and tile size, printing modeled figures as CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    /// Shell of points on a unit sphere.
    Sphere,
    /// Gaussian-ish blobs around random centers.
    Clusters,
}

fn parse_extent(s: &str) -> std::result::Result<Extent, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let parse = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| format!("bad extent component {t:?}"))
            .and_then(|v| {
                if v == 0 {
                    Err("extent components must be positive".into())
                } else {
                    Ok(v)
                }
            })
    };
    match parts.as_slice() {
        [edge] => Ok(Extent::cube(parse(edge)?)),
        [x, y, z] => Ok(Extent::new(parse(x)?, parse(y)?, parse(z)?)),
        _ => Err("extent is one edge (\"192\") or three (\"64,32,16\")".into()),
    }
}

fn parse_tile(s: &str) -> std::result::Result<TileConfig, String> {
    let e = parse_extent(s)?;
    Ok(TileConfig {
        x: e.x,
        y: e.y,
        z: e.z,
    })
}

#[derive(Parser)]
struct VoxelizeArgs {
    /// Input text point cloud (`x y z f1 …`, `#` comments). Omit with --synth.
    input: Option<PathBuf>,
    /// Generate the cloud instead of reading one.
    #[arg(long, value_enum, conflicts_with = "input")]
    synth: Option<SynthKind>,
    /// Points in a synthetic cloud.
    #[arg(long, default_value_t = 10_000)]
    points: usize,
    /// Blob count for --synth clusters.
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature channels for synthetic clouds and empty inputs (text input
    /// carries its own channel count).
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Grid extent: one edge ("192") or three ("64,32,16").
    #[arg(long, value_parser = parse_extent)]
    extent: Extent,
    /// Output grid file.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Parser)]
struct TilestatsArgs {
    grid: PathBuf,
    /// Cubic tile edge lengths to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "4,8,12,16")]
    tile_sizes: Vec<u32>,
}

#[derive(Parser)]
struct RunArgs {
    grid: PathBuf,
    /// Layer-stack config (JSON); weight paths resolve next to it.
    #[arg(long)]
    layers: PathBuf,
    /// Tile size: one edge ("8") or three ("8,8,4").
    #[arg(long, value_parser = parse_tile, default_value = "8")]
    tile: TileConfig,
    /// Output grid file.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the modeled cycle report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dump the first layer's per-tile match groups as JSON.
    #[arg(long)]
    dump_matches: Option<PathBuf>,
    /// Dump the first layer's per-tile lane masks as JSON.
    #[arg(long)]
    dump_encoding: Option<PathBuf>,
    /// Quantize an f32 input grid with this scale to run an int stack.
    #[arg(long)]
    quantize_scale: Option<f32>,
}

#[derive(Parser)]
struct CheckArgs {
    grid: PathBuf,
    /// Layer-stack config; layers without weights_path get seeded random
    /// kernels, so a shapes-only config checks many kernels cheaply.
    #[arg(long)]
    layers: PathBuf,
    #[arg(long, value_parser = parse_tile, default_value = "8")]
    tile: TileConfig,
    /// Seeded trials to run.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First trial seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compare the final output against this stored grid.
    #[arg(long)]
    expected: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Int,
    F32,
}

#[derive(Parser)]
struct BenchArgs {
    #[arg(long, value_parser = parse_extent, default_value = "192")]
    extent: Extent,
    /// Sparsity percentages (fraction of empty voxels) to sweep.
    #[arg(long, value_delimiter = ',', default_value = "90,99,99.9")]
    sparsity: Vec<f64>,
    /// Cubic tile edges to sweep.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    tile: Vec<u32>,
    /// Input and output channels of the synthetic layer.
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Int)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Voxelize(a) => cmd_voxelize(a),
        Command::Tilestats(a) => cmd_tilestats(a),
        Command::Run(a) => cmd_run(a),
        Command::Check(a) => cmd_check(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

// ---------------------------------------------------------------------------
// voxelize
// ---------------------------------------------------------------------------

fn cmd_voxelize(a: VoxelizeArgs) -> Result<u8> {
    let points = match (&a.input, a.synth) {
        (Some(path), None) => read_point_cloud_file(path)?,
        (None, Some(SynthKind::Sphere)) => synth::sphere_cloud(a.points, a.channels, a.seed),
        (None, Some(SynthKind::Clusters)) => {
            synth::cluster_cloud(a.points, a.clusters, a.channels, a.seed)
        }
        (None, None) => {
            return Err(Error::Config(
                "give an input file or --synth sphere|clusters".into(),
            ));
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let channels = points.first().map_or(a.channels, |p| p.features.len());
    let grid = voxelize(&points, a.extent, channels)?;
    save_grid_file(&grid, &a.output)?;
    println!(
        "{} points -> {} active sites in {} ({} channels)",
        points.len(),
        grid.len(),
        a.extent,
        channels
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// tilestats
// ---------------------------------------------------------------------------

fn cmd_tilestats(a: TilestatsArgs) -> Result<u8> {
    let any = load_grid_file(&a.grid)?;
    println!("tile_size,active_tiles,all_tiles,removing_ratio");
    for &edge in &a.tile_sizes {
        let (active, all, ratio) = match &any {
            AnyGrid::F32(g) => stats_row(g, edge)?,
            AnyGrid::I16(g) => stats_row(g, edge)?,
        };
        println!("{edge},{active},{all},{ratio}");
    }
    Ok(0)
}

fn stats_row<T: Scalar>(grid: &SparseGrid<T>, edge: u32) -> Result<(u64, u64, String)> {
    let (_, stats) = partition(grid, &TileConfig::cube(edge))?;
    Ok((stats.active_tiles, stats.all_tiles, stats.ratio_string()?))
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn cmd_run(a: RunArgs) -> Result<u8> {
    let any = load_grid_file(&a.grid)?;
    let stack = load_layer_stack(&a.layers)?;
    match (any, stack) {
        (AnyGrid::I16(g), LoadedStack::Int(layers)) => run_stack(&g, &layers, &a),
        (AnyGrid::F32(g), LoadedStack::F32(layers)) => run_stack(&g, &layers, &a),
        (AnyGrid::F32(g), LoadedStack::Int(layers)) => {
            let scale = a.quantize_scale.ok_or_else(|| {
                Error::Config(
                    "running an int stack on an f32 grid requires --quantize-scale".into(),
                )
            })?;
            let q = quantize_grid(&g, &QuantScheme::default(), scale)?;
            run_stack(&q, &layers, &a)
        }
        (AnyGrid::I16(_), LoadedStack::F32(_)) => Err(Error::Config(
            "an f32 stack cannot run on an i16 grid".into(),
        )),
    }
}

fn run_stack<T: Scalar>(
    grid: &SparseGrid<T>,
    layers: &[LayerConfig<T>],
    a: &RunArgs,
) -> Result<u8> {
    if let Some(first) = layers.first() {
        if let Some(path) = &a.dump_encoding {
            dump_encoding(grid, first.k(), &a.tile, path)?;
        }
        if let Some(path) = &a.dump_matches {
            dump_matches(grid, first.k(), &a.tile, path)?;
        }
    }
    let (out, traces) = run_network_traced(grid, layers, &a.tile)?;
    if let Some(path) = &a.output {
        save_grid_file(&out, path)?;
    }
    if let Some(path) = &a.report {
        let report = network_report(&traces, layers, &HwConfig::default())?;
        write_json(path, &serde_json::to_value(&report).map_err(json_err)?)?;
    }
    let matches: u64 = traces.iter().map(MatchTrace::total_matches).sum();
    println!(
        "{} layers, {} sites in, {} sites out, {} matches",
        layers.len(),
        grid.len(),
        out.len(),
        matches
    );
    Ok(0)
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Config(format!("serializing report: {e}"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(json_err)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn dump_matches<T: Scalar>(
    grid: &SparseGrid<T>,
    k: usize,
    tile: &TileConfig,
    path: &Path,
) -> Result<()> {
    let (tiles, _) = partition(grid, tile)?;
    let mut docs = Vec::with_capacity(tiles.len());
    for t in &tiles {
        let enc = encode_tile(grid, t, k)?;
        let scan = scan_tile(&enc)?;
        let groups: Vec<_> = scan
            .groups
            .iter()
            .map(|g| {
                json!({
                    "center": [g.center.x, g.center.y, g.center.z],
                    "matches": g.matches.iter().map(|m| json!({
                        "offset": m.kernel_offset,
                        "column": m.column,
                        "buffer_index": m.buffer_index,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        docs.push(json!({
            "origin": [t.origin.x, t.origin.y, t.origin.z],
            "srf_scanned": scan.srf_scanned,
            "matches": scan.total_matches(),
            "groups": groups,
        }));
    }
    write_json(path, &json!({ "k": k, "tiles": docs }))
}

fn dump_encoding<T: Scalar>(
    grid: &SparseGrid<T>,
    k: usize,
    tile: &TileConfig,
    path: &Path,
) -> Result<()> {
    let (tiles, _) = partition(grid, tile)?;
    let mut docs = Vec::with_capacity(tiles.len());
    for t in &tiles {
        let enc = encode_tile(grid, t, k)?;
        let mut lanes = Vec::new();
        for lz in 0..enc.lane_rows() {
            for ly in 0..enc.lane_cols() {
                let lane = &enc.lanes[lz * enc.lane_cols() + ly];
                if lane.mask.count_ones() == 0 {
                    continue;
                }
                lanes.push(json!({
                    "ly": ly,
                    "lz": lz,
                    "mask": lane.mask.bit_string(),
                    "activations": lane.activation_count(enc.channels),
                }));
            }
        }
        docs.push(json!({
            "origin": [t.origin.x, t.origin.y, t.origin.z],
            "interior": [t.interior.x, t.interior.y, t.interior.z],
            "lanes": lanes,
        }));
    }
    write_json(path, &json!({ "k": k, "tiles": docs }))
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

/// Per-trial kernel seed: stable mixing of the trial seed and layer index.
fn kernel_seed(trial: u64, layer: usize) -> u64 {
    trial
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(layer as u64)
}

fn cmd_check(a: CheckArgs) -> Result<u8> {
    let any = load_grid_file(&a.grid)?;
    let specs = read_layer_stack(&a.layers)?;
    let expected = a.expected.as_ref().map(|p| load_grid_file(p)).transpose()?;
    let mode = specs.first().map(|s| s.mode);
    let total = a.seeds;
    let mut passed = 0u64;
    let mut first_failure: Option<String> = None;

    for trial in a.seed..a.seed + a.seeds {
        let failure = match (&any, mode) {
            (AnyGrid::I16(grid), Some(LayerMode::Int) | None) => {
                check_trial_int(grid, &a, &specs, trial, expected.as_ref())?
            }
            (AnyGrid::F32(grid), Some(LayerMode::F32) | None) => {
                check_trial_f32(grid, &a, &specs, trial, expected.as_ref())?
            }
            (g, _) => {
                return Err(Error::Config(format!(
                    "stack mode does not match the {} grid",
                    g.dtype_name()
                )));
            }
        };
        match failure {
            None => {
                passed += 1;
                println!("seed {trial}: ok");
            }
            Some(msg) => {
                println!("seed {trial}: MISMATCH — {msg}");
                first_failure.get_or_insert(msg);
            }
        }
    }

    if passed == total {
        println!("ok: {passed}/{total} trials match the reference");
        Ok(0)
    } else {
        println!("FAIL: {}/{total} trials mismatched", total - passed);
        Ok(1)
    }
}

fn build_int_layers(
    config_path: &Path,
    specs: &[LayerSpec],
    trial: u64,
) -> Result<Vec<LayerConfig<i16>>> {
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let kernel = match &spec.weights_path {
                Some(rel) => io::load_weights_i8(&base.join(rel), spec.k, spec.c_in, spec.c_out)?,
                None => synth::random_kernel_i8(spec.k, spec.c_in, spec.c_out, kernel_seed(trial, i))?,
            };
            io::to_layer_int(spec, kernel)
        })
        .collect()
}

fn build_f32_layers(
    config_path: &Path,
    specs: &[LayerSpec],
    trial: u64,
) -> Result<Vec<LayerConfig<f32>>> {
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let kernel = match &spec.weights_path {
                Some(rel) => io::load_weights_f32(&base.join(rel), spec.k, spec.c_in, spec.c_out)?,
                None => synth::random_kernel_f32(spec.k, spec.c_in, spec.c_out, kernel_seed(trial, i))?,
            };
            io::to_layer_f32(spec, kernel)
        })
        .collect()
}

/// First site where the two grids disagree, in canonical order.
fn first_mismatch_int(a: &SparseGrid<i16>, b: &SparseGrid<i16>) -> Option<String> {
    if a.extent() != b.extent() || a.channels() != b.channels() {
        return Some("grid shapes differ".into());
    }
    for (coord, fa) in a.iter() {
        match b.get(coord) {
            None => return Some(format!("site {coord} missing from reference")),
            Some(fb) if fa != fb => {
                return Some(format!("first mismatching site {coord}: {fa:?} vs {fb:?}"));
            }
            Some(_) => {}
        }
    }
    b.iter()
        .find(|(c, _)| a.get(*c).is_none())
        .map(|(c, _)| format!("reference has extra site {c}"))
}

fn first_mismatch_f32(a: &SparseGrid<f32>, b: &SparseGrid<f32>) -> Option<String> {
    if a.extent() != b.extent() || a.channels() != b.channels() {
        return Some("grid shapes differ".into());
    }
    for (coord, fa) in a.iter() {
        match b.get(coord) {
            None => return Some(format!("site {coord} missing from reference")),
            Some(fb) => {
                for (x, r) in fa.iter().zip(fb) {
                    if (x - r).abs() > 1e-5 * (1.0 + r.abs()) {
                        return Some(format!("first mismatching site {coord}: {x} vs {r}"));
                    }
                }
            }
        }
    }
    b.iter()
        .find(|(c, _)| a.get(*c).is_none())
        .map(|(c, _)| format!("reference has extra site {c}"))
}

fn check_trial_int(
    grid: &SparseGrid<i16>,
    a: &CheckArgs,
    specs: &[LayerSpec],
    trial: u64,
    expected: Option<&AnyGrid>,
) -> Result<Option<String>> {
    let layers = build_int_layers(&a.layers, specs, trial)?;
    let (engine, _) = run_network_traced(grid, &layers, &a.tile)?;
    let mut reference = grid.clone();
    for layer in &layers {
        reference = subconv_reference_int(
            &reference,
            &layer.kernel,
            layer.compute.requant_shift,
            layer.compute.post_op,
        )?;
    }
    if let Some(msg) = first_mismatch_int(&engine, &reference) {
        return Ok(Some(msg));
    }
    if let Some(exp) = expected {
        let AnyGrid::I16(exp) = exp else {
            return Err(Error::Config("--expected grid is not i16".into()));
        };
        if let Some(msg) = first_mismatch_int(&engine, exp) {
            return Ok(Some(format!("vs --expected: {msg}")));
        }
    }
    Ok(None)
}

fn check_trial_f32(
    grid: &SparseGrid<f32>,
    a: &CheckArgs,
    specs: &[LayerSpec],
    trial: u64,
    expected: Option<&AnyGrid>,
) -> Result<Option<String>> {
    let layers = build_f32_layers(&a.layers, specs, trial)?;
    let (engine, _) = run_network_traced(grid, &layers, &a.tile)?;
    let mut reference = grid.clone();
    for layer in &layers {
        reference = subconv_reference_f32(&reference, &layer.kernel, layer.compute.post_op)?;
    }
    if let Some(msg) = first_mismatch_f32(&engine, &reference) {
        return Ok(Some(msg));
    }
    if let Some(exp) = expected {
        let AnyGrid::F32(exp) = exp else {
            return Err(Error::Config("--expected grid is not f32".into()));
        };
        if let Some(msg) = first_mismatch_f32(&engine, exp) {
            return Ok(Some(format!("vs --expected: {msg}")));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn cmd_bench(a: BenchArgs) -> Result<u8> {
    for &pct in &a.sparsity {
        if !(0.0..100.0).contains(&pct) {
            return Err(Error::Config(format!(
                "sparsity {pct} out of range [0, 100)"
            )));
        }
    }
    println!("sparsity,tile_size,channels,active_sites,total_matches,total_cycles,effective_ops,gops,runtime_us");
    let hw = HwConfig::default();
    for &pct in &a.sparsity {
        let sites = synth::sites_for_sparsity(a.extent, pct / 100.0);
        for &edge in &a.tile {
            let tile = TileConfig::cube(edge);
            let report = match a.mode {
                ModeArg::Int => {
                    let grid = synth::uniform_grid_i16(a.extent, sites, a.channels, a.seed)?;
                    let layer = LayerConfig::<i16>::new(
                        synth::random_kernel_i8(3, a.channels, a.channels, a.seed)?,
                        ComputeConfig::default(),
                        QuantScheme::for_layer(3, a.channels),
                    )?;
                    let (_, trace) = subconv_core::run_layer_traced(&grid, &layer, &tile)?;
                    estimate(&trace, &layer, &hw)?
                }
                ModeArg::F32 => {
                    let grid = synth::uniform_grid_f32(a.extent, sites, a.channels, a.seed)?;
                    let layer = LayerConfig::<f32>::new(
                        synth::random_kernel_f32(3, a.channels, a.channels, a.seed)?,
                        ComputeConfig {
                            post_op: PostOp::None,
                            ..ComputeConfig::default()
                        },
                        QuantScheme::for_layer(3, a.channels),
                    )?;
                    let (_, trace) = subconv_core::run_layer_traced(&grid, &layer, &tile)?;
                    estimate(&trace, &layer, &hw)?
                }
            };
            println!(
                "{pct},{edge},{},{sites},{},{},{},{:.6},{:.3}",
                a.channels,
                report.total_matches,
                report.total_cycles,
                report.effective_ops,
                report.gops,
                report.runtime_us
            );
        }
    }
    Ok(0)
}
