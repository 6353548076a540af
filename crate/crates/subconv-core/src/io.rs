//! Ingestion and serialization: point-cloud text, `SSCG` binary grids,
//! raw weight blobs, and JSON layer-stack configs.
//!
//! The binary grid format is little-endian throughout:
//!
//! ```text
//! magic "SSCG" | u32 version=1 | u32 D,H,W | u32 C | u32 dtype | u64 count
//! then per site: u16 x, u16 y, u16 z, u16 pad=0, C features of dtype
//! ```
//!
//! `dtype` 0 is f32, 1 is i16; `D,H,W` are the z, y, x extents. Sites are
//! written in canonical (z, y, x) order, so equal grids serialize to equal
//! bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::compute::{ComputeConfig, LayerConfig, PostOp};
use crate::error::{Error, Result};
use crate::grid::{Coordinate, Extent, Kernel, Point, QuantScheme, Scalar, SparseGrid};

pub const GRID_MAGIC: [u8; 4] = *b"SSCG";
pub const GRID_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Point-cloud text format
// ---------------------------------------------------------------------------

/// Parse the whitespace-separated text format: one `x y z f1 … fC` point per
/// line, `#` lines and blank lines ignored. The first data line fixes the
/// channel count; every later line must agree.
pub fn read_point_cloud<R: BufRead>(reader: R) -> Result<Vec<Point>> {
    let mut points = Vec::new();
    let mut channels: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected at least x y z, got {} fields", tokens.len()),
            });
        }
        let mut position = [0.0f64; 3];
        for (axis, token) in tokens[..3].iter().enumerate() {
            position[axis] = token.parse().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("bad coordinate {token:?}"),
            })?;
        }
        let features: Vec<f32> = tokens[3..]
            .iter()
            .map(|token| {
                token.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("bad feature {token:?}"),
                })
            })
            .collect::<Result<_>>()?;
        match channels {
            None => channels = Some(features.len()),
            Some(c) if c != features.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("{} feature fields, earlier lines had {c}", features.len()),
                });
            }
            Some(_) => {}
        }
        points.push(Point { position, features });
    }
    Ok(points)
}

pub fn read_point_cloud_file(path: &Path) -> Result<Vec<Point>> {
    read_point_cloud(BufReader::new(File::open(path)?))
}

// ---------------------------------------------------------------------------
// SSCG binary grids
// ---------------------------------------------------------------------------

/// Reader wrapper that tracks the byte offset for error reporting.
struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

/// Serialize a grid. Fails if any extent axis exceeds the u16 coordinate
/// range of the site records.
pub fn save_grid<T: Scalar, W: Write>(grid: &SparseGrid<T>, writer: &mut W) -> Result<()> {
    let e = grid.extent();
    if e.x > u16::MAX as u32 + 1 || e.y > u16::MAX as u32 + 1 || e.z > u16::MAX as u32 + 1 {
        return Err(Error::InvalidInput(format!(
            "extent {e} exceeds the u16 site coordinate range"
        )));
    }
    writer.write_all(&GRID_MAGIC)?;
    writer.write_u32::<LittleEndian>(GRID_VERSION)?;
    writer.write_u32::<LittleEndian>(e.z)?;
    writer.write_u32::<LittleEndian>(e.y)?;
    writer.write_u32::<LittleEndian>(e.x)?;
    writer.write_u32::<LittleEndian>(grid.channels() as u32)?;
    writer.write_u32::<LittleEndian>(T::DTYPE)?;
    writer.write_u64::<LittleEndian>(grid.len() as u64)?;
    for (coord, features) in grid.iter() {
        writer.write_u16::<LittleEndian>(coord.x as u16)?;
        writer.write_u16::<LittleEndian>(coord.y as u16)?;
        writer.write_u16::<LittleEndian>(coord.z as u16)?;
        writer.write_u16::<LittleEndian>(0)?;
        for &v in features {
            v.write_le(writer)?;
        }
    }
    Ok(())
}

/// Canonical byte image of a grid (used for byte-identity checks).
pub fn grid_to_bytes<T: Scalar>(grid: &SparseGrid<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    save_grid(grid, &mut buf)?;
    Ok(buf)
}

pub fn save_grid_file<T: Scalar>(grid: &SparseGrid<T>, path: &Path) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    save_grid(grid, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// A deserialized grid of either supported element type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyGrid {
    F32(SparseGrid<f32>),
    I16(SparseGrid<i16>),
}

impl AnyGrid {
    pub fn extent(&self) -> Extent {
        match self {
            AnyGrid::F32(g) => g.extent(),
            AnyGrid::I16(g) => g.extent(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            AnyGrid::F32(g) => g.channels(),
            AnyGrid::I16(g) => g.channels(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyGrid::F32(g) => g.len(),
            AnyGrid::I16(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            AnyGrid::F32(_) => "f32",
            AnyGrid::I16(_) => "i16",
        }
    }
}

fn load_sites<T: Scalar, R: Read>(
    r: &mut Counting<R>,
    extent: Extent,
    channels: usize,
    count: u64,
) -> Result<SparseGrid<T>> {
    let mut grid = SparseGrid::<T>::new(extent, channels)?;
    for i in 0..count {
        let site_offset = r.offset;
        let fail = |reason: String| Error::format(site_offset, reason);
        let x = r.read_u16::<LittleEndian>()? as u32;
        let y = r.read_u16::<LittleEndian>()? as u32;
        let z = r.read_u16::<LittleEndian>()? as u32;
        let pad = r.read_u16::<LittleEndian>()?;
        if pad != 0 {
            return Err(fail(format!("site {i}: padding word is {pad}, must be 0")));
        }
        let coord = Coordinate::new(x, y, z);
        if !extent.contains(coord) {
            return Err(fail(format!("site {i}: {coord} outside extent {extent}")));
        }
        if grid.contains(coord) {
            return Err(fail(format!("site {i}: duplicate coordinate {coord}")));
        }
        let mut features = Vec::with_capacity(channels);
        for _ in 0..channels {
            features.push(T::read_le(r)?);
        }
        grid.insert(coord, features)?;
    }
    Ok(grid)
}

/// Deserialize a grid, dispatching on the header's dtype. Rejects bad magic,
/// unknown versions, malformed sites, and trailing bytes, reporting the byte
/// offset of the problem.
pub fn load_grid<R: Read>(reader: R) -> Result<AnyGrid> {
    let mut r = Counting {
        inner: reader,
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != GRID_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != GRID_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported version {version}, expected {GRID_VERSION}"),
        ));
    }
    let d = r.read_u32::<LittleEndian>()?;
    let h = r.read_u32::<LittleEndian>()?;
    let w = r.read_u32::<LittleEndian>()?;
    let channels = r.read_u32::<LittleEndian>()? as usize;
    let dtype = r.read_u32::<LittleEndian>()?;
    let count = r.read_u64::<LittleEndian>()?;
    let extent = Extent::new(w, h, d);
    let grid = match dtype {
        0 => AnyGrid::F32(load_sites(&mut r, extent, channels, count)?),
        1 => AnyGrid::I16(load_sites(&mut r, extent, channels, count)?),
        other => {
            return Err(Error::format(
                24,
                format!("unknown dtype {other}, expected 0 (f32) or 1 (i16)"),
            ));
        }
    };
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::format(r.offset - 1, "trailing bytes after final site"));
    }
    Ok(grid)
}

pub fn load_grid_file(path: &Path) -> Result<AnyGrid> {
    load_grid(BufReader::new(File::open(path)?))
}

// ---------------------------------------------------------------------------
// Weight blobs
// ---------------------------------------------------------------------------

fn weight_len(k: usize, c_in: usize, c_out: usize) -> u64 {
    (k * k * k) as u64 * c_in as u64 * c_out as u64
}

/// Write kernel weights as a raw little-endian `[offset][ic][oc]` array of i8.
pub fn save_weights_i8(kernel: &Kernel<i8>, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = kernel.weights().iter().map(|&w| w as u8).collect();
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Write kernel weights as a raw little-endian `[offset][ic][oc]` array of f32.
pub fn save_weights_f32(kernel: &Kernel<f32>, path: &Path) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for &w in kernel.weights() {
        writer.write_f32::<LittleEndian>(w)?;
    }
    writer.flush()?;
    Ok(())
}

fn check_weight_size(path: &Path, actual: u64, expected: u64) -> Result<()> {
    if actual != expected {
        return Err(Error::format(
            actual.min(expected),
            format!(
                "weights file {} is {actual} bytes, expected exactly {expected}",
                path.display()
            ),
        ));
    }
    Ok(())
}

/// Read an i8 weight blob; the file length must match the declared shape
/// exactly.
pub fn load_weights_i8(path: &Path, k: usize, c_in: usize, c_out: usize) -> Result<Kernel<i8>> {
    let bytes = std::fs::read(path)?;
    check_weight_size(path, bytes.len() as u64, weight_len(k, c_in, c_out))?;
    Kernel::new(k, c_in, c_out, bytes.into_iter().map(|b| b as i8).collect())
}

/// Read an f32 weight blob; the file length must match the declared shape
/// exactly.
pub fn load_weights_f32(path: &Path, k: usize, c_in: usize, c_out: usize) -> Result<Kernel<f32>> {
    let bytes = std::fs::read(path)?;
    let expected = weight_len(k, c_in, c_out);
    check_weight_size(path, bytes.len() as u64, expected * 4)?;
    let mut reader = &bytes[..];
    let mut weights = Vec::with_capacity(expected as usize);
    for _ in 0..expected {
        weights.push(reader.read_f32::<LittleEndian>()?);
    }
    Kernel::new(k, c_in, c_out, weights)
}

// ---------------------------------------------------------------------------
// Layer-stack config
// ---------------------------------------------------------------------------

/// Arithmetic mode of a configured layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerMode {
    Int,
    F32,
}

/// One layer entry of a stack config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(alias = "K")]
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub mode: LayerMode,
    #[serde(default)]
    pub requant_shift: u32,
    #[serde(default)]
    pub post_op: PostOp,
    /// Raw weight blob, resolved relative to the config file's directory.
    /// May be omitted when the caller supplies weights itself (e.g. the
    /// self-check harness generates seeded kernels from the shape alone).
    #[serde(default)]
    pub weights_path: Option<String>,
}

/// Accept either a bare array of layers or `{"layers": [...]}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum StackFile {
    Bare(Vec<LayerSpec>),
    Wrapped { layers: Vec<LayerSpec> },
}

/// Parse a stack config file into layer specs without touching weight files.
pub fn read_layer_stack(path: &Path) -> Result<Vec<LayerSpec>> {
    let text = std::fs::read_to_string(path)?;
    let parsed: StackFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let specs = match parsed {
        StackFile::Bare(layers) | StackFile::Wrapped { layers } => layers,
    };
    for (i, spec) in specs.iter().enumerate() {
        if spec.k == 0 || spec.k % 2 == 0 {
            return Err(Error::Config(format!(
                "layer {i}: kernel size {} must be odd",
                spec.k
            )));
        }
        if spec.c_in == 0 || spec.c_out == 0 {
            return Err(Error::Config(format!("layer {i}: zero channel count")));
        }
    }
    if let Some(w) = specs.windows(2).position(|w| w[0].mode != w[1].mode) {
        return Err(Error::Config(format!(
            "mixed modes: layer {w} and layer {} disagree; a stack runs in one mode",
            w + 1
        )));
    }
    Ok(specs)
}

/// A layer stack with weights loaded, ready to run.
#[derive(Debug, Clone)]
pub enum LoadedStack {
    Int(Vec<LayerConfig<i16>>),
    F32(Vec<LayerConfig<f32>>),
}

impl LoadedStack {
    pub fn len(&self) -> usize {
        match self {
            LoadedStack::Int(l) => l.len(),
            LoadedStack::F32(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Build a quantized layer from a spec and its kernel.
pub fn to_layer_int(spec: &LayerSpec, kernel: Kernel<i8>) -> Result<LayerConfig<i16>> {
    let compute = ComputeConfig {
        requant_shift: spec.requant_shift,
        post_op: spec.post_op,
        ..ComputeConfig::default()
    };
    LayerConfig::new(kernel, compute, QuantScheme::for_layer(spec.k, spec.c_in))
}

/// Build a real-arithmetic layer from a spec and its kernel.
pub fn to_layer_f32(spec: &LayerSpec, kernel: Kernel<f32>) -> Result<LayerConfig<f32>> {
    let compute = ComputeConfig {
        requant_shift: spec.requant_shift,
        post_op: spec.post_op,
        ..ComputeConfig::default()
    };
    LayerConfig::new(kernel, compute, QuantScheme::for_layer(spec.k, spec.c_in))
}

fn resolve_weights(path: &Path, spec: &LayerSpec, index: usize) -> Result<PathBuf> {
    let rel = spec.weights_path.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "layer {index}: weights_path is required to run this stack"
        ))
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(base.join(rel))
}

/// Read a stack config and all referenced weight files.
pub fn load_layer_stack(path: &Path) -> Result<LoadedStack> {
    let specs = read_layer_stack(path)?;
    let mode = specs.first().map(|s| s.mode).unwrap_or(LayerMode::Int);
    match mode {
        LayerMode::Int => {
            let mut layers = Vec::with_capacity(specs.len());
            for (i, spec) in specs.iter().enumerate() {
                let weights = resolve_weights(path, spec, i)?;
                let kernel = load_weights_i8(&weights, spec.k, spec.c_in, spec.c_out)?;
                layers.push(to_layer_int(spec, kernel)?);
            }
            Ok(LoadedStack::Int(layers))
        }
        LayerMode::F32 => {
            let mut layers = Vec::with_capacity(specs.len());
            for (i, spec) in specs.iter().enumerate() {
                let weights = resolve_weights(path, spec, i)?;
                let kernel = load_weights_f32(&weights, spec.k, spec.c_in, spec.c_out)?;
                layers.push(to_layer_f32(spec, kernel)?);
            }
            Ok(LoadedStack::F32(layers))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use std::io::Cursor;

    #[test]
    fn point_cloud_parses_comments_and_blanks() {
        let text = "# header comment\n\
                    0.5 1.0 -2.0 3.5\n\
                    \n\
                    1.5 2.5 3.5 -1.0\n";
        let points = read_point_cloud(Cursor::new(text)).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].position, [0.5, 1.0, -2.0]);
        assert_eq!(points[0].features, vec![3.5]);
        assert_eq!(points[1].features, vec![-1.0]);
    }

    #[test]
    fn point_cloud_without_features_is_legal() {
        let points = read_point_cloud(Cursor::new("1 2 3\n4 5 6\n")).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points[0].features.is_empty());
    }

    #[test]
    fn point_cloud_errors_carry_line_numbers() {
        let err = read_point_cloud(Cursor::new("1 2 3 4\n# ok\nbogus 2 3 4\n")).unwrap_err();
        match err {
            Error::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("bogus"), "{reason}");
            }
            other => panic!("expected Parse, got {other:?}"),
        }
        let err = read_point_cloud(Cursor::new("1 2 3 4\n1 2 3\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
        let err = read_point_cloud(Cursor::new("1 2\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn grid_round_trip_is_identity() {
        let grid = synth::uniform_grid_i16(Extent::new(16, 12, 10), 64, 3, 42).unwrap();
        let bytes = grid_to_bytes(&grid).unwrap();
        match load_grid(Cursor::new(&bytes)).unwrap() {
            AnyGrid::I16(loaded) => assert_eq!(loaded, grid),
            other => panic!("wrong dtype {}", other.dtype_name()),
        }
        let grid = synth::uniform_grid_f32(Extent::cube(9), 30, 2, 7).unwrap();
        let bytes = grid_to_bytes(&grid).unwrap();
        match load_grid(Cursor::new(&bytes)).unwrap() {
            AnyGrid::F32(loaded) => assert_eq!(loaded, grid),
            other => panic!("wrong dtype {}", other.dtype_name()),
        }
    }

    #[test]
    fn empty_grid_round_trips() {
        let grid = SparseGrid::<f32>::new(Extent::cube(4), 2).unwrap();
        let bytes = grid_to_bytes(&grid).unwrap();
        // magic + 6 u32 header words + u64 count, no sites
        assert_eq!(bytes.len(), 4 + 6 * 4 + 8);
        assert_eq!(load_grid(Cursor::new(&bytes)).unwrap().len(), 0);
    }

    #[test]
    fn header_layout_is_fixed() {
        let mut grid = SparseGrid::<i16>::new(Extent::new(5, 6, 7), 1).unwrap();
        grid.insert(Coordinate::new(4, 3, 2), vec![-300]).unwrap();
        let bytes = grid_to_bytes(&grid).unwrap();
        assert_eq!(&bytes[0..4], b"SSCG");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes()); // version
        assert_eq!(&bytes[8..12], &7u32.to_le_bytes()); // D = z extent
        assert_eq!(&bytes[12..16], &6u32.to_le_bytes()); // H = y extent
        assert_eq!(&bytes[16..20], &5u32.to_le_bytes()); // W = x extent
        assert_eq!(&bytes[20..24], &1u32.to_le_bytes()); // channels
        assert_eq!(&bytes[24..28], &1u32.to_le_bytes()); // dtype i16
        assert_eq!(&bytes[28..36], &1u64.to_le_bytes()); // count
        assert_eq!(&bytes[36..38], &4u16.to_le_bytes()); // x
        assert_eq!(&bytes[38..40], &3u16.to_le_bytes()); // y
        assert_eq!(&bytes[40..42], &2u16.to_le_bytes()); // z
        assert_eq!(&bytes[42..44], &0u16.to_le_bytes()); // pad
        assert_eq!(&bytes[44..46], &(-300i16).to_le_bytes());
    }

    #[test]
    fn corrupt_streams_report_offsets() {
        let grid = synth::uniform_grid_i16(Extent::cube(8), 10, 1, 3).unwrap();
        let good = grid_to_bytes(&grid).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            load_grid(Cursor::new(&bad_magic)),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(
            load_grid(Cursor::new(&bad_version)),
            Err(Error::Format { offset: 4, .. })
        ));

        let mut bad_dtype = good.clone();
        bad_dtype[24] = 7;
        assert!(matches!(
            load_grid(Cursor::new(&bad_dtype)),
            Err(Error::Format { offset: 24, .. })
        ));

        let mut bad_pad = good.clone();
        bad_pad[42] = 0xff; // first site's padding word
        let err = load_grid(Cursor::new(&bad_pad)).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 36, .. }), "{err}");

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(
            load_grid(Cursor::new(&trailing)),
            Err(Error::Format { .. })
        ));

        let truncated = &good[..good.len() - 1];
        assert!(matches!(load_grid(Cursor::new(truncated)), Err(Error::Io(_))));
    }

    #[test]
    fn out_of_bounds_and_duplicate_sites_rejected() {
        let mut grid = SparseGrid::<i16>::new(Extent::cube(4), 1).unwrap();
        grid.insert(Coordinate::new(1, 1, 1), vec![5]).unwrap();
        let mut bytes = grid_to_bytes(&grid).unwrap();
        bytes[36] = 200; // x := 200, outside 4^3
        assert!(matches!(
            load_grid(Cursor::new(&bytes)),
            Err(Error::Format { offset: 36, .. })
        ));

        let mut two = SparseGrid::<i16>::new(Extent::cube(4), 1).unwrap();
        two.insert(Coordinate::new(1, 1, 1), vec![5]).unwrap();
        two.insert(Coordinate::new(2, 1, 1), vec![6]).unwrap();
        let mut bytes = grid_to_bytes(&two).unwrap();
        bytes[46] = bytes[36]; // second site x := first site x → duplicate
        assert!(matches!(
            load_grid(Cursor::new(&bytes)),
            Err(Error::Format { offset: 46, .. })
        ));
    }

    #[test]
    fn sites_serialize_in_canonical_order() {
        // Insertion order differs from (z, y, x) order; bytes must not.
        let mut a = SparseGrid::<i16>::new(Extent::cube(8), 1).unwrap();
        let mut b = SparseGrid::<i16>::new(Extent::cube(8), 1).unwrap();
        let sites = [(7u32, 1u32, 0u32), (0, 0, 0), (3, 2, 1), (0, 2, 1)];
        for &(x, y, z) in &sites {
            a.insert(Coordinate::new(x, y, z), vec![1]).unwrap();
        }
        for &(x, y, z) in sites.iter().rev() {
            b.insert(Coordinate::new(x, y, z), vec![1]).unwrap();
        }
        assert_eq!(grid_to_bytes(&a).unwrap(), grid_to_bytes(&b).unwrap());
    }

    #[test]
    fn weight_blob_round_trip_and_size_check() {
        let dir = tempfile::tempdir().unwrap();
        let ki = synth::random_kernel_i8(3, 2, 3, 11).unwrap();
        let pi = dir.path().join("w.i8");
        save_weights_i8(&ki, &pi).unwrap();
        assert_eq!(load_weights_i8(&pi, 3, 2, 3).unwrap().weights(), ki.weights());
        // Declared shape disagreeing with file length must fail loudly.
        assert!(load_weights_i8(&pi, 3, 2, 2).is_err());
        assert!(load_weights_i8(&pi, 3, 3, 3).is_err());

        let kf = synth::random_kernel_f32(3, 2, 2, 12).unwrap();
        let pf = dir.path().join("w.f32");
        save_weights_f32(&kf, &pf).unwrap();
        assert_eq!(load_weights_f32(&pf, 3, 2, 2).unwrap().weights(), kf.weights());
        assert!(load_weights_f32(&pf, 3, 2, 4).is_err());
    }

    #[test]
    fn layer_stack_bare_and_wrapped_forms() {
        let dir = tempfile::tempdir().unwrap();
        let bare = dir.path().join("bare.json");
        std::fs::write(
            &bare,
            r#"[{"K": 3, "c_in": 2, "c_out": 4, "mode": "int", "requant_shift": 6}]"#,
        )
        .unwrap();
        let specs = read_layer_stack(&bare).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].k, 3, "K alias accepted");
        assert_eq!(specs[0].requant_shift, 6);
        assert_eq!(specs[0].post_op, PostOp::None, "post_op defaults to none");
        assert!(specs[0].weights_path.is_none());

        let wrapped = dir.path().join("wrapped.json");
        std::fs::write(
            &wrapped,
            r#"{"layers": [{"k": 3, "c_in": 1, "c_out": 1, "mode": "f32", "post_op": "relu"}]}"#,
        )
        .unwrap();
        let specs = read_layer_stack(&wrapped).unwrap();
        assert_eq!(specs[0].mode, LayerMode::F32);
        assert_eq!(specs[0].post_op, PostOp::Relu);
    }

    #[test]
    fn layer_stack_rejects_mixed_modes_and_bad_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let mixed = dir.path().join("mixed.json");
        std::fs::write(
            &mixed,
            r#"[{"k": 3, "c_in": 1, "c_out": 1, "mode": "int"},
               {"k": 3, "c_in": 1, "c_out": 1, "mode": "f32"}]"#,
        )
        .unwrap();
        let err = read_layer_stack(&mixed).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");

        let even = dir.path().join("even.json");
        std::fs::write(&even, r#"[{"k": 2, "c_in": 1, "c_out": 1, "mode": "int"}]"#).unwrap();
        assert!(read_layer_stack(&even).is_err());
    }

    #[test]
    fn load_layer_stack_resolves_weights_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let kernel = synth::random_kernel_i8(3, 2, 2, 40).unwrap();
        save_weights_i8(&kernel, &dir.path().join("layer0.w")).unwrap();
        let cfg = dir.path().join("stack.json");
        std::fs::write(
            &cfg,
            r#"[{"k": 3, "c_in": 2, "c_out": 2, "mode": "int",
                "requant_shift": 5, "weights_path": "layer0.w"}]"#,
        )
        .unwrap();
        match load_layer_stack(&cfg).unwrap() {
            LoadedStack::Int(layers) => {
                assert_eq!(layers.len(), 1);
                assert_eq!(layers[0].kernel.weights(), kernel.weights());
                assert_eq!(layers[0].compute.requant_shift, 5);
            }
            LoadedStack::F32(_) => panic!("expected int stack"),
        }

        // Missing weights_path is fine for read_layer_stack but not for
        // actually loading the stack.
        let no_weights = dir.path().join("noweights.json");
        std::fs::write(
            &no_weights,
            r#"[{"k": 3, "c_in": 2, "c_out": 2, "mode": "int"}]"#,
        )
        .unwrap();
        assert!(read_layer_stack(&no_weights).is_ok());
        assert!(load_layer_stack(&no_weights).is_err());
    }
}
