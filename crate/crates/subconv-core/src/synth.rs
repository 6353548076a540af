//! Deterministic synthetic inputs: point clouds, sparse grids, kernels.
//!
//! Every generator takes an explicit seed and drives a counter-based PRNG
//! (ChaCha8), so the same call always yields the same bytes regardless of
//! platform. Tests, the check harness, and the bench harness all share
//! these generators.

use rand::distributions::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Coordinate, Extent, Kernel, Point, SparseGrid};

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Points sampled on a unit-sphere shell around the origin, with mild
/// radial noise. Feature channels are uniform in `[-1, 1]`.
pub fn sphere_cloud(n: usize, channels: usize, seed: u64) -> Vec<Point> {
    let mut rng = rng_for(seed);
    let feat = Uniform::new_inclusive(-1.0f32, 1.0);
    (0..n)
        .map(|_| {
            // Gaussian-free direction sampling: rejection from the cube.
            let dir = loop {
                let v = [
                    rng.gen_range(-1.0f64..=1.0),
                    rng.gen_range(-1.0f64..=1.0),
                    rng.gen_range(-1.0f64..=1.0),
                ];
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if norm > 1e-3 && norm <= 1.0 {
                    break [v[0] / norm, v[1] / norm, v[2] / norm];
                }
            };
            let radius = 1.0 + rng.gen_range(-0.05f64..=0.05);
            Point {
                position: [dir[0] * radius, dir[1] * radius, dir[2] * radius],
                features: (0..channels).map(|_| feat.sample(&mut rng)).collect(),
            }
        })
        .collect()
}

/// Points drawn around `clusters` random centers in the unit cube — a stand-in
/// for indoor scans where occupancy concentrates on furniture-scale blobs.
pub fn cluster_cloud(n: usize, clusters: usize, channels: usize, seed: u64) -> Vec<Point> {
    let mut rng = rng_for(seed);
    let k = clusters.max(1);
    let centers: Vec<[f64; 3]> = (0..k)
        .map(|_| {
            [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ]
        })
        .collect();
    let feat = Uniform::new_inclusive(-1.0f32, 1.0);
    (0..n)
        .map(|i| {
            let c = centers[i % k];
            Point {
                position: [
                    c[0] + rng.gen_range(-0.08..0.08),
                    c[1] + rng.gen_range(-0.08..0.08),
                    c[2] + rng.gen_range(-0.08..0.08),
                ],
                features: (0..channels).map(|_| feat.sample(&mut rng)).collect(),
            }
        })
        .collect()
}

/// Number of active sites that realizes `sparsity` (fraction of *empty*
/// voxels, e.g. `0.999`) on `extent`, rounded to nearest and clamped to at
/// least one site unless the grid would be fully dense at zero.
pub fn sites_for_sparsity(extent: Extent, sparsity: f64) -> usize {
    let volume = extent.volume() as f64;
    let sites = (volume * (1.0 - sparsity)).round() as usize;
    sites.clamp(1, extent.volume() as usize)
}

fn distinct_sites(extent: Extent, sites: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Coordinate>> {
    let volume = extent.volume();
    if sites as u64 > volume {
        return Err(Error::InvalidInput(format!(
            "cannot place {sites} distinct sites in a grid of volume {volume}"
        )));
    }
    if volume > usize::MAX as u64 {
        return Err(Error::InvalidInput(format!(
            "grid volume {volume} exceeds addressable range"
        )));
    }
    let picks = sample(rng, volume as usize, sites);
    Ok(picks
        .into_iter()
        .map(|flat| {
            let flat = flat as u64;
            let x = (flat % extent.x as u64) as u32;
            let y = ((flat / extent.x as u64) % extent.y as u64) as u32;
            let z = (flat / (extent.x as u64 * extent.y as u64)) as u32;
            Coordinate::new(x, y, z)
        })
        .collect())
}

/// Sparse i16 grid with `sites` distinct active voxels and activations
/// uniform in `[-512, 511]` — mid-scale values that exercise requantization
/// without saturating 64-bit accumulators at any supported layer shape.
pub fn uniform_grid_i16(
    extent: Extent,
    sites: usize,
    channels: usize,
    seed: u64,
) -> Result<SparseGrid<i16>> {
    let mut rng = rng_for(seed);
    let coords = distinct_sites(extent, sites, &mut rng)?;
    let mut grid = SparseGrid::<i16>::new(extent, channels)?;
    for c in coords {
        let feats: Vec<i16> = (0..channels).map(|_| rng.gen_range(-512..=511)).collect();
        grid.insert(c, feats)?;
    }
    Ok(grid)
}

/// Sparse f32 grid with `sites` distinct active voxels and activations
/// uniform in `[-1, 1]`.
pub fn uniform_grid_f32(
    extent: Extent,
    sites: usize,
    channels: usize,
    seed: u64,
) -> Result<SparseGrid<f32>> {
    let mut rng = rng_for(seed);
    let coords = distinct_sites(extent, sites, &mut rng)?;
    let mut grid = SparseGrid::<f32>::new(extent, channels)?;
    for c in coords {
        let feats: Vec<f32> = (0..channels)
            .map(|_| rng.gen_range(-1.0f32..=1.0))
            .collect();
        grid.insert(c, feats)?;
    }
    Ok(grid)
}

/// Random int8 kernel with weights uniform in `[-64, 63]` (half-scale keeps
/// worst-case accumulations comfortably inside the widened accumulator).
pub fn random_kernel_i8(k: usize, c_in: usize, c_out: usize, seed: u64) -> Result<Kernel<i8>> {
    let mut rng = rng_for(seed);
    let len = k * k * k * c_in * c_out;
    let weights: Vec<i8> = (0..len).map(|_| rng.gen_range(-64..=63)).collect();
    Kernel::new(k, c_in, c_out, weights)
}

/// Random f32 kernel with weights uniform in `[-1, 1]`.
pub fn random_kernel_f32(k: usize, c_in: usize, c_out: usize, seed: u64) -> Result<Kernel<f32>> {
    let mut rng = rng_for(seed);
    let len = k * k * k * c_in * c_out;
    let weights: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
    Kernel::new(k, c_in, c_out, weights)
}
