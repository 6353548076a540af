//! Engine stage benchmarks: tiling, encode+scan, and full layer runs at
//! three sparsity levels. Run with `cargo bench -p subconv-bench`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use subconv_bench::{grid_at_sparsity, layer};
use subconv_core::codec::encode_tile;
use subconv_core::grid::Extent;
use subconv_core::matcher::scan_tile;
use subconv_core::run_layer;
use subconv_core::tiler::{partition, TileConfig};

fn bench_partition(c: &mut Criterion) {
    let grid = grid_at_sparsity(Extent::cube(192), 0.999, 1, 1);
    c.bench_function("partition/192^3-99.9%", |b| {
        b.iter(|| {
            let (tiles, stats) = partition(black_box(&grid), &TileConfig::cube(8)).unwrap();
            black_box((tiles.len(), stats.active_tiles));
        })
    });
}

fn bench_encode_scan(c: &mut Criterion) {
    let grid = grid_at_sparsity(Extent::cube(32), 0.97, 3, 2);
    let (tiles, _) = partition(&grid, &TileConfig::cube(8)).unwrap();
    c.bench_function("encode+scan/32^3-97%", |b| {
        b.iter(|| {
            let mut matches = 0u64;
            for tile in &tiles {
                let enc = encode_tile(black_box(&grid), tile, 3).unwrap();
                matches += scan_tile(&enc).unwrap().total_matches();
            }
            black_box(matches);
        })
    });
}

fn bench_run_layer(c: &mut Criterion) {
    let tile = TileConfig::cube(8);
    let l = layer(16, 16, 3);
    let mut group = c.benchmark_group("run_layer/32^3-16ch");
    for (label, sparsity) in [("90%", 0.90), ("99%", 0.99), ("99.9%", 0.999)] {
        let grid = grid_at_sparsity(Extent::cube(32), sparsity, 16, 4);
        group.bench_function(label, |b| {
            b.iter(|| black_box(run_layer(black_box(&grid), &l, &tile).unwrap().len()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_partition, bench_encode_scan, bench_run_layer);
criterion_main!(benches);
