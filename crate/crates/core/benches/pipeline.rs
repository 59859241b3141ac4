//! Data-parallel hot loops, measured with the default rayon pool against a
//! single-thread pool (build with `--no-default-features` for the true
//! sequential code path).

use criterion::{criterion_group, criterion_main, Criterion};
use knop_core::ct::{
    apply_filter, backproject_fan, project_fan, ramp_filter_fan, FanBeamGeometry, ImageGrid,
};
use knop_core::frangi::{conv2d_reflect, gaussian_second_derivative_kernels};
use knop_core::rng::SeededRng;
use knop_core::tensor::{dft, Tensor};
use std::hint::black_box;

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
}

fn geometry() -> FanBeamGeometry {
    let grid = ImageGrid::square(96, 2.0 / 96.0);
    FanBeamGeometry::short_scan_cover(3.0, 6.0, 120, 144, grid).unwrap()
}

/// Run `f` on the default pool and on a single-thread pool, registering both
/// as criterion variants. Without the parallel feature the pools don't exist,
/// so the sequential implementation is measured directly.
fn bench_both<F: Fn() + Sync>(c: &mut Criterion, group: &str, f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        g.bench_function("par", |b| b.iter(&f));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function("one-thread", |b| b.iter(|| pool.install(&f)));
    }
    #[cfg(not(feature = "parallel"))]
    {
        g.bench_function("seq", |b| b.iter(&f));
    }
    g.finish();
}

fn benches(c: &mut Criterion) {
    let geom = geometry();
    let img = random_tensor(&[96, 96], 1);
    bench_both(c, "project_fan_96", || {
        black_box(project_fan(black_box(&img), &geom).unwrap());
    });

    let sino = random_tensor(&geom.sinogram_shape(), 2);
    bench_both(c, "backproject_fan_96", || {
        black_box(backproject_fan(black_box(&sino), &geom).unwrap());
    });

    let kernel = ramp_filter_fan(&geom);
    bench_both(c, "ramp_filter_rows", || {
        black_box(apply_filter(black_box(&sino), &kernel).unwrap());
    });

    let rows = random_tensor(&[256, 256], 3);
    bench_both(c, "dft_rows_256", || {
        black_box(dft(black_box(&rows), 1).unwrap());
    });

    let tile = random_tensor(&[64, 64], 4);
    let [kxx, _, _] = gaussian_second_derivative_kernels(3.0);
    bench_both(c, "conv2d_reflect_64_k19", || {
        black_box(conv2d_reflect(black_box(&tile), &kxx).unwrap());
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
