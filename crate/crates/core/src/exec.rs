//! Data-parallel execution helpers.
//!
//! Hot loops (projector rays, DFT batches, elementwise kernels, grid sweeps)
//! run through these functions. With the `parallel` feature they dispatch to
//! rayon; without it they run sequentially. Work is always partitioned into a
//! fixed number of chunks and partial results are combined in chunk order, so
//! results are bit-identical regardless of thread count or feature selection.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed partition width for reductions and scatter accumulation.
/// Independent of the thread pool size on purpose.
pub const CHUNKS: usize = 8;

/// Ordered map over `0..n`, parallel when enabled.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential variant of [`map_collect`], available in every build.
pub fn map_collect_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Mutate `data` in place, chunk by chunk. `f` receives the chunk's starting
/// offset and the chunk slice.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    let len = data.len();
    if len == 0 {
        return;
    }
    let chunk = len.div_ceil(CHUNKS);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i * chunk, c));
    }
}

/// Scatter-accumulate: each of `n_items` work items adds into a shared
/// accumulator of length `len`. Items are partitioned into [`CHUNKS`] fixed
/// ranges; each range scatters into a private buffer and the buffers are
/// summed in range order, which keeps the result independent of scheduling.
pub fn accumulate<F>(n_items: usize, len: usize, scatter: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    if n_items == 0 {
        return vec![0.0; len];
    }
    let per = n_items.div_ceil(CHUNKS);
    let ranges: Vec<(usize, usize)> = (0..n_items)
        .step_by(per)
        .map(|s| (s, (s + per).min(n_items)))
        .collect();
    let run = |&(lo, hi): &(usize, usize)| -> Vec<f64> {
        let mut buf = vec![0.0; len];
        for item in lo..hi {
            scatter(item, &mut buf);
        }
        buf
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> = ranges.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = ranges.iter().map(run).collect();

    let mut out = vec![0.0; len];
    for p in &partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// Deterministic sum: fixed chunking, partials added in order.
pub fn sum(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let chunk = xs.len().div_ceil(CHUNKS);
    let partial = |c: &[f64]| c.iter().sum::<f64>();
    #[cfg(feature = "parallel")]
    let parts: Vec<f64> = xs.par_chunks(chunk).map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<f64> = xs.chunks(chunk).map(partial).collect();
    parts.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_matches_seq() {
        let a = map_collect(100, |i| (i as f64).sin());
        let b = map_collect_seq(100, |i| (i as f64).sin());
        assert_eq!(a, b);
    }

    #[test]
    fn accumulate_is_deterministic() {
        let f = |item: usize, buf: &mut [f64]| {
            for (j, b) in buf.iter_mut().enumerate() {
                *b += ((item * 31 + j) as f64).cos();
            }
        };
        let a = accumulate(37, 64, f);
        let b = accumulate(37, 64, f);
        assert_eq!(a, b);
    }

    #[test]
    fn sum_matches_rerun_bitwise() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) as f64).sin() * 1e-3).collect();
        assert_eq!(sum(&xs).to_bits(), sum(&xs).to_bits());
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(sum(&[]), 0.0);
        assert_eq!(accumulate(0, 3, |_, _| {}), vec![0.0; 3]);
    }
}
