//! Unitary discrete Fourier transform along one tensor axis.
//!
//! Both directions scale by 1/sqrt(n), so the adjoint of the forward
//! transform is exactly the inverse. Arbitrary lengths are supported
//! (rustfft falls back to Bluestein for primes). Rows are transformed
//! independently and may run in parallel.

use super::{strides, Tensor};
use crate::error::{Error, Result};
use crate::exec;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

fn transform(t: &Tensor, axis: usize, inverse: bool) -> Result<Tensor> {
    let shape = t.shape();
    if axis >= shape.len() {
        return Err(Error::arg(format!(
            "axis {axis} out of range for rank {}",
            shape.len()
        )));
    }
    let n = shape[axis];
    if n == 0 {
        return Err(Error::arg("cannot transform along empty axis"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut data = t.to_complex();

    let st = strides(shape);
    let axis_stride = st[axis];

    if axis_stride == 1 {
        // Contiguous rows: transform in place, one row per work item.
        let fft = plan(n, inverse);
        let n_rows = data.len() / n;
        let rows: Vec<Vec<Complex64>> = exec::map_collect(n_rows, |r| {
            let mut row = data[r * n..(r + 1) * n].to_vec();
            fft.process(&mut row);
            for v in &mut row {
                *v *= scale;
            }
            row
        });
        for (r, row) in rows.into_iter().enumerate() {
            data[r * n..(r + 1) * n].copy_from_slice(&row);
        }
    } else {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let fft = plan(n, inverse);
        let lines: Vec<(usize, Vec<Complex64>)> = exec::map_collect(outer * inner, |li| {
            let (o, i) = (li / inner, li % inner);
            let base = o * n * inner + i;
            let mut line: Vec<Complex64> = (0..n).map(|k| data[base + k * inner]).collect();
            fft.process(&mut line);
            for v in &mut line {
                *v *= scale;
            }
            (base, line)
        });
        for (base, line) in lines {
            for (k, v) in line.into_iter().enumerate() {
                data[base + k * inner] = v;
            }
        }
    }
    Tensor::from_complex_vec(shape.to_vec(), data)
}

/// Forward unitary DFT along `axis`.
pub fn dft(t: &Tensor, axis: usize) -> Result<Tensor> {
    transform(t, axis, false)
}

/// Inverse unitary DFT along `axis`.
pub fn inverse_dft(t: &Tensor, axis: usize) -> Result<Tensor> {
    transform(t, axis, true)
}
