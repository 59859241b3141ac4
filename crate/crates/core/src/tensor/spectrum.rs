//! Frequency-domain diagonal operators (circulant filter spectra).
//!
//! A spectrum that represents a real-valued circulant kernel must be
//! conjugate-symmetric. Trainable spectra are therefore parameterized by
//! exactly `n` real numbers: the real parts of bins `0..=n/2` and the
//! imaginary parts of the strictly paired bins. The codec below maps between
//! that parameter vector and the full complex spectrum, and folds a complex
//! cotangent back onto the real parameters.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Complex diagonal in the frequency domain, applied along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<Complex64>,
    axis: usize,
    real_kernel: bool,
}

impl Spectrum {
    /// Unconstrained complex spectrum.
    pub fn new(values: Vec<Complex64>, axis: usize) -> Self {
        Spectrum { values, axis, real_kernel: false }
    }

    /// Spectrum of a real circulant kernel; validates conjugate symmetry.
    pub fn real_kernel(values: Vec<Complex64>, axis: usize) -> Result<Self> {
        let n = values.len();
        let scale = values.iter().fold(1e-300f64, |m, z| m.max(z.norm()));
        for k in 0..n {
            let pair = values[(n - k) % n].conj();
            if (values[k] - pair).norm() > 1e-9 * scale {
                return Err(Error::arg(format!(
                    "spectrum not conjugate-symmetric at bin {k}"
                )));
            }
        }
        Ok(Spectrum { values, axis, real_kernel: true })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn is_real_kernel(&self) -> bool {
        self.real_kernel
    }
}

/// Number of real parameters for a conjugate-symmetric spectrum of length `n`.
pub fn sym_param_count(n: usize) -> usize {
    n
}

fn split(n: usize) -> (usize, bool) {
    (n / 2, n % 2 == 0)
}

/// Expand `n` real parameters into a conjugate-symmetric complex spectrum.
pub fn sym_decode(params: &[f64]) -> Vec<Complex64> {
    let n = params.len();
    let (m, even) = split(n);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..=m.min(n.saturating_sub(1)) {
        let re = params[k];
        let im = if k == 0 || (even && k == m) { 0.0 } else { params[m + k] };
        out[k] = Complex64::new(re, im);
        if k != 0 && (n - k) != k {
            out[n - k] = Complex64::new(re, -im);
        }
    }
    out
}

/// Inverse of [`sym_decode`]; fails if the spectrum is not conjugate-symmetric.
pub fn sym_encode(spectrum: &[Complex64]) -> Result<Vec<f64>> {
    let n = spectrum.len();
    let (m, even) = split(n);
    let scale = spectrum.iter().fold(1e-300f64, |mx, z| mx.max(z.norm()));
    for k in 0..n {
        if (spectrum[k] - spectrum[(n - k) % n].conj()).norm() > 1e-9 * scale {
            return Err(Error::arg(format!("bin {k} breaks conjugate symmetry")));
        }
    }
    let mut params = vec![0.0; n];
    for k in 0..=m.min(n.saturating_sub(1)) {
        params[k] = spectrum[k].re;
        if k != 0 && !(even && k == m) {
            params[m + k] = spectrum[k].im;
        }
    }
    Ok(params)
}

/// Fold the cotangent of the full complex spectrum back onto the `n` real
/// parameters of the symmetric parameterization.
pub fn sym_fold_cotangent(cotangent: &[Complex64]) -> Vec<f64> {
    let n = cotangent.len();
    let (m, even) = split(n);
    let mut grad = vec![0.0; n];
    for k in 0..=m.min(n.saturating_sub(1)) {
        if k == 0 || (even && k == m) {
            grad[k] = cotangent[k].re;
        } else {
            grad[k] = cotangent[k].re + cotangent[n - k].re;
            grad[m + k] = cotangent[k].im - cotangent[n - k].im;
        }
    }
    grad
}
