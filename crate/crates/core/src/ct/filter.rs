//! Reconstruction filtering: the band-limited ramp (Ram-Lak) kernel and the
//! row-wise circulant filter operator with a trainable conjugate-symmetric
//! spectrum.
//!
//! The ramp is defined by the standard spatial-domain sampling
//! `h(0) = 1/(4 ds^2)`, `h(m) = -1/(pi^2 m^2 ds^2)` for odd `m`, zero for even
//! `m`; its transform over the infinite tap sequence is exactly `|nu|` on the
//! band, so the spectrum is stored as `|nu_k|` with a zero DC bin (equal to
//! the spatial kernel sum).

use crate::error::{Error, Result};
use crate::graph::GraphOp;
use crate::tensor::{
    dft, inverse_dft, sym_decode, sym_fold_cotangent, Spectrum, Tensor,
};
use num_complex::Complex64;
use serde_json::json;

/// Frequency-domain circulant reconstruction kernel for one detector row.
#[derive(Debug, Clone)]
pub struct FilterKernel {
    pub spectrum: Spectrum,
    pub trainable: bool,
    /// Detector sampling distance the spectrum was built for.
    pub spacing: f64,
}

/// Operator eigenvalues `|nu_k|` of the band-limited ramp on `n` samples at
/// spacing `ds` (cycles per unit length, circulant/DFT ordering).
pub fn ramp_spectrum(n: usize, ds: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let m = k.min(n - k) as f64;
            m / (n as f64 * ds) // |nu_k|
        })
        .collect()
}

/// Ram-Lak [`FilterKernel`] for `n_det` bins at detector spacing `ds`.
pub fn ramp_filter(n_det: usize, ds: f64) -> FilterKernel {
    let values: Vec<Complex64> =
        ramp_spectrum(n_det, ds).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    FilterKernel {
        spectrum: Spectrum::real_kernel(values, 1).expect("ramp spectrum is real and even"),
        trainable: false,
        spacing: ds,
    }
}

/// Ramp filter matched to a parallel geometry's detector spacing.
pub fn ramp_filter_parallel(g: &super::ParallelGeometry) -> FilterKernel {
    ramp_filter(g.n_det, g.det_spacing)
}

/// Ramp filter for a fan geometry; filtering runs at the detector spacing
/// re-projected to the isocenter.
pub fn ramp_filter_fan(g: &super::FanBeamGeometry) -> FilterKernel {
    ramp_filter(g.n_det, g.virtual_det_spacing())
}

/// Filter every row of a `[views, n_det]` sinogram with a circulant kernel.
pub fn apply_filter(sino: &Tensor, kernel: &FilterKernel) -> Result<Tensor> {
    apply_spectrum_rows(sino, kernel.spectrum.values())
}

pub(crate) fn apply_spectrum_rows(sino: &Tensor, spec: &[Complex64]) -> Result<Tensor> {
    if sino.rank() != 2 || sino.shape()[1] != spec.len() {
        return Err(Error::shape(format!(
            "sinogram shape {:?} incompatible with filter length {}",
            sino.shape(),
            spec.len()
        )));
    }
    let freq = dft(sino, 1)?;
    let n = spec.len();
    let mixed: Vec<Complex64> = freq
        .complex()
        .iter()
        .enumerate()
        .map(|(i, &v)| v * spec[i % n])
        .collect();
    let filtered = inverse_dft(&Tensor::from_complex_vec(sino.shape().to_vec(), mixed)?, 1)?;
    Ok(filtered.real_part())
}

/// Circulant filter graph operator. Inputs: `[x [views, n], c_params [n]]`
/// where `c_params` is the real parameterization of a conjugate-symmetric
/// spectrum shared across all rows (one reconstruction filter).
#[derive(Debug, Clone)]
pub struct CirculantFilterOp {
    pub n: usize,
}

impl GraphOp for CirculantFilterOp {
    fn name(&self) -> &'static str {
        "circulant_filter"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        if inputs.len() != 2 {
            return Err(Error::arg("circulant_filter expects [x, c_params]"));
        }
        let (x, params) = (inputs[0], inputs[1]);
        if params.shape() != [self.n] {
            return Err(Error::shape(format!(
                "filter parameters must have shape [{}], got {:?}",
                self.n,
                params.shape()
            )));
        }
        let spec = sym_decode(params.try_real()?);
        apply_spectrum_rows(x, &spec)
    }

    fn vjp(
        &self,
        input_index: usize,
        inputs: &[&Tensor],
        _: &Tensor,
        cotangent: &Tensor,
    ) -> Result<Tensor> {
        let (x, params) = (inputs[0], inputs[1]);
        match input_index {
            0 => {
                // Adjoint of a circulant filter: same filter, conjugate spectrum.
                let spec: Vec<Complex64> =
                    sym_decode(params.real()).iter().map(|z| z.conj()).collect();
                apply_spectrum_rows(cotangent, &spec)
            }
            1 => {
                // d/dc of y = F^H (c . F x): cotangent of bin k accumulates
                // (F g)_k * conj((F x)_k) over rows, then folds to the real
                // parameterization.
                let gx = dft(cotangent, 1)?;
                let fx = dft(x, 1)?;
                let n = self.n;
                let rows = x.shape()[0];
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                let (gv, xv) = (gx.complex(), fx.complex());
                for r in 0..rows {
                    for k in 0..n {
                        acc[k] += gv[r * n + k] * xv[r * n + k].conj();
                    }
                }
                Tensor::from_vec([n], sym_fold_cotangent(&acc))
            }
            _ => Err(Error::arg("circulant_filter has two inputs")),
        }
    }

    fn describe(&self) -> serde_json::Value {
        json!({"op": "circulant_filter", "n": self.n})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn ramp_kills_constant_rows() {
        let k = ramp_filter(128, 0.01);
        let sino = Tensor::filled([3, 128], 2.5);
        let out = apply_filter(&sino, &k).unwrap();
        let peak = out.real().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 1e-6 * 2.5, "constant row response {peak}");
    }

    #[test]
    fn ramp_dc_equals_spatial_kernel_sum() {
        // The spectrum is the transform of the ideal band-limited ramp taps,
        // whose total sum vanishes; the DC bin must therefore be zero, and it
        // must equal the sum of the spatial taps recovered by inverse DFT.
        let n = 64;
        let k = ramp_filter(n, 0.5);
        let dc = k.spectrum.values()[0];
        assert_eq!(dc, Complex64::new(0.0, 0.0));
        let spec_t = Tensor::from_complex_vec([n], k.spectrum.values().to_vec()).unwrap();
        let taps = inverse_dft(&spec_t, 0).unwrap();
        let sum: Complex64 = taps.complex().iter().sum();
        // sum of taps = sqrt(n) * DC of unitary DFT = DC eigenvalue
        assert!(sum.norm() < 1e-12);
    }

    #[test]
    fn ramp_magnitude_monotone_to_nyquist() {
        let k = ramp_filter(101, 0.037);
        let v = k.spectrum.values();
        for i in 1..=50 {
            assert!(
                v[i].norm() >= v[i - 1].norm() - 1e-9,
                "bin {i}: {} < {}",
                v[i].norm(),
                v[i - 1].norm()
            );
        }
    }

    #[test]
    fn real_input_stays_real() {
        let mut rng = SeededRng::new(17);
        let sino =
            Tensor::from_vec([2, 63], (0..126).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
        let k = ramp_filter(63, 0.02);
        // Filter through the complex path and measure the imaginary residue.
        let freq = dft(&sino, 1).unwrap();
        let mixed: Vec<Complex64> = freq
            .complex()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * k.spectrum.values()[i % 63])
            .collect();
        let out = inverse_dft(&Tensor::from_complex_vec([2, 63], mixed).unwrap(), 1).unwrap();
        assert!(out.max_imag() < 1e-10);
    }

    #[test]
    fn filter_linearity() {
        let mut rng = SeededRng::new(3);
        let a = Tensor::from_vec([1, 32], (0..32).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let b = Tensor::from_vec([1, 32], (0..32).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let k = ramp_filter(32, 0.1);
        let lhs = apply_filter(&a.scale(2.0).add(&b.scale(-0.5)).unwrap(), &k).unwrap();
        let rhs = apply_filter(&a, &k)
            .unwrap()
            .scale(2.0)
            .add(&apply_filter(&b, &k).unwrap().scale(-0.5))
            .unwrap();
        let diff = crate::tensor::norm(&lhs.sub(&rhs).unwrap(), crate::tensor::NormP::Inf);
        assert!(diff < 1e-10);
    }
}
