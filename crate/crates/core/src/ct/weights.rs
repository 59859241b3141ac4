//! Analytic fan-beam projection weights: cosine (ray obliquity) and Parker
//! short-scan redundancy weights.

use super::FanBeamGeometry;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::f64::consts::{FRAC_PI_4, PI};

/// Per-(angle, detector) multiplicative weights.
#[derive(Debug, Clone)]
pub struct WeightImage {
    /// Shape `[n_angles, n_det]`.
    pub values: Tensor,
    pub trainable: bool,
}

impl WeightImage {
    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }
}

/// Cosine weight `cos(gamma_j)` per detector column, identical for every view.
pub fn cosine_weights(g: &FanBeamGeometry) -> WeightImage {
    let [v, n] = g.sinogram_shape();
    let col: Vec<f64> = (0..n).map(|j| g.gamma(j).cos()).collect();
    let mut data = Vec::with_capacity(v * n);
    for _ in 0..v {
        data.extend_from_slice(&col);
    }
    WeightImage { values: Tensor::from_vec([v, n], data).unwrap(), trainable: false }
}

/// Parker short-scan redundancy weight for source angle `beta` and fan angle
/// `gamma`, on a scan over `[0, pi + 2*gamma_max]`.
///
/// The three regions blend the doubly measured wedges so that each line's two
/// measurements sum to one: `w(beta, gamma) + w(beta + pi + 2*gamma, -gamma) = 1`.
pub fn parker_weight(beta: f64, gamma: f64, gamma_max: f64) -> f64 {
    if beta < 0.0 || beta > PI + 2.0 * gamma_max {
        return 0.0;
    }
    let lo = (gamma_max - gamma).max(1e-12);
    let hi = (gamma_max + gamma).max(1e-12);
    let w = if beta <= 2.0 * (gamma_max - gamma) {
        let s = (FRAC_PI_4 * beta / lo).sin();
        s * s
    } else if beta <= PI - 2.0 * gamma {
        1.0
    } else {
        let s = (FRAC_PI_4 * (PI + 2.0 * gamma_max - beta) / hi).sin();
        s * s
    };
    w.clamp(0.0, 1.0)
}

/// Parker weights sampled on the geometry's (angle, detector) lattice.
///
/// Requires a short-scan-complete angular range.
pub fn parker_weights(g: &FanBeamGeometry) -> Result<WeightImage> {
    if !g.is_short_scan_complete() {
        return Err(Error::arg(format!(
            "Parker weights need an angular range of at least pi + 2*gamma_max = {:.4}, got {:.4}",
            PI + 2.0 * g.gamma_max(),
            g.angular_range
        )));
    }
    let [v, n] = g.sinogram_shape();
    let gm = g.gamma_max();
    let mut data = Vec::with_capacity(v * n);
    for view in 0..v {
        let beta = g.angles[view];
        for j in 0..n {
            data.push(parker_weight(beta, g.gamma(j), gm));
        }
    }
    Ok(WeightImage { values: Tensor::from_vec([v, n], data).unwrap(), trainable: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::ImageGrid;

    fn geom() -> FanBeamGeometry {
        FanBeamGeometry::short_scan_cover(3.0, 6.0, 180, 96, ImageGrid::square(64, 2.0 / 64.0))
            .unwrap()
    }

    #[test]
    fn cosine_is_one_at_center() {
        let g = FanBeamGeometry::short_scan_cover(3.0, 6.0, 10, 97, ImageGrid::square(64, 2.0 / 64.0))
            .unwrap(); // odd n_det => a bin sits exactly on the central ray
        let w = cosine_weights(&g);
        let central = (g.n_det - 1) / 2;
        assert!((w.values.real()[central] - 1.0).abs() < 1e-14);
        // Off-center weights strictly below one.
        assert!(w.values.real()[0] < 1.0);
    }

    #[test]
    fn parker_redundant_pairs_sum_to_one() {
        let g = geom();
        let gm = g.gamma_max();
        // Sweep the doubly measured region: conjugate of (beta, gamma) is
        // (beta + pi + 2*gamma, -gamma).
        let mut checked = 0usize;
        for i in 0..400 {
            let gamma = -gm + 2.0 * gm * (i as f64 + 0.5) / 400.0;
            for k in 0..200 {
                let beta = (PI + 2.0 * gm) * (k as f64 + 0.5) / 200.0;
                let beta_c = beta + PI + 2.0 * gamma;
                if beta_c <= PI + 2.0 * gm {
                    let s = parker_weight(beta, gamma, gm) + parker_weight(beta_c, -gamma, gm);
                    assert!((s - 1.0).abs() < 1e-6, "beta {beta} gamma {gamma}: sum {s}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000, "redundant region under-sampled ({checked})");
    }

    #[test]
    fn parker_in_unit_interval() {
        let g = geom();
        let w = parker_weights(&g).unwrap();
        assert!(w.values.real().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn parker_rejects_incomplete_scan() {
        let grid = ImageGrid::square(64, 2.0 / 64.0);
        let spacing = FanBeamGeometry::covering_det_spacing(3.0, 6.0, 96, &grid).unwrap();
        // Angular range pi is less than pi + 2*gamma_max.
        let g = FanBeamGeometry::with_range(3.0, 6.0, PI, 90, 96, spacing, grid).unwrap();
        assert!(parker_weights(&g).is_err());
    }
}
