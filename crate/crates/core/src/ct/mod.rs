//! 2-D computed-tomography operators.
//!
//! Parallel-beam and flat-detector fan-beam projectors with exactly matched
//! adjoints, short-scan redundancy (Parker) and cosine weights, the band-limited
//! ramp filter, and the trainable filtered back-projection network
//! `y = relu(Aᵀ K W x)`.

mod fbp;
mod filter;
mod project;
mod ray;
mod weights;

pub use fbp::{analytic_fan_weights, fan_adjoint_scale, fbp_network, fbp_reconstruct,
    parallel_adjoint_scale, train_limited_angle, wedge_view_range, zero_wedge, FbpFlags,
    FbpNetwork, LimitedAngleConfig, LimitedAngleOutcome};
pub use filter::{apply_filter, ramp_filter, ramp_filter_fan, ramp_filter_parallel,
    ramp_spectrum, CirculantFilterOp, FilterKernel};
pub use project::{
    backproject_fan, backproject_parallel, project_fan, project_parallel, BackprojectFanOp,
    BackprojectParallelOp, ProjectFanOp, ProjectParallelOp,
};
pub use weights::{cosine_weights, parker_weight, parker_weights, WeightImage};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Square-pixel reconstruction grid centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub n_x: usize,
    pub n_y: usize,
    pub pixel_spacing: f64,
}

impl ImageGrid {
    pub fn square(n: usize, pixel_spacing: f64) -> Self {
        ImageGrid { n_x: n, n_y: n, pixel_spacing }
    }

    pub fn n_pixels(&self) -> usize {
        self.n_x * self.n_y
    }

    /// Length of the grid diagonal in world units.
    pub fn diagonal(&self) -> f64 {
        let w = self.n_x as f64 * self.pixel_spacing;
        let h = self.n_y as f64 * self.pixel_spacing;
        (w * w + h * h).sqrt()
    }

    /// Radius that encloses every pixel, with a small sampling margin.
    pub fn support_radius(&self) -> f64 {
        self.diagonal() / 2.0 + self.pixel_spacing
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::arg("image grid has zero extent"));
        }
        if !(self.pixel_spacing > 0.0) {
            return Err(Error::arg("pixel spacing must be positive"));
        }
        Ok(())
    }
}

/// Parallel-beam acquisition: `n_angles` views of `n_det` equally spaced
/// detector bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelGeometry {
    pub angles: Vec<f64>,
    pub n_det: usize,
    pub det_spacing: f64,
    pub grid: ImageGrid,
}

impl ParallelGeometry {
    /// Uniform angles over `[0, pi)`.
    pub fn uniform(n_angles: usize, n_det: usize, det_spacing: f64, grid: ImageGrid) -> Result<Self> {
        let angles = (0..n_angles)
            .map(|k| std::f64::consts::PI * k as f64 / n_angles as f64)
            .collect();
        let g = ParallelGeometry { angles, n_det, det_spacing, grid };
        g.validate()?;
        Ok(g)
    }

    pub fn with_angles(
        angles: Vec<f64>,
        n_det: usize,
        det_spacing: f64,
        grid: ImageGrid,
    ) -> Result<Self> {
        let g = ParallelGeometry { angles, n_det, det_spacing, grid };
        g.validate()?;
        Ok(g)
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn sinogram_shape(&self) -> [usize; 2] {
        [self.angles.len(), self.n_det]
    }

    /// Signed detector coordinate of bin `j`.
    pub fn det_coord(&self, j: usize) -> f64 {
        (j as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.det_spacing
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.angles.is_empty() {
            return Err(Error::arg("need at least one projection angle"));
        }
        if !(self.det_spacing > 0.0) {
            return Err(Error::arg("detector spacing must be positive"));
        }
        let span = self.n_det as f64 * self.det_spacing;
        if span < self.grid.diagonal() {
            return Err(Error::arg(format!(
                "detector span {span:.4} does not cover the image diagonal {:.4}",
                self.grid.diagonal()
            )));
        }
        Ok(())
    }
}

/// Flat-detector fan-beam acquisition. The source rotates on a circle of
/// radius `dsi`; the detector line sits `dsd` from the source, perpendicular
/// to the central ray. Detector coordinates are measured on the physical
/// detector; the fan angle of bin `j` is `atan(a_j / dsd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanBeamGeometry {
    pub dsi: f64,
    pub dsd: f64,
    pub angles: Vec<f64>,
    pub angular_range: f64,
    pub n_det: usize,
    pub det_spacing: f64,
    pub grid: ImageGrid,
}

impl FanBeamGeometry {
    /// Short scan: source angles uniform over `[0, pi + 2*gamma_max)`.
    pub fn short_scan(
        dsi: f64,
        dsd: f64,
        n_angles: usize,
        n_det: usize,
        det_spacing: f64,
        grid: ImageGrid,
    ) -> Result<Self> {
        let gamma_max = ((n_det as f64 * det_spacing / 2.0) / dsd).atan();
        let range = std::f64::consts::PI + 2.0 * gamma_max;
        Self::with_range(dsi, dsd, range, n_angles, n_det, det_spacing, grid)
    }

    /// Short scan with the detector spacing chosen so the fan covers the
    /// image support circle with a 6% margin.
    pub fn short_scan_cover(
        dsi: f64,
        dsd: f64,
        n_angles: usize,
        n_det: usize,
        grid: ImageGrid,
    ) -> Result<Self> {
        let spacing = Self::covering_det_spacing(dsi, dsd, n_det, &grid)?;
        Self::short_scan(dsi, dsd, n_angles, n_det, spacing, grid)
    }

    /// Detector spacing that makes `n_det` bins span the image support fan.
    pub fn covering_det_spacing(dsi: f64, dsd: f64, n_det: usize, grid: &ImageGrid) -> Result<f64> {
        let ratio = (grid.diagonal() / 2.0) / dsi;
        if ratio >= 1.0 {
            return Err(Error::arg(format!(
                "source circle radius {dsi} lies inside the image support"
            )));
        }
        let half_width = dsd * ratio.asin().tan() * 1.06;
        Ok(2.0 * half_width / n_det as f64)
    }

    /// Full rotation over `[0, 2*pi)`.
    pub fn full_scan(
        dsi: f64,
        dsd: f64,
        n_angles: usize,
        n_det: usize,
        det_spacing: f64,
        grid: ImageGrid,
    ) -> Result<Self> {
        Self::with_range(dsi, dsd, std::f64::consts::TAU, n_angles, n_det, det_spacing, grid)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_range(
        dsi: f64,
        dsd: f64,
        angular_range: f64,
        n_angles: usize,
        n_det: usize,
        det_spacing: f64,
        grid: ImageGrid,
    ) -> Result<Self> {
        let angles = (0..n_angles)
            .map(|k| angular_range * k as f64 / n_angles as f64)
            .collect();
        let g = FanBeamGeometry { dsi, dsd, angles, angular_range, n_det, det_spacing, grid };
        g.validate()?;
        Ok(g)
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn sinogram_shape(&self) -> [usize; 2] {
        [self.angles.len(), self.n_det]
    }

    pub fn det_coord(&self, j: usize) -> f64 {
        (j as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.det_spacing
    }

    /// Fan angle of detector bin `j`.
    pub fn gamma(&self, j: usize) -> f64 {
        (self.det_coord(j) / self.dsd).atan()
    }

    /// Fan half-angle subtended by the detector edge.
    pub fn gamma_max(&self) -> f64 {
        ((self.n_det as f64 * self.det_spacing / 2.0) / self.dsd).atan()
    }

    /// Angular step between source positions.
    pub fn delta_beta(&self) -> f64 {
        self.angular_range / self.angles.len() as f64
    }

    /// Detector spacing re-projected to the isocenter.
    pub fn virtual_det_spacing(&self) -> f64 {
        self.det_spacing * self.dsi / self.dsd
    }

    /// True when the scan range covers `pi + 2*gamma_max` (Parker-complete).
    pub fn is_short_scan_complete(&self) -> bool {
        self.angular_range + 1e-9 >= std::f64::consts::PI + 2.0 * self.gamma_max()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.dsd > self.dsi && self.dsi > 0.0) {
            return Err(Error::arg(format!(
                "need dsd > dsi > 0, got dsi={} dsd={}",
                self.dsi, self.dsd
            )));
        }
        if self.angles.is_empty() {
            return Err(Error::arg("need at least one source angle"));
        }
        if !(self.det_spacing > 0.0) {
            return Err(Error::arg("detector spacing must be positive"));
        }
        // The fan must cover the image support circle.
        let need = (self.grid.diagonal() / 2.0) / self.dsi;
        if need < 1.0 && self.gamma_max() < need.asin() {
            return Err(Error::arg(format!(
                "detector fan angle {:.4} rad does not cover the image support ({:.4} rad needed)",
                self.gamma_max(),
                need.asin()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_fov_check() {
        let grid = ImageGrid::square(64, 2.0 / 64.0);
        assert!(ParallelGeometry::uniform(10, 16, 0.01, grid.clone()).is_err());
        assert!(ParallelGeometry::uniform(10, 96, 0.03125, grid).is_ok());
    }

    #[test]
    fn short_scan_range() {
        let grid = ImageGrid::square(32, 2.0 / 32.0);
        let g = FanBeamGeometry::short_scan(4.0, 8.0, 64, 64, 0.1, grid).unwrap();
        assert!(g.is_short_scan_complete());
        assert!((g.angular_range - (std::f64::consts::PI + 2.0 * g.gamma_max())).abs() < 1e-12);
    }

    #[test]
    fn fan_geometry_ordering_enforced() {
        let grid = ImageGrid::square(32, 2.0 / 32.0);
        assert!(FanBeamGeometry::short_scan(8.0, 4.0, 64, 64, 0.1, grid).is_err());
    }
}
