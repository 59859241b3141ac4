//! Shared ray sampling for forward projection and back-projection.
//!
//! Both directions of each projector pair walk exactly the same sample
//! positions with exactly the same bilinear weights; the forward operator
//! gathers and the adjoint scatters. Matched adjointness is therefore a
//! property of construction, not of two implementations agreeing.

use super::{FanBeamGeometry, ImageGrid, ParallelGeometry};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ray {
    pub origin: [f64; 2],
    /// Unit direction.
    pub dir: [f64; 2],
}

impl Ray {
    /// Parameter interval where the ray intersects the circle of radius `r`
    /// around the origin, or `None` when it misses.
    fn clip_to_circle(&self, r: f64) -> Option<(f64, f64)> {
        let b = self.origin[0] * self.dir[0] + self.origin[1] * self.dir[1];
        let c = self.origin[0] * self.origin[0] + self.origin[1] * self.origin[1] - r * r;
        let disc = b * b - c;
        if disc <= 0.0 {
            return None;
        }
        let half = disc.sqrt();
        Some((-b - half, -b + half))
    }
}

pub(crate) fn parallel_ray(g: &ParallelGeometry, view: usize, det: usize) -> Ray {
    let theta = g.angles[view];
    let s = g.det_coord(det);
    let (sin, cos) = theta.sin_cos();
    Ray { origin: [s * cos, s * sin], dir: [-sin, cos] }
}

pub(crate) fn fan_ray(g: &FanBeamGeometry, view: usize, det: usize) -> Ray {
    let beta = g.angles[view];
    let (sin_b, cos_b) = beta.sin_cos();
    let source = [g.dsi * cos_b, g.dsi * sin_b];
    let a = g.det_coord(det);
    // Detector point = source + dsd * (toward origin) + a * (detector axis).
    let dx = -g.dsd * cos_b - a * sin_b;
    let dy = -g.dsd * sin_b + a * cos_b;
    let len = (dx * dx + dy * dy).sqrt();
    Ray { origin: source, dir: [dx / len, dy / len] }
}

/// Visit every (pixel, weight) pair of one ray's discretized line integral.
///
/// Sampling step is half the pixel spacing; each sample contributes its
/// bilinear interpolation weights multiplied by the step length.
pub(crate) fn for_each_sample<F: FnMut(usize, f64)>(grid: &ImageGrid, ray: &Ray, mut visit: F) {
    let step = grid.pixel_spacing / 2.0;
    let Some((t0, t1)) = ray.clip_to_circle(grid.support_radius()) else {
        return;
    };
    let n = ((t1 - t0) / step).floor() as usize;
    let cx = (grid.n_x as f64 - 1.0) / 2.0;
    let cy = (grid.n_y as f64 - 1.0) / 2.0;
    let inv = 1.0 / grid.pixel_spacing;
    for k in 0..n {
        let t = t0 + (k as f64 + 0.5) * step;
        let px = ray.origin[0] + t * ray.dir[0];
        let py = ray.origin[1] + t * ray.dir[1];
        // Fractional pixel coordinates.
        let fx = px * inv + cx;
        let fy = py * inv + cy;
        let ix = fx.floor();
        let iy = fy.floor();
        let wx = fx - ix;
        let wy = fy - iy;
        let (ix, iy) = (ix as isize, iy as isize);
        let mut add = |xx: isize, yy: isize, w: f64| {
            if xx >= 0 && yy >= 0 && (xx as usize) < grid.n_x && (yy as usize) < grid.n_y {
                visit(yy as usize * grid.n_x + xx as usize, w * step);
            }
        };
        add(ix, iy, (1.0 - wx) * (1.0 - wy));
        add(ix + 1, iy, wx * (1.0 - wy));
        add(ix, iy + 1, (1.0 - wx) * wy);
        add(ix + 1, iy + 1, wx * wy);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_misses_far_ray() {
        let ray = Ray { origin: [10.0, 0.0], dir: [0.0, 1.0] };
        assert!(ray.clip_to_circle(1.0).is_none());
    }

    #[test]
    fn clip_through_center() {
        let ray = Ray { origin: [-5.0, 0.0], dir: [1.0, 0.0] };
        let (t0, t1) = ray.clip_to_circle(2.0).unwrap();
        assert!((t0 - 3.0).abs() < 1e-12);
        assert!((t1 - 7.0).abs() < 1e-12);
    }

    #[test]
    fn weights_along_ray_sum_to_chord_length() {
        // A vertical ray through the middle of a uniform image integrates
        // (weight sum) to roughly the support chord it crosses.
        let grid = ImageGrid::square(32, 1.0 / 16.0);
        let ray = Ray { origin: [0.0, -5.0], dir: [0.0, 1.0] };
        let mut total = 0.0;
        for_each_sample(&grid, &ray, |_, w| total += w);
        // Chord of the grid square along x=0 is the full height (2.0).
        assert!((total - 2.0).abs() < 0.05, "total {total}");
    }
}
