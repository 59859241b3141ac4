//! Forward projectors and their matched adjoints, plus graph operator
//! wrappers whose backward rules are exactly the transposed operators.

use super::ray::{fan_ray, for_each_sample, parallel_ray};
use super::{FanBeamGeometry, ParallelGeometry};
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::GraphOp;
use crate::tensor::Tensor;
use serde_json::json;
use std::sync::Arc;

fn check_image(t: &Tensor, n_y: usize, n_x: usize) -> Result<()> {
    if t.shape() != [n_y, n_x] {
        return Err(Error::shape(format!(
            "image shape {:?} does not match grid [{n_y}, {n_x}]",
            t.shape()
        )));
    }
    Ok(())
}

fn check_sino(t: &Tensor, shape: [usize; 2]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::shape(format!(
            "sinogram shape {:?} does not match geometry {:?}",
            t.shape(),
            shape
        )));
    }
    Ok(())
}

/// Ray-driven line integrals over a parallel-beam geometry.
pub fn project_parallel(img: &Tensor, g: &ParallelGeometry) -> Result<Tensor> {
    check_image(img, g.grid.n_y, g.grid.n_x)?;
    let x = img.try_real()?;
    let rows = exec::map_collect(g.n_angles(), |view| {
        let mut row = vec![0.0; g.n_det];
        for (det, r) in row.iter_mut().enumerate() {
            let ray = parallel_ray(g, view, det);
            let mut acc = 0.0;
            for_each_sample(&g.grid, &ray, |idx, w| acc += w * x[idx]);
            *r = acc;
        }
        row
    });
    Tensor::from_vec(g.sinogram_shape(), rows.concat())
}

/// Exact adjoint of [`project_parallel`]: the same sample weights, scattered.
pub fn backproject_parallel(sino: &Tensor, g: &ParallelGeometry) -> Result<Tensor> {
    check_sino(sino, g.sinogram_shape())?;
    let y = sino.try_real()?;
    let img = exec::accumulate(g.n_angles(), g.grid.n_pixels(), |view, buf| {
        for det in 0..g.n_det {
            let v = y[view * g.n_det + det];
            if v == 0.0 {
                continue;
            }
            let ray = parallel_ray(g, view, det);
            for_each_sample(&g.grid, &ray, |idx, w| buf[idx] += w * v);
        }
    });
    Tensor::from_vec([g.grid.n_y, g.grid.n_x], img)
}

/// Ray-driven line integrals over a flat-detector fan-beam geometry.
pub fn project_fan(img: &Tensor, g: &FanBeamGeometry) -> Result<Tensor> {
    check_image(img, g.grid.n_y, g.grid.n_x)?;
    let x = img.try_real()?;
    let rows = exec::map_collect(g.n_angles(), |view| {
        let mut row = vec![0.0; g.n_det];
        for (det, r) in row.iter_mut().enumerate() {
            let ray = fan_ray(g, view, det);
            let mut acc = 0.0;
            for_each_sample(&g.grid, &ray, |idx, w| acc += w * x[idx]);
            *r = acc;
        }
        row
    });
    Tensor::from_vec(g.sinogram_shape(), rows.concat())
}

/// Exact adjoint of [`project_fan`].
pub fn backproject_fan(sino: &Tensor, g: &FanBeamGeometry) -> Result<Tensor> {
    check_sino(sino, g.sinogram_shape())?;
    let y = sino.try_real()?;
    let img = exec::accumulate(g.n_angles(), g.grid.n_pixels(), |view, buf| {
        for det in 0..g.n_det {
            let v = y[view * g.n_det + det];
            if v == 0.0 {
                continue;
            }
            let ray = fan_ray(g, view, det);
            for_each_sample(&g.grid, &ray, |idx, w| buf[idx] += w * v);
        }
    });
    Tensor::from_vec([g.grid.n_y, g.grid.n_x], img)
}

macro_rules! projector_op {
    ($fwd_op:ident, $adj_op:ident, $geom:ty, $fwd:ident, $adj:ident, $fwd_name:literal, $adj_name:literal) => {
        /// Graph operator; the vjp is the matched adjoint.
        #[derive(Debug, Clone)]
        pub struct $fwd_op(pub Arc<$geom>);

        impl GraphOp for $fwd_op {
            fn name(&self) -> &'static str {
                $fwd_name
            }
            fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
                if inputs.len() != 1 {
                    return Err(Error::arg(concat!($fwd_name, " expects one input")));
                }
                $fwd(inputs[0], &self.0)
            }
            fn vjp(
                &self,
                _: usize,
                _: &[&Tensor],
                _: &Tensor,
                cotangent: &Tensor,
            ) -> Result<Tensor> {
                $adj(cotangent, &self.0)
            }
            fn describe(&self) -> serde_json::Value {
                json!({"op": $fwd_name, "n_angles": self.0.n_angles(), "n_det": self.0.n_det})
            }
        }

        /// Graph operator; the vjp is the matched forward operator.
        #[derive(Debug, Clone)]
        pub struct $adj_op(pub Arc<$geom>);

        impl GraphOp for $adj_op {
            fn name(&self) -> &'static str {
                $adj_name
            }
            fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
                if inputs.len() != 1 {
                    return Err(Error::arg(concat!($adj_name, " expects one input")));
                }
                $adj(inputs[0], &self.0)
            }
            fn vjp(
                &self,
                _: usize,
                _: &[&Tensor],
                _: &Tensor,
                cotangent: &Tensor,
            ) -> Result<Tensor> {
                $fwd(cotangent, &self.0)
            }
            fn describe(&self) -> serde_json::Value {
                json!({"op": $adj_name, "n_angles": self.0.n_angles(), "n_det": self.0.n_det})
            }
        }
    };
}

projector_op!(
    ProjectParallelOp,
    BackprojectParallelOp,
    ParallelGeometry,
    project_parallel,
    backproject_parallel,
    "project_parallel",
    "backproject_parallel"
);

projector_op!(
    ProjectFanOp,
    BackprojectFanOp,
    FanBeamGeometry,
    project_fan,
    backproject_fan,
    "project_fan",
    "backproject_fan"
);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::ImageGrid;
    use crate::phantom::disk_image;
    use crate::rng::SeededRng;
    use crate::tensor::dot;

    fn grid64() -> ImageGrid {
        ImageGrid::square(64, 2.0 / 64.0)
    }

    fn par_geom() -> ParallelGeometry {
        ParallelGeometry::uniform(48, 96, 2.0 * 1.5 / 96.0, grid64()).unwrap()
    }

    fn fan_geom() -> FanBeamGeometry {
        FanBeamGeometry::short_scan_cover(3.0, 6.0, 60, 96, grid64()).unwrap()
    }

    fn random_tensor(shape: [usize; 2], seed: u64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        let n = shape[0] * shape[1];
        Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn adjoint_discrepancy<A, B>(fwd: A, adj: B, img_shape: [usize; 2], sino_shape: [usize; 2], seed: u64) -> f64
    where
        A: Fn(&Tensor) -> Tensor,
        B: Fn(&Tensor) -> Tensor,
    {
        let x = random_tensor(img_shape, seed);
        let y = random_tensor(sino_shape, seed + 1000);
        let ax = fwd(&x);
        let aty = adj(&y);
        let lhs = dot(&ax, &y).unwrap();
        let rhs = dot(&x, &aty).unwrap();
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
    }

    #[test]
    fn parallel_adjoint_dot_product() {
        let g = par_geom();
        for seed in [1, 2, 3] {
            let d = adjoint_discrepancy(
                |x| project_parallel(x, &g).unwrap(),
                |y| backproject_parallel(y, &g).unwrap(),
                [64, 64],
                g.sinogram_shape(),
                seed,
            );
            assert!(d < 1e-4, "seed {seed}: adjoint discrepancy {d}");
        }
    }

    #[test]
    fn fan_adjoint_dot_product() {
        let g = fan_geom();
        for seed in [4, 5, 6] {
            let d = adjoint_discrepancy(
                |x| project_fan(x, &g).unwrap(),
                |y| backproject_fan(y, &g).unwrap(),
                [64, 64],
                g.sinogram_shape(),
                seed,
            );
            assert!(d < 1e-4, "seed {seed}: adjoint discrepancy {d}");
        }
    }

    #[test]
    fn zero_image_projects_to_zero() {
        let g = par_geom();
        let sino = project_parallel(&Tensor::zeros([64, 64]), &g).unwrap();
        assert!(sino.real().iter().all(|&v| v == 0.0));
        let gf = fan_geom();
        let sino = project_fan(&Tensor::zeros([64, 64]), &gf).unwrap();
        assert!(sino.real().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_sinogram_backprojects_to_zero() {
        let g = par_geom();
        let img = backproject_parallel(&Tensor::zeros(g.sinogram_shape()), &g).unwrap();
        assert!(img.real().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disk_projection_matches_chord_length() {
        // Uniform unit disk of radius r: the line at offset s has integral
        // 2*sqrt(r^2 - s^2).
        let g = ParallelGeometry::uniform(4, 160, 2.0 * 1.5 / 160.0, ImageGrid::square(160, 2.0 / 160.0))
            .unwrap();
        let r = 0.6;
        let img = disk_image(&g.grid, r, 1.0);
        let sino = project_parallel(&img, &g).unwrap();
        for view in 0..g.n_angles() {
            for det in 0..g.n_det {
                let s = g.det_coord(det);
                if s.abs() <= 0.9 * r {
                    let expected = 2.0 * (r * r - s * s).sqrt();
                    let got = sino.real()[view * g.n_det + det];
                    let rel = (got - expected).abs() / expected;
                    assert!(rel < 0.01, "view {view} det {det}: got {got}, want {expected}");
                }
            }
        }
    }

    #[test]
    fn center_pixel_peaks_at_central_bin() {
        let g = par_geom();
        let mut img = vec![0.0; 64 * 64];
        // 2x2 block around the exact center (grid center falls between pixels).
        for (ix, iy) in [(31, 31), (32, 31), (31, 32), (32, 32)] {
            img[iy * 64 + ix] = 1.0;
        }
        let sino = project_parallel(&Tensor::from_vec([64, 64], img).unwrap(), &g).unwrap();
        let v = sino.real();
        for view in 0..g.n_angles() {
            let row = &v[view * g.n_det..(view + 1) * g.n_det];
            let (best, _) = row
                .iter()
                .enumerate()
                .fold((0usize, f64::MIN), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) });
            let center = (g.n_det - 1) / 2;
            assert!(
                (best as isize - center as isize).abs() <= 1,
                "view {view}: peak at {best}, center {center}"
            );
        }
    }

    #[test]
    fn fan_central_ray_matches_parallel_chord() {
        // Central fan ray through a centered disk equals the diameter.
        let g = FanBeamGeometry::short_scan_cover(3.0, 6.0, 4, 129, ImageGrid::square(128, 2.0 / 128.0))
            .unwrap();
        let r = 0.5;
        let img = disk_image(&g.grid, r, 1.0);
        let sino = project_fan(&img, &g).unwrap();
        let central = (g.n_det - 1) / 2;
        assert!((g.det_coord(central)).abs() < 1e-12);
        for view in 0..g.n_angles() {
            let got = sino.real()[view * g.n_det + central];
            let rel = (got - 2.0 * r).abs() / (2.0 * r);
            assert!(rel < 0.01, "view {view}: {got} vs {}", 2.0 * r);
        }
    }

    #[test]
    fn one_hot_sinogram_smears_single_ray() {
        let g = par_geom();
        let mut sino = vec![0.0; g.n_angles() * g.n_det];
        sino[5 * g.n_det + 48] = 1.0; // one ray in view 5
        let img = backproject_parallel(&Tensor::from_vec(g.sinogram_shape(), sino).unwrap(), &g)
            .unwrap();
        let v = img.real();
        let nonzero = v.iter().filter(|&&x| x != 0.0).count();
        assert!(nonzero > 0);
        // A single ray touches only a thin band of pixels.
        assert!(nonzero < 64 * 6, "ray footprint too wide: {nonzero}");
        // All deposited mass is along the ray of view 5, det 48: reproject and
        // confirm the energy concentrates in that bin.
        let resino = project_parallel(&img, &g).unwrap();
        let (mut best_idx, mut best) = (0, f64::MIN);
        for (i, &x) in resino.real().iter().enumerate() {
            if x > best {
                best = x;
                best_idx = i;
            }
        }
        assert_eq!(best_idx, 5 * g.n_det + 48);
    }

    #[test]
    fn projector_linearity() {
        let g = fan_geom();
        let a = random_tensor([64, 64], 10);
        let b = random_tensor([64, 64], 11);
        let lin = a.scale(0.7).add(&b.scale(-1.3)).unwrap();
        let lhs = project_fan(&lin, &g).unwrap();
        let rhs = project_fan(&a, &g)
            .unwrap()
            .scale(0.7)
            .add(&project_fan(&b, &g).unwrap().scale(-1.3))
            .unwrap();
        let diff = crate::tensor::norm(&lhs.sub(&rhs).unwrap(), crate::tensor::NormP::Inf);
        assert!(diff < 1e-10, "linearity violation {diff}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = par_geom();
        assert!(project_parallel(&Tensor::zeros([32, 32]), &g).is_err());
        assert!(backproject_parallel(&Tensor::zeros([3, 3]), &g).is_err());
    }
}
