//! Numerical phantoms: Shepp-Logan, randomized ellipse scenes, and noisy
//! curvilinear tube images for vessel-enhancement experiments.
//!
//! Ellipse phantoms carry their parameterization so projections can be
//! computed analytically (closed-form chord lengths), which keeps training
//! targets free of forward-projector discretization error.

use crate::ct::{FanBeamGeometry, ImageGrid, ParallelGeometry};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Axis-aligned description of one additive ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub intensity: f64,
    /// Semi-axes.
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    /// Rotation in radians, counter-clockwise.
    pub phi: f64,
}

impl Ellipse {
    /// Closed-form line integral along the ray `origin + t * dir` (unit dir).
    pub fn ray_integral(&self, origin: [f64; 2], dir: [f64; 2]) -> f64 {
        let (sin, cos) = self.phi.sin_cos();
        let to_local = |p: [f64; 2]| -> [f64; 2] {
            let dx = p[0] - self.x0;
            let dy = p[1] - self.y0;
            [(cos * dx + sin * dy) / self.a, (-sin * dx + cos * dy) / self.b]
        };
        let o = to_local(origin);
        // Direction transforms without translation.
        let d = [
            (cos * dir[0] + sin * dir[1]) / self.a,
            (-sin * dir[0] + cos * dir[1]) / self.b,
        ];
        let qa = d[0] * d[0] + d[1] * d[1];
        let qb = o[0] * d[0] + o[1] * d[1];
        let qc = o[0] * o[0] + o[1] * o[1] - 1.0;
        let disc = qb * qb - qa * qc;
        if disc <= 0.0 {
            return 0.0;
        }
        self.intensity * 2.0 * disc.sqrt() / qa
    }

    /// Signed analytic mass (integral over the plane).
    pub fn mass(&self) -> f64 {
        self.intensity * std::f64::consts::PI * self.a * self.b
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.phi.sin_cos();
        let dx = x - self.x0;
        let dy = y - self.y0;
        let u = (cos * dx + sin * dy) / self.a;
        let v = (-sin * dx + cos * dy) / self.b;
        u * u + v * v <= 1.0
    }
}

/// Modified Shepp-Logan parameterization (Toft intensities) on `[-1, 1]^2`.
pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    let deg = std::f64::consts::PI / 180.0;
    let e = |intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64| Ellipse {
        intensity,
        a,
        b,
        x0,
        y0,
        phi: phi_deg * deg,
    };
    vec![
        e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        e(-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
        e(-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
        e(-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
        e(0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
        e(0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
        e(0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
        e(0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
        e(0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
        e(0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
    ]
}

/// Rasterize an additive ellipse scene with `ss x ss` supersampling per pixel.
pub fn rasterize_ellipses(ellipses: &[Ellipse], grid: &ImageGrid, ss: usize) -> Tensor {
    let (nx, ny, dx) = (grid.n_x, grid.n_y, grid.pixel_spacing);
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let sub = 1.0 / ss as f64;
    let rows = exec::map_collect(ny, |iy| {
        let mut row = vec![0.0; nx];
        for (ix, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let x = (ix as f64 - cx + (sx as f64 + 0.5) * sub - 0.5) * dx;
                    let y = (iy as f64 - cy + (sy as f64 + 0.5) * sub - 0.5) * dx;
                    for e in ellipses {
                        if e.contains(x, y) {
                            acc += e.intensity;
                        }
                    }
                }
            }
            *out = acc * sub * sub;
        }
        row
    });
    Tensor::from_vec([ny, nx], rows.concat()).expect("raster is finite")
}

/// Interior region of the Shepp-Logan phantom: pixels inside the brain
/// ellipse scaled by `shrink` (clear of the skull's edge band).
pub fn shepp_logan_interior_mask(grid: &ImageGrid, shrink: f64) -> Vec<bool> {
    let brain = Ellipse {
        intensity: 1.0,
        a: 0.6624 * shrink,
        b: 0.8740 * shrink,
        x0: 0.0,
        y0: -0.0184,
        phi: 0.0,
    };
    let (nx, ny, dx) = (grid.n_x, grid.n_y, grid.pixel_spacing);
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let mut mask = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let x = (ix as f64 - cx) * dx;
            let y = (iy as f64 - cy) * dx;
            mask.push(brain.contains(x, y));
        }
    }
    mask
}

/// Uniform disk image (supersampled), for chord-length oracles.
pub fn disk_image(grid: &ImageGrid, radius: f64, intensity: f64) -> Tensor {
    let disk = Ellipse { intensity, a: radius, b: radius, x0: 0.0, y0: 0.0, phi: 0.0 };
    rasterize_ellipses(&[disk], grid, 4)
}

/// Analytic parallel-beam sinogram of an ellipse scene.
pub fn analytic_sino_parallel(ellipses: &[Ellipse], g: &ParallelGeometry) -> Tensor {
    let rows = exec::map_collect(g.n_angles(), |view| {
        let theta = g.angles[view];
        let (sin, cos) = theta.sin_cos();
        let mut row = vec![0.0; g.n_det];
        for (det, out) in row.iter_mut().enumerate() {
            let s = g.det_coord(det);
            let origin = [s * cos, s * sin];
            let dir = [-sin, cos];
            *out = ellipses.iter().map(|e| e.ray_integral(origin, dir)).sum();
        }
        row
    });
    Tensor::from_vec(g.sinogram_shape(), rows.concat()).expect("finite sinogram")
}

/// Analytic fan-beam sinogram of an ellipse scene.
pub fn analytic_sino_fan(ellipses: &[Ellipse], g: &FanBeamGeometry) -> Tensor {
    let rows = exec::map_collect(g.n_angles(), |view| {
        let beta = g.angles[view];
        let (sin_b, cos_b) = beta.sin_cos();
        let source = [g.dsi * cos_b, g.dsi * sin_b];
        let mut row = vec![0.0; g.n_det];
        for (det, out) in row.iter_mut().enumerate() {
            let a = g.det_coord(det);
            let dx = -g.dsd * cos_b - a * sin_b;
            let dy = -g.dsd * sin_b + a * cos_b;
            let len = (dx * dx + dy * dy).sqrt();
            let dir = [dx / len, dy / len];
            *out = ellipses.iter().map(|e| e.ray_integral(source, dir)).sum();
        }
        row
    });
    Tensor::from_vec(g.sinogram_shape(), rows.concat()).expect("finite sinogram")
}

/// Random additive ellipse scene with intensities normalized into [0, 1].
/// Returns the scene description; rasterize or project as needed.
pub fn random_ellipses(rng: &mut SeededRng, n_min: usize, n_max: usize) -> Vec<Ellipse> {
    let count = n_min + rng.below(n_max - n_min + 1);
    let mut es: Vec<Ellipse> = Vec::with_capacity(count);
    for _ in 0..count {
        let a = rng.uniform(0.08, 0.38);
        let b = rng.uniform(0.08, 0.38);
        let reach = 0.82 - a.max(b);
        let r = rng.uniform(0.0, reach.max(0.05));
        let ang = rng.uniform(0.0, std::f64::consts::TAU);
        es.push(Ellipse {
            intensity: rng.uniform(0.15, 0.5),
            a,
            b,
            x0: r * ang.cos(),
            y0: r * ang.sin(),
            phi: rng.uniform(0.0, std::f64::consts::PI),
        });
    }
    // Normalize worst-case overlap so the rasterized image stays in [0, 1].
    // Scaling intensities keeps analytic projections consistent.
    let peak: f64 = es.iter().map(|e| e.intensity).sum();
    if peak > 1.0 {
        for e in &mut es {
            e.intensity /= peak;
        }
    }
    es
}

/// Noisy dark-tube image for vessel experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeSpec {
    pub count: usize,
    pub width_min: f64,
    pub width_max: f64,
    pub noise_sigma: f64,
    pub background: f64,
    pub depth: f64,
}

impl Default for TubeSpec {
    fn default() -> Self {
        TubeSpec {
            count: 2,
            width_min: 3.0,
            width_max: 5.0,
            noise_sigma: 0.12,
            background: 0.8,
            depth: 0.5,
        }
    }
}

/// Tube image plus binary centerline mask (1 inside a tube).
pub struct TubeImage {
    pub image: Tensor,
    pub mask: Tensor,
}

/// Generate a tube scene on an `n x n` grid (pixel units).
pub fn tube_image(n: usize, spec: &TubeSpec, rng: &mut SeededRng) -> TubeImage {
    let mut dist = vec![f64::INFINITY; n * n];
    let mut width = vec![0.0f64; n * n];
    for _ in 0..spec.count {
        let w = rng.uniform(spec.width_min, spec.width_max);
        // Random gently-curved centerline crossing the image.
        let cx = rng.uniform(0.25, 0.75) * n as f64;
        let cy = rng.uniform(0.25, 0.75) * n as f64;
        let ang = rng.uniform(0.0, std::f64::consts::PI);
        let (dy, dx) = ang.sin_cos();
        let norm = [-dy, dx];
        let amp = rng.uniform(0.0, 0.06) * n as f64;
        let freq = rng.uniform(0.5, 1.5) * std::f64::consts::TAU / n as f64;
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        // Dense polyline samples.
        let m = 4 * n;
        let pts: Vec<[f64; 2]> = (0..=m)
            .map(|k| {
                let t = (k as f64 / m as f64 - 0.5) * 2.2 * n as f64;
                let sway = amp * (freq * t + phase).sin();
                [cx + t * dx + sway * norm[0], cy + t * dy + sway * norm[1]]
            })
            .collect();
        for iy in 0..n {
            for ix in 0..n {
                let (px, py) = (ix as f64, iy as f64);
                let mut best = dist[iy * n + ix];
                for p in &pts {
                    let d2 = (p[0] - px) * (p[0] - px) + (p[1] - py) * (p[1] - py);
                    if d2 < best {
                        best = d2;
                    }
                }
                if best < dist[iy * n + ix] {
                    dist[iy * n + ix] = best;
                    width[iy * n + ix] = w;
                }
            }
        }
    }
    let mut img = vec![0.0; n * n];
    let mut mask = vec![0.0; n * n];
    for i in 0..n * n {
        let d = dist[i].sqrt();
        let half = width[i] / 2.0;
        let valley = if half > 0.0 && d < half {
            mask[i] = 1.0;
            1.0 - (d / half) * (d / half)
        } else {
            0.0
        };
        let noisy = spec.background - spec.depth * valley + rng.normal(0.0, spec.noise_sigma);
        img[i] = noisy.clamp(0.0, 1.0);
    }
    TubeImage {
        image: Tensor::from_vec([n, n], img).unwrap(),
        mask: Tensor::from_vec([n, n], mask).unwrap(),
    }
}

/// Phantom kinds available to experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhantomKind {
    SheppLogan,
    RandomEllipses { n_min: usize, n_max: usize },
    Tubes { spec: TubeSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    #[serde(flatten)]
    pub kind: PhantomKind,
    /// Grid size (square).
    pub size: usize,
    pub seed: u64,
}

/// Generated phantom: image plus optional tube mask and ellipse description.
pub struct Phantom {
    pub image: Tensor,
    pub mask: Option<Tensor>,
    pub ellipses: Option<Vec<Ellipse>>,
}

/// Deterministic phantom generation (pure in spec + seed).
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    if spec.size == 0 {
        return Err(Error::arg("phantom size must be positive"));
    }
    let grid = ImageGrid::square(spec.size, 2.0 / spec.size as f64);
    let mut rng = SeededRng::new(spec.seed);
    match &spec.kind {
        PhantomKind::SheppLogan => {
            let es = shepp_logan_ellipses();
            Ok(Phantom { image: rasterize_ellipses(&es, &grid, 4), mask: None, ellipses: Some(es) })
        }
        PhantomKind::RandomEllipses { n_min, n_max } => {
            if n_min > n_max || *n_max == 0 {
                return Err(Error::arg("invalid ellipse count range"));
            }
            let es = random_ellipses(&mut rng, *n_min, *n_max);
            Ok(Phantom { image: rasterize_ellipses(&es, &grid, 4), mask: None, ellipses: Some(es) })
        }
        PhantomKind::Tubes { spec: ts } => {
            let t = tube_image(spec.size, ts, &mut rng);
            Ok(Phantom { image: t.image, mask: Some(t.mask), ellipses: None })
        }
    }
}
