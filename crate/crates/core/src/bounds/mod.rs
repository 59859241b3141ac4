//! Empirical verification lab for maximal-error bounds of compositions of
//! known and approximated operators.
//!
//! The lab fits single-hidden-layer approximators to the pieces of a catalog
//! of closed-form function pairs `f = g(u)`, measures the approximation
//! errors on dense grids, and checks the error bounds for the three
//! composition settings: known output operator, both operators approximated,
//! and deep chains of layers.

mod lipschitz;
mod theorems;

pub use lipschitz::{lipschitz_grid, LipMethod, LipschitzEstimate};
pub use theorems::{
    check_theorem2, check_theorem2_with_lg, check_theorem3, check_theorem4, deep_chain,
    measure_errors, BoundReport, DeepChain, ErrorMeasurement, Layer, TheoremFourOutcome, SLACK,
};

use crate::error::{Error, Result};
use crate::exec;
use crate::graph::ops::{DenseBiasOp, DotOutOp, MseLoss, SigmoidOp, TanhOp};
use crate::graph::Graph;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::train::{train_loop, Optimizer, TrainConfig, TrainItem};
use std::sync::Arc;

/// Axis-aligned box domain in 1 or 2 dimensions.
#[derive(Debug, Clone)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 2 {
            return Err(Error::arg("box domains here are 1-D or 2-D"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::arg("degenerate box domain"));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *v >= lo - 1e-12 && *v <= hi + 1e-12)
    }

    /// Full grid with `res` points per axis (inclusive endpoints).
    pub fn grid(&self, res: usize) -> Vec<Vec<f64>> {
        assert!(res >= 2);
        let axis = |k: usize| -> Vec<f64> {
            (0..res)
                .map(|i| self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (res - 1) as f64)
                .collect()
        };
        match self.dim() {
            1 => axis(0).into_iter().map(|x| vec![x]).collect(),
            2 => {
                let (xs, ys) = (axis(0), axis(1));
                let mut out = Vec::with_capacity(res * res);
                for y in &ys {
                    for x in &xs {
                        out.push(vec![*x, *y]);
                    }
                }
                out
            }
            _ => unreachable!(),
        }
    }
}

/// Bounded activation for the universal approximator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = self.eval(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// Exact Lipschitz bound of the activation.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            Activation::Tanh => 1.0,
        }
    }
}

/// Single-hidden-layer approximator `sum_i out_i * phi(w_i . [x; 1])`.
#[derive(Debug, Clone)]
pub struct ApproxMLP {
    /// Hidden node count N.
    pub hidden: usize,
    /// `[N, d+1]`, bias in the last column.
    pub weights: Vec<f64>,
    /// Output coefficients, length N.
    pub outputs: Vec<f64>,
    pub input_dim: usize,
    pub activation: Activation,
}

impl ApproxMLP {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d1 = self.input_dim + 1;
        (0..self.hidden)
            .map(|i| {
                let w = &self.weights[i * d1..(i + 1) * d1];
                let z = w[..self.input_dim]
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .sum::<f64>()
                    + w[self.input_dim];
                self.outputs[i] * self.activation.eval(z)
            })
            .sum()
    }

    /// Closed-form gradient.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let d1 = self.input_dim + 1;
        let mut g = vec![0.0; self.input_dim];
        for i in 0..self.hidden {
            let w = &self.weights[i * d1..(i + 1) * d1];
            let z = w[..self.input_dim]
                .iter()
                .zip(x)
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
                + w[self.input_dim];
            let k = self.outputs[i] * self.activation.deriv(z);
            for (gk, &wk) in g.iter_mut().zip(&w[..self.input_dim]) {
                *gk += k * wk;
            }
        }
        g
    }
}

/// Training setup for [`fit_mlp`].
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Points per axis of the training grid.
    pub train_res: usize,
    /// Points per axis of the sup-error measurement grid.
    pub eval_res: usize,
    pub activation: Activation,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs: 4000,
            learning_rate: 0.02,
            seed: 0,
            train_res: 61,
            eval_res: 201,
            activation: Activation::Sigmoid,
        }
    }
}

/// Fit a single-hidden-layer approximator to `target` on `domain` by
/// full-batch MSE; returns the network and the grid-sup absolute error.
pub fn fit_mlp(
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &BoxDomain,
    hidden: usize,
    cfg: &FitConfig,
) -> Result<(ApproxMLP, f64)> {
    if hidden == 0 {
        return Err(Error::arg("need at least one hidden node"));
    }
    let d = domain.dim();
    let train_pts = domain.grid(cfg.train_res);
    let n_train = train_pts.len();
    let xs = Tensor::from_vec([n_train, d], train_pts.iter().flatten().copied().collect())?;
    let ts = Tensor::from_vec([n_train], train_pts.iter().map(|p| target(p)).collect())?;

    let mut rng = SeededRng::new(cfg.seed);
    let mut g = Graph::new();
    let x = g.add_input("x");
    let t = g.add_input("t");
    let w0: Vec<f64> = (0..hidden * (d + 1)).map(|_| rng.uniform(-2.5, 2.5)).collect();
    let u0: Vec<f64> = (0..hidden).map(|_| rng.uniform(-0.5, 0.5)).collect();
    let w = g.add_param("hidden_weights", Tensor::from_vec([hidden, d + 1], w0)?, true);
    let u = g.add_param("out_weights", Tensor::from_vec([hidden], u0)?, true);
    let pre = g.apply(DenseBiasOp, &[x, w])?;
    let act = match cfg.activation {
        Activation::Sigmoid => g.apply(SigmoidOp, &[pre])?,
        Activation::Tanh => g.apply(TanhOp, &[pre])?,
    };
    let y = g.apply(DotOutOp, &[act, u])?;
    let loss = g.apply(MseLoss, &[y, t])?;
    g.set_output(loss);

    let items = vec![TrainItem { bindings: vec![(x, xs), (t, ts)] }];
    let mut opt = Optimizer::adam(cfg.learning_rate);
    train_loop(&mut g, &items, &[], &mut opt, &TrainConfig { epochs: cfg.epochs })
        .map_err(|e| Error::Numerical(format!("mlp fit diverged: {e}")))?;

    let mlp = ApproxMLP {
        hidden,
        weights: g.param_value(w)?.real().to_vec(),
        outputs: g.param_value(u)?.real().to_vec(),
        input_dim: d,
        activation: cfg.activation,
    };
    let eval_pts = domain.grid(cfg.eval_res);
    let errs = exec::map_collect(eval_pts.len(), |i| {
        (mlp.eval(&eval_pts[i]) - target(&eval_pts[i])).abs()
    });
    let sup = errs.into_iter().fold(0.0f64, f64::max);
    Ok((mlp, sup))
}

type DynFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type DynGrad = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar function with a closed-form gradient oracle.
#[derive(Clone)]
pub struct SmoothFn {
    pub name: String,
    pub eval: DynFn,
    pub grad: DynGrad,
}

impl std::fmt::Debug for SmoothFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SmoothFn({})", self.name)
    }
}

impl SmoothFn {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        SmoothFn { name: name.into(), eval: Arc::new(eval), grad: Arc::new(grad) }
    }
}

/// Vector-valued map given component-wise (the component treatment of the
/// vector extension of the approximation theorem).
#[derive(Debug, Clone)]
pub struct VectorFn {
    pub components: Vec<SmoothFn>,
}

impl VectorFn {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| (c.eval)(x)).collect()
    }

    pub fn dim_out(&self) -> usize {
        self.components.len()
    }
}

/// A composition `f(x) = g(u(x))` with closed-form pieces, domains, and the
/// analytic Lipschitz constant of `g` on the intermediate box.
#[derive(Debug, Clone)]
pub struct FunctionPair {
    pub name: String,
    pub u: VectorFn,
    pub g: SmoothFn,
    /// Domain of `u` (and of `f`).
    pub domain: BoxDomain,
    /// Box containing `u(domain)`, the domain of `g`.
    pub intermediate: BoxDomain,
    /// Analytic `sup ||grad g||_p` over the intermediate box.
    pub g_lipschitz: fn(crate::tensor::NormP) -> f64,
}

impl FunctionPair {
    pub fn f(&self, x: &[f64]) -> f64 {
        (self.g.eval)(&self.u.eval(x))
    }
}

/// The three catalog pairs (closed-form gradients, analytic Lipschitz).
pub fn catalog() -> Vec<FunctionPair> {
    let affine = FunctionPair {
        name: "affine-affine".into(),
        u: VectorFn {
            components: vec![
                SmoothFn::new(
                    "u0 = 0.6x - 0.3y + 0.1",
                    |x| 0.6 * x[0] - 0.3 * x[1] + 0.1,
                    |_| vec![0.6, -0.3],
                ),
                SmoothFn::new(
                    "u1 = 0.2x + 0.5y - 0.2",
                    |x| 0.2 * x[0] + 0.5 * x[1] - 0.2,
                    |_| vec![0.2, 0.5],
                ),
            ],
        },
        g: SmoothFn::new(
            "g = 1.5y0 - 0.7y1 + 0.3",
            |y| 1.5 * y[0] - 0.7 * y[1] + 0.3,
            |_| vec![1.5, -0.7],
        ),
        domain: BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        intermediate: BoxDomain::new(vec![-1.0, -0.9], vec![1.0, 0.9]).unwrap(),
        g_lipschitz: |p| match p {
            crate::tensor::NormP::One => 1.5 + 0.7,
            crate::tensor::NormP::Two => (1.5f64 * 1.5 + 0.7 * 0.7).sqrt(),
            crate::tensor::NormP::Inf => 1.5,
        },
    };
    let trig = FunctionPair {
        name: "trig-quadratic".into(),
        u: VectorFn {
            components: vec![
                SmoothFn::new(
                    "u0 = sin(1.3x + 0.4y)",
                    |x| (1.3 * x[0] + 0.4 * x[1]).sin(),
                    |x| {
                        let c = (1.3 * x[0] + 0.4 * x[1]).cos();
                        vec![1.3 * c, 0.4 * c]
                    },
                ),
                SmoothFn::new(
                    "u1 = cos(0.9y)",
                    |x| (0.9 * x[1]).cos(),
                    |x| vec![0.0, -0.9 * (0.9 * x[1]).sin()],
                ),
            ],
        },
        g: SmoothFn::new(
            "g = 0.8y0^2 + 0.5y1^2",
            |y| 0.8 * y[0] * y[0] + 0.5 * y[1] * y[1],
            |y| vec![1.6 * y[0], y[1]],
        ),
        domain: BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        intermediate: BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        // sup over the box is attained at a corner.
        g_lipschitz: |p| match p {
            crate::tensor::NormP::One => 1.6 + 1.0,
            crate::tensor::NormP::Two => (1.6f64 * 1.6 + 1.0).sqrt(),
            crate::tensor::NormP::Inf => 1.6,
        },
    };
    let ridge = FunctionPair {
        name: "tanh-sigmoid-ridge".into(),
        u: VectorFn {
            components: vec![
                SmoothFn::new(
                    "u0 = tanh(x + 0.5y)",
                    |x| (x[0] + 0.5 * x[1]).tanh(),
                    |x| {
                        let t = (x[0] + 0.5 * x[1]).tanh();
                        let d = 1.0 - t * t;
                        vec![d, 0.5 * d]
                    },
                ),
                SmoothFn::new(
                    "u1 = 0.8 tanh(y - 0.3x)",
                    |x| 0.8 * (x[1] - 0.3 * x[0]).tanh(),
                    |x| {
                        let t = (x[1] - 0.3 * x[0]).tanh();
                        let d = 0.8 * (1.0 - t * t);
                        vec![-0.3 * d, d]
                    },
                ),
            ],
        },
        g: SmoothFn::new(
            "g = 2 sigmoid(1.2y0 - 0.8y1)",
            |y| 2.0 / (1.0 + (-(1.2 * y[0] - 0.8 * y[1])).exp()),
            |y| {
                let z = 1.2 * y[0] - 0.8 * y[1];
                let s = 1.0 / (1.0 + (-z).exp());
                let d = 2.0 * s * (1.0 - s);
                vec![1.2 * d, -0.8 * d]
            },
        ),
        domain: BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        intermediate: BoxDomain::new(vec![-1.0, -0.8], vec![1.0, 0.8]).unwrap(),
        // The ridge argument reaches zero inside the box, so sup sigma' = 1/4.
        g_lipschitz: |p| match p {
            crate::tensor::NormP::One => 2.0 * 0.25 * (1.2 + 0.8),
            crate::tensor::NormP::Two => 2.0 * 0.25 * (1.2f64 * 1.2 + 0.8 * 0.8).sqrt(),
            crate::tensor::NormP::Inf => 2.0 * 0.25 * 1.2,
        },
    };
    vec![affine, trig, ridge]
}

/// Fit one approximator per component of `pair.u`.
pub fn fit_pair_u(pair: &FunctionPair, hidden: usize, cfg: &FitConfig) -> Result<Vec<ApproxMLP>> {
    pair.u
        .components
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(1000 + k as u64);
            let eval = comp.eval.clone();
            fit_mlp(&move |x: &[f64]| eval(x), &pair.domain, hidden, &c).map(|(m, _)| m)
        })
        .collect()
}

/// Fit an approximator to `pair.g` on the intermediate box.
pub fn fit_pair_g(pair: &FunctionPair, hidden: usize, cfg: &FitConfig) -> Result<ApproxMLP> {
    let eval = pair.g.eval.clone();
    fit_mlp(&move |y: &[f64]| eval(y), &pair.intermediate, hidden, cfg).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_fits_with_one_node() {
        let domain = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let cfg = FitConfig { epochs: 2000, learning_rate: 0.05, ..Default::default() };
        let (_, sup) = fit_mlp(&|_: &[f64]| 0.3, &domain, 1, &cfg).unwrap();
        assert!(sup < 1e-3, "constant fit sup err {sup}");
    }

    #[test]
    fn refit_reproduces_error_bitwise() {
        let domain = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let cfg = FitConfig { epochs: 200, ..Default::default() };
        let (_, a) = fit_mlp(&|x: &[f64]| (3.0 * x[0]).sin(), &domain, 8, &cfg).unwrap();
        let (_, b) = fit_mlp(&|x: &[f64]| (3.0 * x[0]).sin(), &domain, 8, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(3);
        let mlp = ApproxMLP {
            hidden: 5,
            weights: (0..15).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            outputs: (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            input_dim: 2,
            activation: Activation::Sigmoid,
        };
        let x = [0.3, -0.4];
        let g = mlp.grad(&x);
        let h = 1e-6;
        for k in 0..2 {
            let mut p = x;
            p[k] += h;
            let mut m = x;
            m[k] -= h;
            let fd = (mlp.eval(&p) - mlp.eval(&m)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "component {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn catalog_intermediate_boxes_contain_u_images() {
        for pair in catalog() {
            for x in pair.domain.grid(41) {
                let y = pair.u.eval(&x);
                assert!(
                    pair.intermediate.contains(&y),
                    "{}: u({x:?}) = {y:?} escapes the intermediate box",
                    pair.name
                );
            }
        }
    }

    #[test]
    fn catalog_gradients_match_finite_differences() {
        for pair in catalog() {
            for x in pair.domain.grid(7) {
                let h = 1e-6;
                // u components
                for comp in &pair.u.components {
                    let g = (comp.grad)(&x);
                    for k in 0..x.len() {
                        let mut p = x.clone();
                        p[k] += h;
                        let mut m = x.clone();
                        m[k] -= h;
                        let fd = ((comp.eval)(&p) - (comp.eval)(&m)) / (2.0 * h);
                        assert!(
                            (fd - g[k]).abs() < 1e-7,
                            "{} {}: {fd} vs {}",
                            pair.name,
                            comp.name,
                            g[k]
                        );
                    }
                }
                // g at u(x)
                let y = pair.u.eval(&x);
                let gg = (pair.g.grad)(&y);
                for k in 0..y.len() {
                    let mut p = y.clone();
                    p[k] += h;
                    let mut m = y.clone();
                    m[k] -= h;
                    let fd = ((pair.g.eval)(&p) - (pair.g.eval)(&m)) / (2.0 * h);
                    assert!((fd - gg[k]).abs() < 1e-7, "{} g: {fd} vs {}", pair.name, gg[k]);
                }
            }
        }
    }

    #[test]
    fn activation_lipschitz_constants() {
        assert_eq!(Activation::Sigmoid.lipschitz_bound(), 0.25);
        assert_eq!(Activation::Tanh.lipschitz_bound(), 1.0);
        // The bounds dominate sampled derivatives.
        for i in -100..=100 {
            let x = i as f64 * 0.05;
            assert!(Activation::Sigmoid.deriv(x) <= 0.25 + 1e-15);
            assert!(Activation::Tanh.deriv(x) <= 1.0);
        }
    }
}
