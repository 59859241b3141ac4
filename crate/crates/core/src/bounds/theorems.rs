//! Error measurement and bound checks for compositions of known and
//! approximated operators.

use super::{ApproxMLP, BoxDomain, FunctionPair, VectorFn};
use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::NormP;
use serde::Serialize;
use serde_json::json;

/// Floating-point slack added to every bound comparison.
pub const SLACK: f64 = 1e-9;

fn vec_norm(v: &[f64], p: NormP) -> f64 {
    match p {
        NormP::One => v.iter().map(|x| x.abs()).sum(),
        NormP::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormP::Inf => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

fn p_label(p: NormP) -> &'static str {
    match p {
        NormP::One => "1",
        NormP::Two => "2",
        NormP::Inf => "inf",
    }
}

/// Sup-errors of the three approximation settings over a set of points.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorMeasurement {
    /// sup |f - g_hat(u)| (needs `g_hat`).
    pub e_g_sup: Option<f64>,
    /// Per-component sup |u_k - u_hat_k| (needs `u_hat`).
    pub e_u_components_sup: Option<Vec<f64>>,
    /// sup |f - g(u_hat)| (needs `u_hat`).
    pub e_u_composed_sup: Option<f64>,
    /// sup |f - g_hat(u_hat)| (needs both).
    pub e_f_sup: Option<f64>,
}

/// Measure sup-errors at explicit points (all inside the pair's domain).
pub fn measure_errors(
    pair: &FunctionPair,
    u_hat: Option<&[ApproxMLP]>,
    g_hat: Option<&ApproxMLP>,
    points: &[Vec<f64>],
) -> Result<ErrorMeasurement> {
    if u_hat.is_none() && g_hat.is_none() {
        return Err(Error::arg("measure_errors needs at least one approximation"));
    }
    if let Some(uh) = u_hat {
        if uh.len() != pair.u.dim_out() {
            return Err(Error::arg("one approximator per u component required"));
        }
    }
    for x in points {
        if !pair.domain.contains(x) {
            return Err(Error::arg(format!("grid point {x:?} lies outside the domain")));
        }
    }
    let evals: Vec<(Option<f64>, Option<Vec<f64>>, Option<f64>, Option<f64>)> =
        exec::map_collect(points.len(), |i| {
            let x = &points[i];
            let ux = pair.u.eval(x);
            let fx = (pair.g.eval)(&ux);
            let e_g = g_hat.map(|gh| (fx - gh.eval(&ux)).abs());
            let (e_uc, e_uf, e_f) = match u_hat {
                Some(uh) => {
                    let uhx: Vec<f64> = uh.iter().map(|m| m.eval(x)).collect();
                    let comps: Vec<f64> =
                        ux.iter().zip(&uhx).map(|(a, b)| (a - b).abs()).collect();
                    let e_uf = (fx - (pair.g.eval)(&uhx)).abs();
                    let e_f = g_hat.map(|gh| (fx - gh.eval(&uhx)).abs());
                    (Some(comps), Some(e_uf), e_f)
                }
                None => (None, None, None),
            };
            (e_g, e_uc, e_uf, e_f)
        });
    let fold_opt = |f: &dyn Fn(&(Option<f64>, Option<Vec<f64>>, Option<f64>, Option<f64>)) -> Option<f64>| {
        let mut m: Option<f64> = None;
        for e in &evals {
            if let Some(v) = f(e) {
                m = Some(m.unwrap_or(0.0).max(v));
            }
        }
        m
    };
    let e_u_components_sup = if u_hat.is_some() {
        let k = pair.u.dim_out();
        let mut sups = vec![0.0; k];
        for e in &evals {
            if let Some(c) = &e.1 {
                for (s, v) in sups.iter_mut().zip(c) {
                    *s = f64::max(*s, *v);
                }
            }
        }
        Some(sups)
    } else {
        None
    };
    Ok(ErrorMeasurement {
        e_g_sup: fold_opt(&|e| e.0),
        e_u_components_sup,
        e_u_composed_sup: fold_opt(&|e| e.2),
        e_f_sup: fold_opt(&|e| e.3),
    })
}

/// Outcome of one bound check.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub theorem: String,
    pub subject: String,
    pub p: String,
    /// Measured sup |e_f| over the grid.
    pub sup_ef: f64,
    /// Sup of the bound's right-hand side over the grid.
    pub bound: f64,
    /// Breakdown of the bound's ingredients.
    pub ingredients: serde_json::Value,
    /// Grid points where the pointwise inequality failed (beyond slack).
    pub pointwise_violations: usize,
    pub pass: bool,
}

impl BoundReport {
    pub fn csv_header() -> &'static str {
        "theorem,subject,p,sup_ef,bound,violations,pass"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.theorem,
            self.subject,
            self.p,
            self.sup_ef,
            self.bound,
            self.pointwise_violations,
            self.pass
        )
    }
}

/// Known output operator: `|e_f| <= l_g * ||e_u(x)||_p` checked pointwise on
/// the grid, with the pair's analytic Lipschitz constant.
pub fn check_theorem2(
    pair: &FunctionPair,
    u_hat: &[ApproxMLP],
    p: NormP,
    resolution: usize,
) -> Result<BoundReport> {
    check_theorem2_with_lg(pair, u_hat, p, resolution, (pair.g_lipschitz)(p))
}

/// Same check with an explicit Lipschitz constant (negative controls).
pub fn check_theorem2_with_lg(
    pair: &FunctionPair,
    u_hat: &[ApproxMLP],
    p: NormP,
    resolution: usize,
    l_g: f64,
) -> Result<BoundReport> {
    if u_hat.len() != pair.u.dim_out() {
        return Err(Error::arg("one approximator per u component required"));
    }
    let grid = pair.domain.grid(resolution);
    let rows: Vec<(f64, f64, bool)> = exec::map_collect(grid.len(), |i| {
        let x = &grid[i];
        let ux = pair.u.eval(x);
        let uhx: Vec<f64> = u_hat.iter().map(|m| m.eval(x)).collect();
        let e_f = ((pair.g.eval)(&ux) - (pair.g.eval)(&uhx)).abs();
        let e_u: Vec<f64> = ux.iter().zip(&uhx).map(|(a, b)| a - b).collect();
        let rhs = l_g * vec_norm(&e_u, p);
        (e_f, rhs, e_f <= rhs + SLACK)
    });
    let sup_ef = rows.iter().map(|r| r.0).fold(0.0f64, f64::max);
    let bound = rows.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let violations = rows.iter().filter(|r| !r.2).count();
    Ok(BoundReport {
        theorem: "known-output-operator".into(),
        subject: pair.name.clone(),
        p: p_label(p).into(),
        sup_ef,
        bound,
        ingredients: json!({
            "l_g": l_g,
            "sup_norm_eu": rows.iter().map(|r| r.1 / l_g.max(1e-300)).fold(0.0f64, f64::max),
            "grid_resolution": resolution,
        }),
        pointwise_violations: violations,
        pass: violations == 0 && sup_ef <= bound + SLACK,
    })
}

/// Both operators approximated:
/// `|e_f| <= sum_j |g_j| l_phi |w_j . [e_u(x); 0]| + eps_g`.
/// Passing `u_hat = None` treats `u` as known (`e_u = 0`), making the bound
/// collapse to `eps_g`.
pub fn check_theorem3(
    pair: &FunctionPair,
    u_hat: Option<&[ApproxMLP]>,
    g_hat: &ApproxMLP,
    resolution: usize,
) -> Result<BoundReport> {
    if let Some(uh) = u_hat {
        if uh.len() != pair.u.dim_out() {
            return Err(Error::arg("one approximator per u component required"));
        }
    }
    if g_hat.input_dim != pair.u.dim_out() {
        return Err(Error::arg("g approximator dimensionality mismatch"));
    }
    // eps_g: sup over the intermediate box and over reachable values.
    let s_grid = pair.intermediate.grid(resolution);
    let eps_s = exec::map_collect(s_grid.len(), |i| {
        ((pair.g.eval)(&s_grid[i]) - g_hat.eval(&s_grid[i])).abs()
    })
    .into_iter()
    .fold(0.0f64, f64::max);
    let d_grid = pair.domain.grid(resolution);
    let eps_reach = exec::map_collect(d_grid.len(), |i| {
        let ux = pair.u.eval(&d_grid[i]);
        ((pair.g.eval)(&ux) - g_hat.eval(&ux)).abs()
    })
    .into_iter()
    .fold(0.0f64, f64::max);
    let eps_g = eps_s.max(eps_reach);

    let l_phi = g_hat.activation.lipschitz_bound();
    let d1 = g_hat.input_dim + 1;
    let rows: Vec<(f64, f64, bool)> = exec::map_collect(d_grid.len(), |i| {
        let x = &d_grid[i];
        let ux = pair.u.eval(x);
        let fx = (pair.g.eval)(&ux);
        let (e_f, term1) = match u_hat {
            Some(uh) => {
                let uhx: Vec<f64> = uh.iter().map(|m| m.eval(x)).collect();
                let e_u: Vec<f64> = ux.iter().zip(&uhx).map(|(a, b)| a - b).collect();
                let mut term1 = 0.0;
                for j in 0..g_hat.hidden {
                    let w = &g_hat.weights[j * d1..(j + 1) * d1];
                    // Bias coordinate of the extended input is exact.
                    let dot: f64 =
                        w[..g_hat.input_dim].iter().zip(&e_u).map(|(&a, &b)| a * b).sum();
                    term1 += g_hat.outputs[j].abs() * l_phi * dot.abs();
                }
                ((fx - g_hat.eval(&uhx)).abs(), term1)
            }
            None => ((fx - g_hat.eval(&ux)).abs(), 0.0),
        };
        let rhs = term1 + eps_g;
        (e_f, term1, e_f <= rhs + SLACK)
    });
    let sup_ef = rows.iter().map(|r| r.0).fold(0.0f64, f64::max);
    let term1_sup = rows.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let violations = rows.iter().filter(|r| !r.2).count();
    let bound = term1_sup + eps_g;
    Ok(BoundReport {
        theorem: "unknown-operator".into(),
        subject: pair.name.clone(),
        p: "-".into(),
        sup_ef,
        bound,
        ingredients: json!({
            "term1_sup": term1_sup,
            "eps_g": eps_g,
            "l_phi": l_phi,
            "u_known": u_hat.is_none(),
            "grid_resolution": resolution,
        }),
        pointwise_violations: violations,
        pass: violations == 0 && sup_ef <= bound + SLACK,
    })
}

/// One layer of a deep chain: a vector map with its domain and the analytic
/// supremum of its Jacobian spectral norm.
#[derive(Debug, Clone)]
pub struct Layer {
    pub name: String,
    pub map: VectorFn,
    pub domain: BoxDomain,
    pub op_lipschitz: f64,
}

/// Composition `f_L = u_1 . u_2 . ... . u_L` (layer index 0 holds `u_1`,
/// which is applied last).
#[derive(Debug, Clone)]
pub struct DeepChain {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl DeepChain {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// True partial composition `f_m(x) = u_1(...u_m(x))` for `x` in `D_m`;
    /// `m = 0` is the identity.
    pub fn eval_partial(&self, m: usize, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for l in (0..m).rev() {
            v = self.layers[l].map.eval(&v);
        }
        v
    }

    /// Jacobian of `f_m` at `x` by the chain rule over analytic component
    /// gradients (matrices in row-major `dim_out x dim_in`).
    fn jacobian_partial(&self, m: usize, x: &[f64]) -> (Vec<f64>, usize, usize) {
        // Start with the identity on the input dimension.
        let d_in = x.len();
        let mut jac: Vec<f64> = (0..d_in * d_in)
            .map(|i| if i / d_in == i % d_in { 1.0 } else { 0.0 })
            .collect();
        let mut rows = d_in;
        let mut point = x.to_vec();
        for l in (0..m).rev() {
            let layer = &self.layers[l];
            let d_out = layer.map.dim_out();
            let mut jl = Vec::with_capacity(d_out * rows);
            for comp in &layer.map.components {
                jl.extend((comp.grad)(&point));
            }
            // jac <- jl (d_out x rows_in_layer) * jac (rows_in_layer x d_in)
            let inner = point.len();
            let mut next = vec![0.0; d_out * d_in];
            for r in 0..d_out {
                for c in 0..d_in {
                    let mut acc = 0.0;
                    for k in 0..inner {
                        acc += jl[r * inner + k] * jac[k * d_in + c];
                    }
                    next[r * d_in + c] = acc;
                }
            }
            jac = next;
            rows = d_out;
            point = layer.map.eval(&point);
        }
        (jac, rows, d_in)
    }

    /// Grid-sup of the spectral norm of `J_{f_m}` over `D_m` (a lower
    /// estimate). `m = 0` returns exactly 1.
    pub fn lipschitz_partial_grid(&self, m: usize, resolution: usize) -> f64 {
        if m == 0 {
            return 1.0;
        }
        let domain = &self.layers[m - 1].domain;
        let pts = domain.grid(resolution);
        let sups = exec::map_collect(pts.len(), |i| {
            let (j, r, c) = self.jacobian_partial(m, &pts[i]);
            spectral_norm(&j, r, c)
        });
        sups.into_iter().fold(0.0f64, f64::max)
    }
}

/// Largest singular value of a small matrix (closed form up to 2x2; sqrt of
/// the largest eigenvalue of J^T J via power iteration otherwise).
fn spectral_norm(j: &[f64], rows: usize, cols: usize) -> f64 {
    if rows * cols == 1 {
        return j[0].abs();
    }
    // Form the (cols x cols) Gram matrix.
    let mut g = vec![0.0; cols * cols];
    for a in 0..cols {
        for b in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += j[r * cols + a] * j[r * cols + b];
            }
            g[a * cols + b] = acc;
        }
    }
    if cols == 1 {
        return g[0].sqrt();
    }
    if cols == 2 {
        let (a, b, c) = (g[0], g[1], g[3]);
        let m = 0.5 * (a + c);
        let d = 0.5 * (a - c);
        let r = (d * d + b * b).sqrt();
        return (m + r).max(0.0).sqrt();
    }
    // Power iteration for larger blocks.
    let mut v = vec![1.0; cols];
    for _ in 0..64 {
        let mut w = vec![0.0; cols];
        for r in 0..cols {
            for c in 0..cols {
                w[r] += g[r * cols + c] * v[c];
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / n;
        }
    }
    let mut w = vec![0.0; cols];
    for r in 0..cols {
        for c in 0..cols {
            w[r] += g[r * cols + c] * v[c];
        }
    }
    w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Full outcome of the deep-chain check, including the per-layer bound terms
/// needed for substitution and product-relation assertions.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremFourOutcome {
    pub report: BoundReport,
    /// Sup p-norm error of each layer's approximator (0 = known layer).
    pub per_layer_eps: Vec<f64>,
    /// Bound terms `eps_l * l_{f, l-1}` in layer order.
    pub per_layer_terms: Vec<f64>,
    /// Grid-sup Lipschitz constant of the full true chain.
    pub lip_chain_grid: f64,
    /// Product of the analytic per-layer Lipschitz constants.
    pub lip_product: f64,
}

/// Deep-chain bound: `|e_{f,L,k}| <= sum_l ||e_u,l||_p * l_{f,l-1}` with
/// known layers contributing zero terms. `approx[l]` holds per-component
/// approximators of layer `l + 1` (`None` = layer is known). Uses p = 2.
pub fn check_theorem4(
    chain: &DeepChain,
    approx: &[Option<Vec<ApproxMLP>>],
    resolution: usize,
) -> Result<TheoremFourOutcome> {
    let depth = chain.depth();
    if depth < 2 {
        return Err(Error::arg("deep chains need at least two layers"));
    }
    if approx.len() != depth {
        return Err(Error::arg("one approximator slot per layer required"));
    }
    for (l, slot) in approx.iter().enumerate() {
        if let Some(mlps) = slot {
            if mlps.len() != chain.layers[l].map.dim_out() {
                return Err(Error::arg(format!(
                    "layer {} needs {} component approximators",
                    l + 1,
                    chain.layers[l].map.dim_out()
                )));
            }
        }
    }

    // Per-layer sup errors over each layer's own domain.
    let mut per_layer_eps = vec![0.0; depth];
    for l in 0..depth {
        if let Some(mlps) = &approx[l] {
            let pts = chain.layers[l].domain.grid(resolution);
            let sups = exec::map_collect(pts.len(), |i| {
                let x = &pts[i];
                let truth = chain.layers[l].map.eval(x);
                let approx_v: Vec<f64> = mlps.iter().map(|m| m.eval(x)).collect();
                let diff: Vec<f64> =
                    truth.iter().zip(&approx_v).map(|(a, b)| a - b).collect();
                vec_norm(&diff, NormP::Two)
            });
            per_layer_eps[l] = sups.into_iter().fold(0.0f64, f64::max);
        }
    }

    // Lipschitz constants of the true partial compositions (grid suprema).
    let mut per_layer_terms = vec![0.0; depth];
    for l in 0..depth {
        if per_layer_eps[l] > 0.0 {
            per_layer_terms[l] = per_layer_eps[l] * chain.lipschitz_partial_grid(l, resolution);
        }
    }
    let bound: f64 = per_layer_terms.iter().sum();

    // Measured error of the approximate recursion, with domain containment
    // checks on every intermediate value.
    let outer = &chain.layers[depth - 1].domain;
    let pts = outer.grid(resolution);
    let errs = exec::map_collect(pts.len(), |i| -> Result<f64> {
        let x = &pts[i];
        let truth = chain.eval_partial(depth, x);
        let mut v = x.to_vec();
        for l in (0..depth).rev() {
            v = match &approx[l] {
                Some(mlps) => mlps.iter().map(|m| m.eval(&v)).collect(),
                None => chain.layers[l].map.eval(&v),
            };
            if l > 0 && !chain.layers[l - 1].domain.contains(&v) {
                return Err(Error::Numerical(format!(
                    "approximate layer {} output {v:?} escapes the next domain",
                    l + 1
                )));
            }
        }
        Ok(truth.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max))
    });
    let mut sup_ef = 0.0f64;
    for e in errs {
        sup_ef = sup_ef.max(e?);
    }

    let lip_chain_grid = chain.lipschitz_partial_grid(depth, resolution);
    let lip_product = chain.layers.iter().map(|l| l.op_lipschitz).product();

    let pass = sup_ef <= bound + SLACK;
    Ok(TheoremFourOutcome {
        report: BoundReport {
            theorem: "deep-chain".into(),
            subject: chain.name.clone(),
            p: "2".into(),
            sup_ef,
            bound,
            ingredients: json!({
                "per_layer_eps": per_layer_eps,
                "per_layer_terms": per_layer_terms,
                "lip_chain_grid": lip_chain_grid,
                "lip_product": lip_product,
                "grid_resolution": resolution,
            }),
            pointwise_violations: if pass { 0 } else { 1 },
            pass,
        },
        per_layer_eps,
        per_layer_terms,
        lip_chain_grid,
        lip_product,
    })
}

/// Three-layer separable chain with analytic per-layer Lipschitz constants
/// (suprema attained at interior points).
pub fn deep_chain() -> DeepChain {
    let layer1 = Layer {
        name: "u1 = (0.7 sin(1.2x), 0.6 sin(1.1y))".into(),
        map: VectorFn {
            components: vec![
                super::SmoothFn::new(
                    "0.7 sin(1.2x)",
                    |x| 0.7 * (1.2 * x[0]).sin(),
                    |x| vec![0.84 * (1.2 * x[0]).cos(), 0.0],
                ),
                super::SmoothFn::new(
                    "0.6 sin(1.1y)",
                    |x| 0.6 * (1.1 * x[1]).sin(),
                    |x| vec![0.0, 0.66 * (1.1 * x[1]).cos()],
                ),
            ],
        },
        domain: BoxDomain::new(vec![-0.75, -0.75], vec![0.75, 0.75]).unwrap(),
        op_lipschitz: 0.84,
    };
    let layer2 = Layer {
        name: "u2 = (0.9 tanh(x + 0.2), 0.8 tanh(y - 0.1))".into(),
        map: VectorFn {
            components: vec![
                super::SmoothFn::new(
                    "0.9 tanh(x + 0.2)",
                    |x| 0.9 * (x[0] + 0.2).tanh(),
                    |x| {
                        let t = (x[0] + 0.2).tanh();
                        vec![0.9 * (1.0 - t * t), 0.0]
                    },
                ),
                super::SmoothFn::new(
                    "0.8 tanh(y - 0.1)",
                    |x| 0.8 * (x[1] - 0.1).tanh(),
                    |x| {
                        let t = (x[1] - 0.1).tanh();
                        vec![0.0, 0.8 * (1.0 - t * t)]
                    },
                ),
            ],
        },
        domain: BoxDomain::new(vec![-0.8, -0.8], vec![0.8, 0.8]).unwrap(),
        op_lipschitz: 0.9,
    };
    let layer3 = Layer {
        name: "u3 = (0.8 tanh(x), 0.7 tanh(y))".into(),
        map: VectorFn {
            components: vec![
                super::SmoothFn::new(
                    "0.8 tanh(x)",
                    |x| 0.8 * x[0].tanh(),
                    |x| {
                        let t = x[0].tanh();
                        vec![0.8 * (1.0 - t * t), 0.0]
                    },
                ),
                super::SmoothFn::new(
                    "0.7 tanh(y)",
                    |x| 0.7 * x[1].tanh(),
                    |x| {
                        let t = x[1].tanh();
                        vec![0.0, 0.7 * (1.0 - t * t)]
                    },
                ),
            ],
        },
        domain: BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        op_lipschitz: 0.8,
    };
    DeepChain { name: "three-layer-separable".into(), layers: vec![layer1, layer2, layer3] }
}
