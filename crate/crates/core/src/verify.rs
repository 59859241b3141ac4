//! Ready-made verification suites shared by the CLI and the acceptance tests:
//! finite-difference checks of every trainable operator family, and the full
//! bound-verification run over the function catalog.

use crate::bounds::{
    catalog, check_theorem2, check_theorem3, check_theorem4, deep_chain, fit_mlp, fit_pair_g,
    fit_pair_u, BoundReport, FitConfig,
};
use crate::ct::{fbp_network, CirculantFilterOp, FanBeamGeometry, FbpFlags, ImageGrid,
    ParallelGeometry};
use crate::error::Result;
use crate::frangi::{frangi_net, FrangiHead, ScaleBank};
use crate::graph::ops::{DenseBiasOp, DiceLoss, DotOutOp, MseLoss, SigmoidOp};
use crate::graph::{gradcheck, GradCheckConfig, GradCheckReport, Graph};
use crate::rebin::{make_kspace, rebin_net, RebinConfig, RebinFlags};
use crate::rng::SeededRng;
use crate::tensor::{NormP, Tensor};
use serde::Serialize;
use std::sync::Arc;

fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

/// Finite-difference verification of every trainable operator family on
/// small standard instances. Returns one report per family.
pub fn gradcheck_suite(tolerance: f64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();
    let cfg = GradCheckConfig { tolerance, max_coords_per_param: 12, ..Default::default() };

    // FBP detector weights and filter spectrum.
    {
        let grid = ImageGrid::square(24, 2.0 / 24.0);
        let geom = Arc::new(FanBeamGeometry::short_scan_cover(3.0, 6.0, 30, 40, grid)?);
        let mut net =
            fbp_network(geom.clone(), FbpFlags { train_weights: true, train_filter: true })?;
        let target = net.graph.add_input("target");
        let loss = net.graph.apply(MseLoss, &[net.output, target])?;
        net.graph.set_output(loss);
        let bindings = vec![
            (net.input, random_tensor(&geom.sinogram_shape(), 5, 0.0, 1.0)),
            (target, random_tensor(&[24, 24], 6, 0.0, 0.5)),
        ];
        out.push(("fbp W and K".to_string(), gradcheck(&mut net.graph, &bindings, &cfg)?));
    }

    // Circulant filter spectrum alone.
    {
        let n = 24;
        let mut g = Graph::new();
        let x = g.add_input("rows");
        let t = g.add_input("target");
        let c = g.add_param("spectrum", random_tensor(&[n], 7, -1.0, 1.0), true);
        let filtered = g.apply(CirculantFilterOp { n }, &[x, c])?;
        let loss = g.apply(MseLoss, &[filtered, t])?;
        g.set_output(loss);
        let bindings = vec![
            (x, random_tensor(&[3, n], 8, -1.0, 1.0)),
            (t, random_tensor(&[3, n], 9, -1.0, 1.0)),
        ];
        out.push(("circulant spectrum".to_string(), gradcheck(&mut g, &bindings, &cfg)?));
    }

    // Vesselness kernel bank.
    {
        let bank = ScaleBank::gaussian(&[1.0, 1.6], true)?;
        let mut net = frangi_net(&bank, &FrangiHead::default())?;
        let mask_in = net.graph.add_input("mask");
        let loss = net.graph.apply(DiceLoss::default(), &[net.output, mask_in])?;
        net.graph.set_output(loss);
        let n = 16;
        let mut rng = SeededRng::new(22);
        let mask = Tensor::from_vec(
            [n, n],
            (0..n * n).map(|_| if rng.unit() < 0.3 { 1.0 } else { 0.0 }).collect::<Vec<f64>>(),
        )?;
        let bindings = vec![
            (net.input, random_tensor(&[n, n], 21, 0.0, 1.0)),
            (net.c_input, Tensor::scalar(0.8)),
            (mask_in, mask),
        ];
        let frangi_cfg = GradCheckConfig { max_coords_per_param: 6, ..cfg.clone() };
        out.push((
            "frangi kernel bank".to_string(),
            gradcheck(&mut net.graph, &bindings, &frangi_cfg)?,
        ));
    }

    // Rebinning diagonals.
    {
        let grid = ImageGrid::square(16, 2.0 / 16.0);
        let par =
            ParallelGeometry::uniform(6, 24, grid.diagonal() * 1.1 / 24.0, grid.clone())?;
        let fan = FanBeamGeometry::short_scan_cover(3.0, 6.0, 12, 24, grid)?;
        let rc = RebinConfig::new(par, fan)?;
        let mut net = rebin_net(&rc, RebinFlags::default())?;
        let target = net.graph.add_input("target");
        let loss = net.graph.apply(MseLoss, &[net.output, target])?;
        net.graph.set_output(loss);
        let phantom = random_tensor(&[16, 16], 31, 0.0, 1.0);
        let bindings = vec![
            (net.input, make_kspace(&phantom, &rc)?),
            (target, random_tensor(&rc.fan.sinogram_shape(), 32, 0.0, 1.0)),
        ];
        out.push(("rebin C and W".to_string(), gradcheck(&mut net.graph, &bindings, &cfg)?));
    }

    // MLP weights.
    {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let t = g.add_input("t");
        let w = g.add_param("hidden", random_tensor(&[6, 3], 41, -1.0, 1.0), true);
        let u = g.add_param("out", random_tensor(&[6], 42, -1.0, 1.0), true);
        let h = g.apply(DenseBiasOp, &[x, w])?;
        let s = g.apply(SigmoidOp, &[h])?;
        let y = g.apply(DotOutOp, &[s, u])?;
        let loss = g.apply(MseLoss, &[y, t])?;
        g.set_output(loss);
        let bindings = vec![
            (x, random_tensor(&[5, 2], 43, -1.0, 1.0)),
            (t, random_tensor(&[5], 44, -1.0, 1.0)),
        ];
        out.push(("mlp weights".to_string(), gradcheck(&mut g, &bindings, &cfg)?));
    }

    Ok(out)
}

/// One substitution comparison: the computed bound with everything
/// approximated against the bound after one block is made known.
#[derive(Debug, Clone, Serialize)]
pub struct Substitution {
    pub subject: String,
    pub bound_full: f64,
    pub bound_substituted: f64,
    pub strictly_decreased: bool,
}

/// Outcome of the catalog-wide bound verification.
#[derive(Debug, Serialize)]
pub struct CatalogSuite {
    pub reports: Vec<BoundReport>,
    pub substitutions: Vec<Substitution>,
    /// Measured sup error of the fully-known deep chain (exactly zero).
    pub fully_known_ef: f64,
    pub fully_known_bound: f64,
    /// Grid estimate of the full chain's Lipschitz constant and the product
    /// of the per-layer analytic constants.
    pub lip_chain_grid: f64,
    pub lip_product: f64,
    pub lip_relation_holds: bool,
    pub all_pass: bool,
}

/// Run every theorem check over the catalog: the known-output-operator bound
/// for p in {1, 2}, the double-approximation bound with and without a known
/// `u`, and the three-layer deep-chain bound with per-layer substitutions.
pub fn run_catalog_suite(resolution: usize, fit: &FitConfig) -> Result<CatalogSuite> {
    let mut reports = Vec::new();
    let mut substitutions = Vec::new();

    for pair in catalog() {
        let u_hat = fit_pair_u(&pair, 16, fit)?;
        let g_hat = fit_pair_g(&pair, 16, fit)?;

        for p in [NormP::One, NormP::Two] {
            let r = check_theorem2(&pair, &u_hat, p, resolution)?;
            // Substituting the known u zeroes e_u, hence the bound drops to 0.
            substitutions.push(Substitution {
                subject: format!("{} theorem2 p={}", pair.name, r.p),
                bound_full: r.bound,
                bound_substituted: 0.0,
                strictly_decreased: r.bound > 0.0,
            });
            reports.push(r);
        }

        let full = check_theorem3(&pair, Some(&u_hat), &g_hat, resolution)?;
        let known_u = check_theorem3(&pair, None, &g_hat, resolution)?;
        substitutions.push(Substitution {
            subject: format!("{} theorem3 u:=known", pair.name),
            bound_full: full.bound,
            bound_substituted: known_u.bound,
            strictly_decreased: known_u.bound < full.bound,
        });
        reports.push(full);
        reports.push(known_u);
    }

    // Deep chain: approximate every layer, then substitute layers one by one.
    let chain = deep_chain();
    let mut layer_fits = Vec::new();
    for (l, layer) in chain.layers.iter().enumerate() {
        let mut comps = Vec::new();
        for (k, comp) in layer.map.components.iter().enumerate() {
            let mut c = fit.clone();
            c.seed = fit.seed.wrapping_add(7000 + 10 * l as u64 + k as u64);
            let eval = comp.eval.clone();
            let (mlp, _) = fit_mlp(&move |x: &[f64]| eval(x), &layer.domain, 16, &c)?;
            comps.push(mlp);
        }
        layer_fits.push(Some(comps));
    }
    let full4 = check_theorem4(&chain, &layer_fits, resolution.min(81))?;
    for l in 0..chain.depth() {
        let mut subs = layer_fits.clone();
        subs[l] = None;
        let partial = check_theorem4(&chain, &subs, resolution.min(81))?;
        let expected = full4.report.bound - full4.per_layer_terms[l];
        let algebra_ok = (partial.report.bound - expected).abs() <= 1e-9 * full4.report.bound.max(1.0);
        substitutions.push(Substitution {
            subject: format!("{} layer {} := known", chain.name, l + 1),
            bound_full: full4.report.bound,
            bound_substituted: partial.report.bound,
            strictly_decreased: algebra_ok
                && partial.report.bound < full4.report.bound
                && partial.report.pass,
        });
        reports.push(partial.report);
    }
    let known_all = check_theorem4(&chain, &vec![None; chain.depth()], resolution.min(81))?;
    let fully_known_ef = known_all.report.sup_ef;
    let fully_known_bound = known_all.report.bound;
    let lip_relation_holds =
        full4.lip_chain_grid <= full4.lip_product + crate::bounds::SLACK;
    let lip_chain_grid = full4.lip_chain_grid;
    let lip_product = full4.lip_product;
    reports.push(full4.report);
    reports.push(known_all.report);

    let all_pass = reports.iter().all(|r| r.pass)
        && substitutions.iter().all(|s| s.strictly_decreased)
        && fully_known_ef == 0.0
        && fully_known_bound == 0.0
        && lip_relation_holds;

    Ok(CatalogSuite {
        reports,
        substitutions,
        fully_known_ef,
        fully_known_bound,
        lip_chain_grid,
        lip_product,
        lip_relation_holds,
        all_pass,
    })
}

/// Median-over-seeds sup error of fitting `sin(3x)` for each hidden size.
pub fn approximation_scaling(
    hidden_sizes: &[usize],
    seeds: &[u64],
    fit: &FitConfig,
) -> Result<Vec<(usize, f64)>> {
    let domain = crate::bounds::BoxDomain::new(vec![-1.0], vec![1.0])?;
    let mut rows = Vec::new();
    for &n in hidden_sizes {
        let mut sups = Vec::new();
        for &seed in seeds {
            let mut cfg = fit.clone();
            cfg.seed = seed;
            let (_, sup) = fit_mlp(&|x: &[f64]| (3.0 * x[0]).sin(), &domain, n, &cfg)?;
            sups.push(sup);
        }
        sups.sort_by(f64::total_cmp);
        let median = sups[sups.len() / 2];
        rows.push((n, median));
    }
    Ok(rows)
}
