//! Experiment execution: each run consumes a validated config, computes, and
//! writes a deterministic artifact set into the output directory.

use crate::config::{Experiment, ExperimentConfig};
use knop_core::bounds::FitConfig;
use knop_core::ct::{
    fbp_reconstruct, train_limited_angle, LimitedAngleConfig, LimitedAngleOutcome,
};
use knop_core::error::{Error, Result};
use knop_core::frangi::{train_frangi, FrangiTrainConfig, ScaleBank};
use knop_core::io::{export_pgm16, export_raw};
use knop_core::phantom::{
    analytic_sino_fan, rasterize_ellipses, shepp_logan_ellipses, shepp_logan_interior_mask,
};
use knop_core::rebin::{train_rebin, RebinConfig, RebinFlags, RebinTrainConfig};
use knop_core::train::records_to_csv;
use knop_core::verify::{approximation_scaling, gradcheck_suite, run_catalog_suite};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub struct RunOutput {
    pub artifacts: Vec<PathBuf>,
    /// Human-readable lines printed unless --quiet.
    pub summary: Vec<String>,
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text)?;
    Ok(path.to_path_buf())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<PathBuf> {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap())?;
    Ok(path.to_path_buf())
}

pub fn run(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<RunOutput> {
    match &cfg.experiment {
        Experiment::FbpReconstruct(c) => {
            let (grid, geometry, use_parker) = (&c.grid, &c.geometry, &c.use_parker);
            let grid = grid.build()?;
            let geom = geometry.build(grid.clone())?;
            let scene = shepp_logan_ellipses();
            let sino = analytic_sino_fan(&scene, &geom);
            let recon = fbp_reconstruct(&sino, &geom, *use_parker)?;
            let truth = rasterize_ellipses(&scene, &grid, 4);
            let roi = shepp_logan_interior_mask(&grid, 0.9);
            let (mut err2, mut ref2) = (0.0, 0.0);
            for ((&r, &t), &inside) in
                recon.real().iter().zip(truth.real()).zip(&roi)
            {
                if inside {
                    err2 += (r - t) * (r - t);
                    ref2 += t * t;
                }
            }
            let rmse = (err2 / ref2).sqrt();

            let mut artifacts = Vec::new();
            artifacts.extend(export_pgm16(&recon, &out.join("recon.pgm"))?);
            artifacts.extend(export_raw(&recon, &out.join("recon.raw"))?);
            let csv = format!("metric,value\ninterior_rel_rmse,{rmse}\n");
            artifacts.push(write_text(&out.join("metrics.csv"), &csv)?);
            Ok(RunOutput {
                artifacts,
                summary: vec![format!(
                    "fbp-reconstruct: interior relative rmse {rmse:.5} (parker={use_parker})"
                )],
            })
        }

        Experiment::TrainCt(c) => {
            let (grid, geometry) = (&c.grid, &c.geometry);
            let (wedge_degrees, wedge_start_frac) = (&c.wedge_degrees, &c.wedge_start_frac);
            let (n_train, n_heldout) = (&c.n_train, &c.n_heldout);
            let (epochs, learning_rate) = (&c.epochs, &c.learning_rate);
            let grid = grid.build()?;
            let geom = Arc::new(geometry.build(grid)?);
            let outcome: LimitedAngleOutcome = train_limited_angle(&LimitedAngleConfig {
                geometry: geom,
                wedge_degrees: *wedge_degrees,
                wedge_start_frac: *wedge_start_frac,
                n_train: *n_train,
                n_heldout: *n_heldout,
                epochs: *epochs,
                learning_rate: *learning_rate,
                seed,
            })?;
            let improvement = 1.0 - outcome.final_heldout_mse / outcome.init_heldout_mse;
            let mut artifacts = Vec::new();
            artifacts.push(write_text(
                &out.join("metrics.csv"),
                &records_to_csv(&outcome.records),
            )?);
            artifacts.extend(export_raw(&outcome.trained_weights, &out.join("weights.raw"))?);
            artifacts.extend(export_pgm16(&outcome.trained_weights, &out.join("weights.pgm"))?);
            artifacts.extend(export_raw(&outcome.trained_filter, &out.join("filter.raw"))?);
            artifacts.push(write_json(
                &out.join("report.json"),
                &json!({
                    "init_heldout_mse": outcome.init_heldout_mse,
                    "final_heldout_mse": outcome.final_heldout_mse,
                    "improvement": improvement,
                    "wedge_views": [outcome.wedge_views.0, outcome.wedge_views.1],
                }),
            )?);
            Ok(RunOutput {
                artifacts,
                summary: vec![format!(
                    "train-ct: held-out mse {:.6} -> {:.6} ({:.1}% better)",
                    outcome.init_heldout_mse,
                    outcome.final_heldout_mse,
                    improvement * 100.0
                )],
            })
        }

        Experiment::TrainFrangi(c) => {
            let (image_size, n_train, n_eval) = (&c.image_size, &c.n_train, &c.n_eval);
            let (tubes, scales) = (&c.tubes, &c.scales);
            let (epochs, learning_rate) = (&c.epochs, &c.learning_rate);
            let outcome = train_frangi(&FrangiTrainConfig {
                image_size: *image_size,
                n_train: *n_train,
                n_eval: *n_eval,
                tubes: tubes.clone(),
                scales: scales.clone().unwrap_or_else(ScaleBank::default_scales),
                epochs: *epochs,
                learning_rate: *learning_rate,
                seed,
                ..Default::default()
            })?;
            let mut artifacts = Vec::new();
            artifacts.push(write_text(
                &out.join("metrics.csv"),
                &records_to_csv(&outcome.records),
            )?);
            artifacts.extend(export_pgm16(&outcome.sample.image, &out.join("sample_image.pgm"))?);
            artifacts.extend(export_pgm16(
                &outcome.sample.fixed_response,
                &out.join("sample_fixed.pgm"),
            )?);
            artifacts.extend(export_pgm16(
                &outcome.sample.trained_response,
                &out.join("sample_trained.pgm"),
            )?);
            let eval_csv = format!(
                "metric,fixed,trained\nauc,{},{}\ndice,{},{}\n",
                outcome.fixed_auc, outcome.trained_auc, outcome.fixed_dice, outcome.trained_dice
            );
            artifacts.push(write_text(&out.join("eval.csv"), &eval_csv)?);
            artifacts.push(write_json(
                &out.join("report.json"),
                &json!({
                    "fixed_auc": outcome.fixed_auc,
                    "trained_auc": outcome.trained_auc,
                    "fixed_dice": outcome.fixed_dice,
                    "trained_dice": outcome.trained_dice,
                    "trainable_parameters": outcome.trainable_parameters,
                }),
            )?);
            Ok(RunOutput {
                artifacts,
                summary: vec![format!(
                    "train-frangi: auc {:.4} -> {:.4}, {} trainable parameters",
                    outcome.fixed_auc, outcome.trained_auc, outcome.trainable_parameters
                )],
            })
        }

        Experiment::TrainRebin(c) => {
            let (grid, parallel, fan) = (&c.grid, &c.parallel, &c.fan);
            let (n_train, n_heldout) = (&c.n_train, &c.n_heldout);
            let (epochs, learning_rate) = (&c.epochs, &c.learning_rate);
            let grid = grid.build()?;
            let par = parallel.build(grid.clone())?;
            let fan_geom = fan.build(grid)?;
            let rc = RebinConfig::new(par, fan_geom)?;
            let outcome = train_rebin(
                &rc,
                &RebinTrainConfig {
                    n_train: *n_train,
                    n_heldout: *n_heldout,
                    epochs: *epochs,
                    learning_rate: *learning_rate,
                    seed,
                    flags: RebinFlags::default(),
                },
            )?;
            let ratio = outcome.final_heldout_mse / outcome.init_heldout_mse;
            let mut artifacts = Vec::new();
            artifacts.push(write_text(
                &out.join("metrics.csv"),
                &records_to_csv(&outcome.records),
            )?);
            artifacts.extend(export_raw(&outcome.c_params, &out.join("c_spectrum.raw"))?);
            artifacts.extend(export_raw(&outcome.w, &out.join("w_image.raw"))?);
            artifacts.extend(export_pgm16(&outcome.w, &out.join("w_image.pgm"))?);
            artifacts.push(write_json(
                &out.join("report.json"),
                &json!({
                    "init_heldout_mse": outcome.init_heldout_mse,
                    "final_heldout_mse": outcome.final_heldout_mse,
                    "mse_ratio": ratio,
                    "parameter_count": rc.parameter_count(),
                }),
            )?);
            Ok(RunOutput {
                artifacts,
                summary: vec![format!(
                    "train-rebin: held-out mse {:.6} -> {:.6} (ratio {:.3})",
                    outcome.init_heldout_mse, outcome.final_heldout_mse, ratio
                )],
            })
        }

        Experiment::VerifyBounds(c) => {
            let (grid_resolution, fit) = (&c.grid_resolution, &c.fit);
            let fit_cfg = FitConfig {
                epochs: fit.epochs,
                learning_rate: fit.learning_rate,
                seed,
                ..Default::default()
            };
            let suite = run_catalog_suite(*grid_resolution, &fit_cfg)?;
            let scaling = approximation_scaling(&[4, 8, 16, 32], &[seed, seed + 1, seed + 2], &fit_cfg)?;

            let mut artifacts = Vec::new();
            artifacts.push(write_json(
                &out.join("bounds.json"),
                &serde_json::to_value(&suite).unwrap(),
            )?);
            let mut csv = String::from(knop_core::bounds::BoundReport::csv_header());
            csv.push('\n');
            for r in &suite.reports {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            artifacts.push(write_text(&out.join("bounds.csv"), &csv)?);
            let scaling_csv: String = std::iter::once("hidden,median_sup_error\n".to_string())
                .chain(scaling.iter().map(|(n, e)| format!("{n},{e}\n")))
                .collect();
            artifacts.push(write_text(&out.join("approximation_scaling.csv"), &scaling_csv)?);

            let mut summary = vec![format!(
                "verify-bounds: {} checks, all_pass={}",
                suite.reports.len(),
                suite.all_pass
            )];
            for r in &suite.reports {
                summary.push(format!(
                    "  {:<22} {:<24} p={}  sup|e_f|={:.3e}  bound={:.3e}  {}",
                    r.theorem,
                    r.subject,
                    r.p,
                    r.sup_ef,
                    r.bound,
                    if r.pass { "PASS" } else { "FAIL" }
                ));
            }
            summary.push(format!(
                "  lipschitz chain {:.4} <= product {:.4}: {}",
                suite.lip_chain_grid,
                suite.lip_product,
                if suite.lip_relation_holds { "PASS" } else { "FAIL" }
            ));
            if !suite.all_pass {
                // Keep the artifacts, but report the run as a numerical failure.
                return Err(Error::Numerical("bound verification failed".into()));
            }
            Ok(RunOutput { artifacts, summary })
        }

        Experiment::Gradcheck(c) => {
            let tolerance = &c.tolerance;
            let reports = gradcheck_suite(*tolerance)?;
            let all_pass = reports.iter().all(|(_, r)| r.passed);
            let value = json!({
                "tolerance": tolerance,
                "checks": reports
                    .iter()
                    .map(|(name, r)| {
                        json!({
                            "name": name,
                            "max_rel_err": r.max_rel_err,
                            "passed": r.passed,
                        })
                    })
                    .collect::<Vec<_>>(),
                "all_pass": all_pass,
            });
            let artifacts = vec![write_json(&out.join("gradcheck.json"), &value)?];
            let summary = reports
                .iter()
                .map(|(name, r)| {
                    format!(
                        "gradcheck {:<20} max rel err {:.3e}  {}",
                        name,
                        r.max_rel_err,
                        if r.passed { "PASS" } else { "FAIL" }
                    )
                })
                .collect();
            if !all_pass {
                return Err(Error::Numerical("gradient check failed".into()));
            }
            Ok(RunOutput { artifacts, summary })
        }
    }
}
