//! Experiment configuration: one JSON document per run. Unknown keys are
//! rejected so typos fail fast, before any artifact is written.

use knop_core::ct::{FanBeamGeometry, ImageGrid, ParallelGeometry};
use knop_core::error::{Error, Result};
use knop_core::phantom::TubeSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub size: usize,
    /// Half-width of the square field of view in world units.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_half_width() -> f64 {
    1.0
}

impl GridConfig {
    pub fn build(&self) -> Result<ImageGrid> {
        if self.size == 0 {
            return Err(Error::arg("grid size must be positive"));
        }
        let grid = ImageGrid::square(self.size, 2.0 * self.half_width / self.size as f64);
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanConfig {
    pub dsi: f64,
    pub dsd: f64,
    pub n_angles: usize,
    pub n_det: usize,
    /// Explicit physical detector spacing; when absent it is derived from the
    /// FOV-covering spacing times `detector_margin`.
    #[serde(default)]
    pub det_spacing: Option<f64>,
    #[serde(default = "default_margin")]
    pub detector_margin: f64,
}

fn default_margin() -> f64 {
    1.0
}

impl FanConfig {
    pub fn build(&self, grid: ImageGrid) -> Result<FanBeamGeometry> {
        let spacing = match self.det_spacing {
            Some(s) => s,
            None => {
                FanBeamGeometry::covering_det_spacing(self.dsi, self.dsd, self.n_det, &grid)?
                    * self.detector_margin
            }
        };
        FanBeamGeometry::short_scan(self.dsi, self.dsd, self.n_angles, self.n_det, spacing, grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelConfig {
    pub n_angles: usize,
    pub n_det: usize,
    /// Detector span as a multiple of the grid diagonal.
    #[serde(default = "default_span")]
    pub span_margin: f64,
}

fn default_span() -> f64 {
    1.1
}

impl ParallelConfig {
    pub fn build(&self, grid: ImageGrid) -> Result<ParallelGeometry> {
        let span = grid.diagonal() * self.span_margin;
        ParallelGeometry::uniform(self.n_angles, self.n_det, span / self.n_det as f64, grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_fit_epochs")]
    pub epochs: usize,
    #[serde(default = "default_fit_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

fn default_fit_epochs() -> usize {
    3000
}
fn default_fit_lr() -> f64 {
    0.02
}
fn default_hidden() -> usize {
    16
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            epochs: default_fit_epochs(),
            learning_rate: default_fit_lr(),
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbpReconstructCfg {
    pub grid: GridConfig,
    pub geometry: FanConfig,
    #[serde(default = "default_true")]
    pub use_parker: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCtCfg {
    pub grid: GridConfig,
    pub geometry: FanConfig,
    pub wedge_degrees: f64,
    #[serde(default = "default_wedge_start")]
    pub wedge_start_frac: f64,
    pub n_train: usize,
    pub n_heldout: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFrangiCfg {
    pub image_size: usize,
    pub n_train: usize,
    pub n_eval: usize,
    #[serde(default)]
    pub tubes: TubeSpec,
    #[serde(default)]
    pub scales: Option<Vec<f64>>,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRebinCfg {
    pub grid: GridConfig,
    pub parallel: ParallelConfig,
    pub fan: FanConfig,
    pub n_train: usize,
    pub n_heldout: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBoundsCfg {
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default)]
    pub fit: FitSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckCfg {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_true() -> bool {
    true
}
fn default_wedge_start() -> f64 {
    0.35
}
fn default_resolution() -> usize {
    201
}
fn default_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Clone)]
pub enum Experiment {
    FbpReconstruct(FbpReconstructCfg),
    TrainCt(TrainCtCfg),
    TrainFrangi(TrainFrangiCfg),
    TrainRebin(TrainRebinCfg),
    VerifyBounds(VerifyBoundsCfg),
    Gradcheck(GradcheckCfg),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out_dir: String,
}

impl ExperimentConfig {
    /// Two-phase parse: the `experiment`, `seed`, and `out_dir` keys are
    /// extracted, the remainder must exactly match the experiment's payload
    /// (unknown keys are rejected).
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::arg(format!("config parse error: {e}")))?;
        let serde_json::Value::Object(mut map) = value else {
            return Err(Error::arg("config must be a JSON object"));
        };
        let kind = match map.remove("experiment") {
            Some(serde_json::Value::String(s)) => s,
            _ => return Err(Error::arg("missing string field 'experiment'")),
        };
        let seed = match map.remove("seed") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::arg("'seed' must be a non-negative integer"))?,
            None => return Err(Error::arg("missing field 'seed'")),
        };
        let out_dir = match map.remove("out_dir") {
            Some(serde_json::Value::String(s)) => s,
            _ => return Err(Error::arg("missing string field 'out_dir'")),
        };
        let rest = serde_json::Value::Object(map);
        let parse_err = |e: serde_json::Error| Error::arg(format!("config parse error: {e}"));
        let experiment = match kind.as_str() {
            "fbp-reconstruct" => {
                Experiment::FbpReconstruct(serde_json::from_value(rest).map_err(parse_err)?)
            }
            "train-ct" => Experiment::TrainCt(serde_json::from_value(rest).map_err(parse_err)?),
            "train-frangi" => {
                Experiment::TrainFrangi(serde_json::from_value(rest).map_err(parse_err)?)
            }
            "train-rebin" => {
                Experiment::TrainRebin(serde_json::from_value(rest).map_err(parse_err)?)
            }
            "verify-bounds" => {
                Experiment::VerifyBounds(serde_json::from_value(rest).map_err(parse_err)?)
            }
            "gradcheck" => Experiment::Gradcheck(serde_json::from_value(rest).map_err(parse_err)?),
            other => return Err(Error::arg(format!("unknown experiment kind '{other}'"))),
        };
        Ok(ExperimentConfig { experiment, seed, out_dir })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let bad = br#"{"experiment":"gradcheck","seed":1,"out_dir":"o","bogus":2}"#;
        assert!(ExperimentConfig::parse(bad).is_err());
    }

    #[test]
    fn minimal_gradcheck_config_parses() {
        let ok = br#"{"experiment":"gradcheck","seed":1,"out_dir":"o"}"#;
        let cfg = ExperimentConfig::parse(ok).unwrap();
        assert!(matches!(cfg.experiment, Experiment::Gradcheck(_)));
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn missing_required_fields_rejected() {
        let bad = br#"{"experiment":"fbp-reconstruct","seed":1,"out_dir":"o"}"#;
        assert!(ExperimentConfig::parse(bad).is_err());
        let no_seed = br#"{"experiment":"gradcheck","out_dir":"o"}"#;
        assert!(ExperimentConfig::parse(no_seed).is_err());
    }

    #[test]
    fn unknown_experiment_kind_rejected() {
        let bad = br#"{"experiment":"launch-rockets","seed":1,"out_dir":"o"}"#;
        assert!(ExperimentConfig::parse(bad).is_err());
    }
}
