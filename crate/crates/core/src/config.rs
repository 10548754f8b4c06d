//! Experiment configuration files (TOML) with dotted-path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::eval::EvalConfig;
use crate::forward::OperatorKind;
use crate::sim::{default_scenario, ScenarioSpec};
use crate::solver::{DenoiserConfig, SolverConfig};

/// Grid search over μ on a time-compressed copy of the scenario with its own seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// Empty means "use `solver.mu` as given".
    pub mu_grid: Vec<f64>,
    pub validation_seed: u64,
    pub time_scale: f64,
    pub operator: OperatorKind,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            mu_grid: Vec::new(),
            validation_seed: 7,
            time_scale: 0.25,
            operator: OperatorKind::MatrixFree,
        }
    }
}

impl TuningConfig {
    pub fn validation_scenario(&self, scenario: &ScenarioSpec) -> Result<ScenarioSpec> {
        let mut v = scenario.time_scaled(self.time_scale)?;
        v.seed = self.validation_seed;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.mu_grid.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(PamError::Config(format!("mu grid value {bad} must be finite and >= 0")));
        }
        if !(self.time_scale > 0.0 && self.time_scale <= 1.0) {
            return Err(PamError::Config(format!("time_scale {} must be in (0, 1]", self.time_scale)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
}

impl Default for ExperimentConfig {
    /// The reference scenario with a desk-scale solver budget and a TV denoiser.
    fn default() -> Self {
        Self {
            scenario: default_scenario(),
            solver: desk_solver(),
            evaluation: EvalConfig::default(),
            tuning: TuningConfig {
                mu_grid: vec![3.0, 10.0, 30.0],
                ..Default::default()
            },
        }
    }
}

/// Solver settings sized for the reference scenario on one core.
pub fn desk_solver() -> SolverConfig {
    SolverConfig {
        mu: 10.0,
        max_iter: 30,
        cg_max_iter: 10,
        denoiser: DenoiserConfig::Tv {
            weight: 0.02,
            iterations: 20,
            temporal: false,
        },
        ..Default::default()
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.solver.validate()?;
        self.solver.denoiser.validate()?;
        self.tuning.validate()?;
        if self.evaluation.background_erosion > 64 {
            return Err(PamError::Config("background_erosion is unreasonably large".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| PamError::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = value
            .try_into()
            .map_err(|e: toml::de::Error| PamError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, overrides)
    }

    /// Default configuration with overrides applied.
    pub fn with_overrides(overrides: &[String]) -> Result<Self> {
        Self::from_toml_str(&Self::default().to_toml_string()?, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| PamError::Config(format!("config: {e}")))
    }
}

/// Applies `a.b.c=value`; numeric segments index arrays, values parse as TOML
/// literals and fall back to bare strings.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| PamError::Config(format!("override '{assignment}' is not key=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(PamError::Config(format!("override '{assignment}' has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let segments: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| PamError::Config(format!("'{seg}' in '{path}' must index an array")))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| {
                    PamError::Config(format!("index {idx} in '{path}' is out of range (length {len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(PamError::Config(format!(
                    "'{}' in '{path}' is not a table",
                    segments[..depth].join(".")
                )))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let o = |s: &str| s.to_string();
        let cfg = ExperimentConfig::with_overrides(&[
            o("solver.mu=0.5"),
            o("scenario.clouds.1.amplitude = 0.25"),
            o("scenario.snr_db=inf"),
            o("tuning.mu_grid=[]"),
            o("tuning.operator=fft"),
        ])
        .unwrap();
        assert_eq!(cfg.solver.mu, 0.5);
        assert_eq!(cfg.scenario.clouds[1].amplitude, 0.25);
        assert!(cfg.scenario.snr_db.is_infinite());
        assert!(cfg.tuning.mu_grid.is_empty());
        assert_eq!(cfg.tuning.operator, OperatorKind::Fft);
    }

    #[test]
    fn bad_overrides_and_configs_are_rejected() {
        let o = |s: &str| vec![s.to_string()];
        assert!(ExperimentConfig::with_overrides(&o("solver.rho=-1")).is_err());
        assert!(ExperimentConfig::with_overrides(&o("solver.no_such_key=1")).is_err());
        assert!(ExperimentConfig::with_overrides(&o("scenario.clouds.9.amplitude=1")).is_err());
        assert!(ExperimentConfig::with_overrides(&o("scenario.clouds=[]")).is_err());
        assert!(ExperimentConfig::with_overrides(&o("solver.mu.x=1")).is_err());
        assert!(ExperimentConfig::with_overrides(&o("=1")).is_err());
        assert!(ExperimentConfig::with_overrides(&o("solver.mu")).is_err());
        assert!(ExperimentConfig::with_overrides(&o("tuning.time_scale=2")).is_err());
        assert!(ExperimentConfig::from_toml_str("not toml [", &[]).is_err());
    }

    #[test]
    fn string_values_need_no_quotes() {
        let cfg = ExperimentConfig::with_overrides(&["tuning.operator=conv".to_string()]).unwrap();
        assert_eq!(cfg.tuning.operator, OperatorKind::Conv);
    }

    #[test]
    fn validation_scenario_is_compressed_and_reseeded() {
        let cfg = ExperimentConfig::default();
        let v = cfg.tuning.validation_scenario(&cfg.scenario).unwrap();
        assert_eq!(v.geometry.samples, cfg.scenario.geometry.samples / 4);
        assert_eq!(v.windows().len(), cfg.scenario.windows().len());
        assert_ne!(v.seed, cfg.scenario.seed);
        v.validate().unwrap();
    }
}
