use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aoi_core::{ModelParams, RviConfig, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Solve,
    Verify,
    Simulate,
    Sweep,
}

/// Everything one run needs. Loaded from a flat TOML file, then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub p: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_max: Vec<f64>,
    pub delta_max: u32,
    pub l_max: u32,
    pub span_tol: f64,
    pub max_iters: usize,
    pub epsilon_lambda: f64,
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Also write the slot trace of the first trial when simulating.
    pub trace: bool,
    pub pipelines: Vec<Pipeline>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            p: vec![0.3],
            gamma: vec![0.3],
            gamma_max: vec![0.3],
            delta_max: aoi_core::model::DEFAULT_DELTA_MAX,
            l_max: aoi_core::model::DEFAULT_L_MAX,
            span_tol: 1e-6,
            max_iters: 100_000,
            epsilon_lambda: aoi_core::constrained::DEFAULT_EPSILON_LAMBDA,
            horizon: 10_000,
            trials: 1000,
            seed: 0,
            out: PathBuf::from("out"),
            trace: false,
            pipelines: vec![Pipeline::Solve],
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Grid points in row-major order over (p, gamma, gamma_max).
    pub fn grid(&self) -> Result<Vec<ModelParams>> {
        let mut points = Vec::new();
        for &p in &self.p {
            for &gamma in &self.gamma {
                for &gamma_max in &self.gamma_max {
                    let params = ModelParams::with_truncation(
                        p,
                        gamma,
                        gamma_max,
                        self.delta_max,
                        self.l_max,
                    )
                    .with_context(|| format!("grid point {}", point_label(p, gamma, gamma_max)))?;
                    points.push(params);
                }
            }
        }
        Ok(points)
    }

    pub fn rvi(&self) -> RviConfig {
        RviConfig {
            span_tol: self.span_tol,
            max_iters: self.max_iters,
            ..RviConfig::default()
        }
    }

    pub fn sim(&self, params: ModelParams) -> SimConfig {
        SimConfig {
            horizon: self.horizon,
            trials: self.trials,
            seed: self.seed,
            ..SimConfig::new(params)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.rvi().validate()?;
        if !(self.epsilon_lambda > 0.0 && self.epsilon_lambda.is_finite()) {
            bail!(
                "epsilon_lambda must be positive, got {}",
                self.epsilon_lambda
            );
        }
        if let Some(&params) = grid.first() {
            self.sim(params).validate()?;
        }
        Ok(())
    }
}

pub fn point_label(p: f64, gamma: f64, gamma_max: f64) -> String {
    format!("p={p} gamma={gamma} gamma_max={gamma_max}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let spec =
            ExperimentSpec::from_toml("p = [0.3, 0.5]\nseed = 7\npipelines = [\"sweep\"]").unwrap();
        assert_eq!(spec.p, [0.3, 0.5]);
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.pipelines, [Pipeline::Sweep]);
        assert_eq!(spec.delta_max, 1000);
        assert_eq!(spec.grid().unwrap().len(), 2);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ExperimentSpec::from_toml("horizn = 5").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = [
            "p = [0.0]",
            "gamma = [1.0]",
            "gamma_max = [1.5]",
            "l_max = 0",
            "delta_max = 3\nl_max = 2",
            "span_tol = 0.0",
            "epsilon_lambda = -1.0",
            "trials = 0",
            "horizon = 0",
        ];
        for text in bad {
            let spec = ExperimentSpec::from_toml(text).unwrap();
            assert!(spec.validate().is_err(), "{text}");
        }
    }

    #[test]
    fn empty_grid_is_valid() {
        let spec = ExperimentSpec::from_toml("gamma_max = []").unwrap();
        spec.validate().unwrap();
        assert!(spec.grid().unwrap().is_empty());
    }
}
