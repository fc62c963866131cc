//! Experiment configuration: TOML-serializable, hashable, lintable.

use crate::ensemble::{CouplingConfig, EnsembleSpec};
use crate::priors::Prior;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Default Monte Carlo sample count for matrix-SE expectations.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Monte Carlo AMP trials against the SE prediction.
    CsMc,
    /// State evolution only; writes the schedule CSV.
    SeOnly,
    /// Phase curve over an undersampling grid plus bisection.
    Sweep,
    /// Exact equivalence of the three orbit implementations.
    EmbedCheck,
    /// Symmetric-orbit statistics against the matrix SE, plus the
    /// diagonal identity.
    GeneralSeCheck,
}

/// Tolerance gates; all acceptance thresholds live in the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative tolerance on empirical-vs-predicted MSE.
    pub rel_tol: f64,
    /// Multiplier on the cross-trial standard deviation.
    pub sigma_mult: f64,
    /// Max relative coordinate deviation in the embedding check.
    pub embed_tol: f64,
    /// Max relative deviation in the diagonal identity.
    pub diag_tol: f64,
    /// Relative tolerance on empirical second moments vs `Sigma^t`.
    pub moment_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel_tol: 0.10,
            sigma_mult: 3.0,
            embed_tol: 1e-6,
            diag_tol: 0.02,
            moment_tol: 0.10,
        }
    }
}

/// Grid and bisection parameters for `kind = "sweep"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
    /// A run counts as reconstructing once its worst block MSE converges
    /// below this threshold.
    #[serde(default = "default_mse_threshold")]
    pub mse_threshold: f64,
    /// Bisection stops once the bracket is narrower than this.
    #[serde(default = "default_bisection_tol")]
    pub bisection_tol: f64,
    /// Iteration cap for each SE run.
    #[serde(default = "default_sweep_iterations")]
    pub max_iterations: usize,
    /// Optional undersampling values to confirm with AMP trials.
    #[serde(default)]
    pub mc_confirm: Vec<f64>,
}

fn default_mse_threshold() -> f64 {
    1e-3
}

fn default_bisection_tol() -> f64 {
    1e-3
}

fn default_sweep_iterations() -> usize {
    2000
}

fn default_stop_tol() -> f64 {
    1e-10
}

fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

fn default_symmetric_n() -> usize {
    10_000
}

fn default_test_functions() -> Vec<String> {
    vec!["x".into(), "x2".into(), "abs".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub prior: Prior,
    pub coupling: CouplingConfig,
    pub m0: usize,
    pub n0: usize,
    pub noise_var: f64,
    /// AMP / SE iteration horizon `T`.
    pub iterations: usize,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// SE fixed-point stopping tolerance.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    /// Monte Carlo samples per matrix-SE expectation.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Orbit dimension for `general_se_check`.
    #[serde(default = "default_symmetric_n")]
    pub symmetric_n: usize,
    /// Test statistics for `general_se_check`: any of `x`, `x2`, `abs`.
    #[serde(default = "default_test_functions")]
    pub test_functions: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Stable hash of the canonicalized config, stamped into every output
    /// row so runs can be joined to their config.
    pub fn hash(&self) -> Result<String> {
        let canonical = self.to_toml()?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    /// Builds the ensemble spec from the coupling fragment and `m0, n0`.
    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        EnsembleSpec::new(self.coupling.build()?, self.m0, self.n0)
    }

    pub fn delta(&self) -> f64 {
        self.m0 as f64 / self.n0 as f64
    }

    /// Lints the config without running anything.
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.noise_var < 0.0 || !self.noise_var.is_finite() {
            return Err(Error::Config(format!("noise_var {} invalid", self.noise_var)));
        }
        self.ensemble_spec()?;
        match self.kind {
            ExperimentKind::Sweep => {
                let sweep = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| Error::Config("kind = sweep needs a [sweep] section".into()))?;
                if sweep.points < 2 {
                    return Err(Error::Config("sweep needs at least 2 grid points".into()));
                }
                if !(sweep.delta_min > 0.0 && sweep.delta_max > sweep.delta_min) {
                    return Err(Error::Config("sweep needs 0 < delta_min < delta_max".into()));
                }
            }
            ExperimentKind::EmbedCheck => {
                let spec = self.ensemble_spec()?;
                if spec.m() > 200 {
                    return Err(Error::Config(format!(
                        "embed_check is exact algebra on small instances; m = {} exceeds 200",
                        spec.m()
                    )));
                }
            }
            ExperimentKind::GeneralSeCheck => {
                for f in &self.test_functions {
                    if !matches!(f.as_str(), "x" | "x2" | "abs") {
                        return Err(Error::Config(format!("unknown test function {f}")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Per-trial seed: `base_seed + k`.
    pub fn trial_seed(&self, k: usize) -> u64 {
        self.base_seed.wrapping_add(k as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::BandConfig;

    fn sample_config() -> ExperimentConfig {
        ExperimentConfig {
            kind: ExperimentKind::CsMc,
            prior: Prior::bernoulli_gaussian(0.1, 0.0, 1.0).unwrap(),
            coupling: CouplingConfig::Band {
                band: BandConfig { lr: 18, lc: 16, profile: vec![1.0, 1.0] },
            },
            m0: 300,
            n0: 1000,
            noise_var: 1e-4,
            iterations: 10,
            trials: 20,
            base_seed: 1,
            out: Some(PathBuf::from("out.csv")),
            sweep: None,
            tolerances: Tolerances::default(),
            stop_tol: 1e-10,
            mc_samples: DEFAULT_MC_SAMPLES,
            symmetric_n: 10_000,
            test_functions: default_test_functions(),
        }
    }

    #[test]
    fn config_round_trips_losslessly() {
        let config = sample_config();
        let text = config.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let config = sample_config();
        assert_eq!(config.hash().unwrap(), config.hash().unwrap());
        let mut other = config.clone();
        other.base_seed = 2;
        assert_ne!(config.hash().unwrap(), other.hash().unwrap());
    }

    #[test]
    fn parses_handwritten_toml() {
        let text = r#"
            kind = "cs_mc"
            m0 = 300
            n0 = 1000
            noise_var = 1e-4
            iterations = 10
            trials = 20
            base_seed = 1

            [prior]
            atoms = [[0.0, 0.9]]
            gaussians = [[0.1, 0.0, 1.0]]

            [coupling.band]
            Lr = 18
            Lc = 16
            profile = [1.0, 1.0]
        "#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.kind, ExperimentKind::CsMc);
        assert_eq!(config.ensemble_spec().unwrap().m(), 5400);
        assert_eq!(config.tolerances, Tolerances::default());
    }

    #[test]
    fn explicit_coupling_parses() {
        let text = r#"
            kind = "se_only"
            m0 = 10
            n0 = 20
            noise_var = 0.01
            iterations = 5
            trials = 1
            base_seed = 7

            [prior]
            gaussians = [[1.0, 0.0, 1.0]]

            [coupling]
            Lr = 2
            Lc = 2
            rows = [[0.5, 0.5], [0.5, 0.5]]
        "#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.ensemble_spec().unwrap().n(), 40);
    }

    #[test]
    fn lint_rejects_bad_configs() {
        let mut config = sample_config();
        config.trials = 0;
        assert!(config.validate().is_err());

        let mut config = sample_config();
        config.kind = ExperimentKind::Sweep;
        assert!(config.validate().is_err(), "sweep without grid");

        let mut config = sample_config();
        config.kind = ExperimentKind::EmbedCheck;
        assert!(config.validate().is_err(), "embed check with huge m");

        let mut config = sample_config();
        config.kind = ExperimentKind::GeneralSeCheck;
        config.test_functions = vec!["cube".into()];
        assert!(config.validate().is_err());
    }
}
