//! Run configuration (TOML) and the JSON manifest written next to results.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::BootstrapPlan;
use crate::error::{Error, Result};
use crate::evaluation::{EvaluationConfig, LogisticFixed, Method};
use crate::inference::{FitConfig, ModelKind, ParamVector};
use crate::profiles::{ScanPolicy, Threshold};
use crate::simulation::{ScenarioName, ScenarioSpec, Simulator};

/// Model choice as written in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Exp,
    ExpRaw,
    Logistic,
}

impl ModelChoice {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelChoice::Exp => ModelKind::Exponential,
            ModelChoice::ExpRaw => ModelKind::ExponentialRaw,
            ModelChoice::Logistic => ModelKind::logistic(),
        }
    }

    /// Template with neutral starting values; for the logistic model the
    /// capacity and the modified population's initial size are fixed.
    pub fn template(self, logistic: LogisticFixed) -> Result<ParamVector> {
        match self {
            ModelChoice::Exp => ParamVector::new(self.kind(), vec![0.0, 1.0, 0.2]),
            ModelChoice::ExpRaw => ParamVector::new(self.kind(), vec![0.0, 0.0, 1.0, 1.0, 0.2]),
            ModelChoice::Logistic => ParamVector::new(
                self.kind(),
                vec![
                    0.0,
                    0.0,
                    logistic.capacity,
                    logistic.x1_0,
                    logistic.x1_0,
                    0.2,
                ],
            )?
            .fix("K")?
            .fix("x1_0"),
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelChoice::Exp => "exp",
            ModelChoice::ExpRaw => "exp_raw",
            ModelChoice::Logistic => "logistic",
        })
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(ModelChoice::Exp),
            "exp_raw" => Ok(ModelChoice::ExpRaw),
            "logistic" => Ok(ModelChoice::Logistic),
            _ => Err(Error::Config(format!(
                "unknown model {s:?} (expected exp, exp_raw or logistic)"
            ))),
        }
    }
}

/// The scenario by sample-size grid of the simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub scenarios: Vec<ScenarioName>,
    pub mice_per_output_day: Vec<usize>,
    pub n_datasets: usize,
    pub simulator: Simulator,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenarios: ScenarioName::TABLE.to_vec(),
            mice_per_output_day: vec![2, 4, 8, 16],
            n_datasets: 100,
            simulator: Simulator::default(),
        }
    }
}

impl StudyConfig {
    pub fn specs(&self) -> Result<Vec<ScenarioSpec>> {
        let mut out = Vec::new();
        for &name in &self.scenarios {
            for &mice in &self.mice_per_output_day {
                let mut s = ScenarioSpec::named(name, mice)?;
                s.n_datasets = self.n_datasets;
                s.simulator = self.simulator;
                s.validate()?;
                out.push(s);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub n_boot: usize,
    /// Consensus band half-width; defaults to the 95% KS value for the
    /// number of replicates.
    pub band: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n_boot: 300,
            band: None,
        }
    }
}

/// Everything a run depends on. A saved config re-runs to identical output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelChoice,
    pub threshold: Threshold,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub early_day: f64,
    pub early_window: f64,
    pub fit: FitConfig,
    pub scan: ScanPolicy,
    pub bootstrap: BootstrapPlan,
    pub logistic: LogisticFixed,
    pub calibration: CalibrationConfig,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eval = EvaluationConfig::default();
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            model: ModelChoice::Exp,
            threshold: Threshold::Chi1Sq,
            alpha: eval.alpha,
            methods: eval.methods,
            early_day: eval.early_day,
            early_window: eval.early_window,
            fit: eval.fit,
            scan: eval.scan,
            bootstrap: eval.bootstrap,
            logistic: eval.logistic,
            calibration: CalibrationConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.threshold, Threshold::Percentile) {
            return Err(Error::Config(
                "percentile is not a profile-likelihood threshold".into(),
            ));
        }
        if self.calibration.n_boot == 0 {
            return Err(Error::Config("calibration.n_boot must be >= 1".into()));
        }
        if self.study.n_datasets == 0 {
            return Err(Error::Config("study.n_datasets must be >= 1".into()));
        }
        self.evaluation().validate()
    }

    pub fn evaluation(&self) -> EvaluationConfig {
        EvaluationConfig {
            alpha: self.alpha,
            methods: self.methods.clone(),
            early_day: self.early_day,
            early_window: self.early_window,
            fit: self.fit.clone(),
            scan: self.scan.clone(),
            bootstrap: BootstrapPlan {
                seed: self.seed,
                ..self.bootstrap.clone()
            },
            logistic: self.logistic,
        }
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

pub const RUN_MANIFEST_FILE: &str = "run.json";

/// Provenance of one CLI run: what was run, with which config, and which
/// files it produced. No timestamps, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, outputs: Vec<String>) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config_sha256: config.hash()?,
            config: config.clone(),
            outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
