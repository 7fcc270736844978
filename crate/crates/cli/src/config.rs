//! Run-configuration files.
//!
//! One format only: TOML restricted to flat `key = value` pairs grouped in
//! dotted sections. Unknown keys are rejected so a file means the same thing
//! on every run.
//!
//! ```toml
//! version = 1
//!
//! [experiment]
//! kind = "exp1"        # exp1 | exp2 | exp3
//! n = 50
//! p = 7                # q_omega for exp3
//! rho = 0.7
//! regime = "cm"        # cm | ms
//! reps = 200
//! seed = 1
//! methods = ["pet", "mean"]
//!
//! [tuning]
//! penalty = "scad"
//! criterion = "abic"   # abic | bic | aic | gcv
//! grid_len = 40
//!
//! [coverage]
//! theta2 = [0.4, 0.5, 0.6]
//! alpha = 0.05
//!
//! [output]
//! dir = "results"
//! format = "markdown"  # csv | markdown | text
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiltfit_core::tuning::TuningRule;
use tiltfit_core::{PenaltyKind, PenaltySpec};
use tiltfit_sim::{Experiment, ExperimentConfig, Method, Regime};

use crate::error::{CliError, Result};
use crate::render::Format;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub tuning: TuningSection,
    #[serde(default)]
    pub coverage: CoverageSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: String,
    pub n: usize,
    pub p: usize,
    pub rho: Option<f64>,
    pub regime: Option<String>,
    pub reps: usize,
    pub seed: u64,
    pub methods: Option<Vec<String>>,
    pub folds: Option<usize>,
    pub standardize_z: Option<bool>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    pub penalty: Option<String>,
    pub criterion: Option<String>,
    pub grid_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub theta2: Vec<f64>,
    pub alpha: f64,
}

impl Default for CoverageSection {
    fn default() -> Self {
        CoverageSection { theta2: vec![0.4, 0.5, 0.6], alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if file.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (this build reads version {SCHEMA_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The simulation configuration described by this file, validated.
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let e = &self.experiment;
        let experiment: Experiment = e.kind.parse()?;
        let regime: Regime = e.regime.as_deref().unwrap_or("cm").parse()?;
        let mut cfg = match experiment {
            Experiment::Exp1 => ExperimentConfig::exp1(e.n, e.p, e.rho.unwrap_or(0.3), regime, e.reps, e.seed),
            Experiment::Exp2 => ExperimentConfig::exp2(e.n, e.p, e.reps, e.seed),
            Experiment::Exp3 => ExperimentConfig::exp3(e.n, e.p, e.reps, e.seed),
        };
        if experiment != Experiment::Exp1 && (e.rho.is_some() || e.regime.is_some()) {
            return Err(CliError::Config("rho and regime apply to exp1 only".into()));
        }
        if let Some(methods) = &e.methods {
            cfg.methods = methods.iter().map(|m| m.parse::<Method>()).collect::<std::result::Result<_, _>>()?;
        }
        if let Some(folds) = e.folds {
            cfg.folds = folds;
        }
        if let Some(z) = e.standardize_z {
            cfg.standardize_z = z;
        }
        cfg.threads = e.threads;
        if let Some(name) = &self.tuning.penalty {
            let kind: PenaltyKind = name.parse().map_err(|err: tiltfit_core::Error| CliError::Config(err.to_string()))?;
            cfg.penalty = PenaltySpec::new(kind, 0.0).map_err(|err| CliError::Config(err.to_string()))?;
        }
        if let Some(c) = &self.tuning.criterion {
            cfg.criterion = c.parse::<TuningRule>().map_err(|err| CliError::Config(err.to_string()))?;
        }
        if let Some(len) = self.tuning.grid_len {
            cfg.grid_len = len;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn format(&self) -> Result<Format> {
        self.output.format.as_deref().unwrap_or("markdown").parse()
    }
}
