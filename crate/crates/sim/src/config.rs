use serde::{Deserialize, Serialize};
use tiltfit_core::optimizer::FitOptions;
use tiltfit_core::tuning::{InfoCriterion, TuningRule};
use tiltfit_core::PenaltySpec;

use crate::error::{Result, SimError};
use crate::generators::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    /// Sparse mean vector with skewed, equicorrelated noise.
    Exp1,
    /// Sparse linear regression estimated with extra instruments.
    Exp2,
    /// Structural equation model with sparse latent couplings.
    Exp3,
}

impl std::str::FromStr for Experiment {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp1" | "1" => Ok(Experiment::Exp1),
            "exp2" | "2" => Ok(Experiment::Exp2),
            "exp3" | "3" => Ok(Experiment::Exp3),
            other => Err(SimError::InvalidConfig(format!("unknown experiment '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Pet,
    Pel,
    Mean,
    HardThreshold,
    SoftThreshold,
    QuadraticLoss,
    /// Returns the true parameter; useful for checking the bookkeeping.
    Oracle,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Pet => "PET",
            Method::Pel => "PEL",
            Method::Mean => "Mean",
            Method::HardThreshold => "HT",
            Method::SoftThreshold => "ST",
            Method::QuadraticLoss => "QL",
            Method::Oracle => "Oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pet" => Ok(Method::Pet),
            "pel" => Ok(Method::Pel),
            "mean" => Ok(Method::Mean),
            "ht" => Ok(Method::HardThreshold),
            "st" => Ok(Method::SoftThreshold),
            "ql" => Ok(Method::QuadraticLoss),
            "oracle" => Ok(Method::Oracle),
            other => Err(SimError::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// Declarative description of one Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    /// Parameter dimension; for `Exp3` the number of latent variables `q_ω`.
    pub p: usize,
    pub rho: f64,
    pub regime: Regime,
    pub reps: usize,
    pub seed: u64,
    /// Penalty family; `gamma` is ignored because it is tuned.
    pub penalty: PenaltySpec,
    pub criterion: TuningRule,
    pub methods: Vec<Method>,
    /// Number of points in the γ grid.
    pub grid_len: usize,
    /// Folds for the threshold baselines' cross-validation.
    pub folds: usize,
    /// Rescale the mean-design innovations to unit variance.
    pub standardize_z: bool,
    /// Explicit starting value for the penalized fits.
    pub init: Option<Vec<f64>>,
    pub fit: FitOptions,
    /// Worker count; `None` defers to `TILTFIT_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Mean design with SCAD + aBIC, PET and the sample mean.
    ///
    /// The misspecified regime starts from `(1, 0.6, 0.3, 0.01, …, 0.01)`.
    pub fn exp1(n: usize, p: usize, rho: f64, regime: Regime, reps: usize, seed: u64) -> Self {
        let init = match regime {
            Regime::Cm => None,
            Regime::Ms => {
                let mut v = vec![0.01; p];
                for (k, t) in [1.0, 0.6, 0.3].into_iter().enumerate().take(p) {
                    v[k] = t;
                }
                Some(v)
            }
        };
        ExperimentConfig {
            experiment: Experiment::Exp1,
            n,
            p,
            rho,
            regime,
            reps,
            seed,
            penalty: PenaltySpec::scad(0.0).expect("zero is a valid level"),
            criterion: TuningRule::Info(InfoCriterion::ABic),
            methods: vec![Method::Pet, Method::Mean],
            grid_len: 40,
            folds: 5,
            standardize_z: false,
            init,
            fit: FitOptions::default(),
            threads: None,
        }
    }

    /// Instrumented regression with SCAD + GCV.
    pub fn exp2(n: usize, p: usize, reps: usize, seed: u64) -> Self {
        ExperimentConfig {
            experiment: Experiment::Exp2,
            criterion: TuningRule::Gcv,
            methods: vec![Method::Pet],
            regime: Regime::Cm,
            rho: 0.5,
            init: None,
            ..ExperimentConfig::exp1(n, p, 0.0, Regime::Cm, reps, seed)
        }
    }

    /// Structural equation model with SCAD + aBIC on the couplings.
    pub fn exp3(n: usize, q_omega: usize, reps: usize, seed: u64) -> Self {
        ExperimentConfig {
            experiment: Experiment::Exp3,
            p: q_omega,
            methods: vec![Method::Pet],
            grid_len: 15,
            ..ExperimentConfig::exp1(n, q_omega.max(3), 0.0, Regime::Cm, reps, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.grid_len == 0 {
            return bad("grid_len must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        self.penalty.validate().map_err(SimError::Core)?;
        self.fit.validate().map_err(SimError::Core)?;
        match self.experiment {
            Experiment::Exp1 => {
                if self.p < 3 {
                    return bad(format!("the mean design needs p >= 3, got {}", self.p));
                }
                if !(0.0..1.0).contains(&self.rho) {
                    return bad(format!("rho must lie in [0, 1), got {}", self.rho));
                }
                if self.folds < 2 || self.folds > self.n {
                    return bad(format!("folds must lie in [2, n], got {}", self.folds));
                }
            }
            Experiment::Exp2 => {
                if self.p < 5 {
                    return bad(format!("the regression design needs p >= 5, got {}", self.p));
                }
            }
            Experiment::Exp3 => {
                if self.p < 2 {
                    return bad(format!("q_omega must be at least 2, got {}", self.p));
                }
                if matches!(self.criterion, TuningRule::Gcv) {
                    return bad("GCV applies to regressions only; use an information criterion".into());
                }
            }
        }
        if self.experiment != Experiment::Exp1 {
            for m in &self.methods {
                if !matches!(m, Method::Pet | Method::Pel | Method::Oracle) {
                    return bad(format!("method {} is only defined for the mean design", m.label()));
                }
            }
            if self.experiment == Experiment::Exp3 && self.methods.contains(&Method::Pel) {
                return bad("PEL is not implemented for the structural model".into());
            }
        }
        if let Some(init) = &self.init {
            if init.len() != self.n_params() {
                return bad(format!("init has length {} but the model has {} parameters", init.len(), self.n_params()));
            }
        }
        Ok(())
    }

    /// Length of the parameter vector of the fitted model.
    pub fn n_params(&self) -> usize {
        match self.experiment {
            Experiment::Exp1 | Experiment::Exp2 => self.p,
            Experiment::Exp3 => self.p * self.p + 3 * self.p,
        }
    }
}
