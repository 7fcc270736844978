//! Penalized exponentially tilted likelihood for unconditional moment models.
//!
//! The crate is organised bottom-up: [`model`] defines moment conditions,
//! [`dual`] solves the inner multiplier problem, [`optimizer`] maximizes the
//! penalized profiled objective, [`tuning`] picks the penalty level,
//! [`inference`] tests linear hypotheses and [`baselines`] holds comparison
//! estimators.

pub mod baselines;
pub mod data;
pub mod dual;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod penalty;
pub mod tuning;

pub use data::{ActiveSet, Dataset};
pub use dual::{DualKind, DualOptions, DualSolution};
pub use error::{Error, Result};
pub use inference::{confidence_interval, lr_test, ConfidenceInterval, Hypothesis, TestResult};
pub use model::{ModelRef, MomentModel};
pub use optimizer::{fit_pet, AdjustPolicy, FitOptions, InitStrategy, PetFit};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use tuning::{select_gamma, GammaPath, InfoCriterion, TuningRule};
