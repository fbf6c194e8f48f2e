//! Joint conditional graphical lasso for multi-condition Gaussian data with
//! censored and missing-at-random cells.
//!
//! Responses `Y` are modelled given covariates `X` in each of K conditions.
//! Estimation runs an EM algorithm whose M-step is split into a joint
//! graphical lasso for the covariate precisions, a sparse group multi-lasso for
//! the regression coefficients and a joint graphical lasso for the conditional
//! precisions of `Y`.

pub mod benchmark;
pub mod em;
pub mod error;
pub mod estep;
pub mod jgl;
pub mod linalg;
pub mod model;
pub mod multilasso;
pub mod prox;
pub mod select;
pub mod simulate;

pub use em::{fit, initialize, FitConfig, FitResult};
pub use error::{Error, Result};
pub use estep::{compute_sufficient_stats, CellStatus, ConditionDataset, Region, SufficientStats};
pub use model::{ModelParams, PenaltyConfig, PenaltyKind, QValue};
pub use select::{fit_path, BicSummary, PathGrid, PathResult};
pub use simulate::{generate, GroundTruth, ScenarioConfig};

pub use nalgebra::{DMatrix, DVector};
