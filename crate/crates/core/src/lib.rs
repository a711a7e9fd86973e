//! Additive growth curve models with orthogonal design matrices.
//!
//! `Y = Σ_i X_i Θ_i Z_i' + E`, where the group designs `X_i` have mutually
//! orthogonal column spaces and each group carries its own polynomial
//! profile `Z_i`. The crate provides two-stage GLS estimation with a
//! quadratic first-stage covariance estimator, AIC-based profile-degree
//! selection, large-sample inference, and a seeded Monte Carlo harness.

pub mod data;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod report;
pub mod selection;
mod serde_matrix;
pub mod simulation;
pub mod stats;

pub use data::{dental_dataset, load_csv, CsvSchema, LongitudinalDataset};
pub use error::{Error, ErrorKind, Result};
pub use estimation::{aic, fit, fit_vec_form, fit_with_covariance, h_matrix, quadratic_covariance, rmss, CovarianceEstimate, FitResult};
pub use linalg::Matrix;
pub use model::{build_group_indicator, build_polynomial_profile, CoefficientSet, DesignBlock, ModelSpec, ProfileMatrix};
pub use inference::{coeff_asymptotic_covariance, standardized_statistic, AsymptoticReport, Hypothesis};
pub use simulation::{McReport, SimulationScenario};
pub use selection::{select_degrees, SelectionResult};
