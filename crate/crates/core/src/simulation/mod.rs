//! Seeded data generation and Monte Carlo experiments.

pub mod experiments;
pub mod rng;
pub mod scenario;

pub use experiments::{
    bias_check, consistency_sweep, mc_aic, mc_aic_range, normality_check, BiasBlock, BiasReport, ConsistencyReport,
    ConsistencyRow, McPartial, McReport, ModelTriple, DEFAULT_AIC_REPLICATIONS, DEFAULT_NORMALITY_REPLICATIONS,
    MAX_FAILURE_RATE,
};
pub use rng::{derive_seed, replication_rng};
pub use scenario::{
    serial_sigma, CovarianceModel, ErrorLaw, GroupTwoTruth, SerialCorrelation, SimulationScenario, TRIAL_TIMEPOINTS,
};
