//! Test densities, regions and the Monte Carlo rate harness.

mod density;
mod harness;
mod region;

pub use density::{check_density, AnalyticDerivatives, DensityCatalog, DensityModel, GaussianMixture};
pub use harness::{
    containment_experiment, draw, gap_experiment, integration_grid, log_rate, rate_experiment, replication_rng,
    run_metrics, ExperimentSetup, Metric, RateReport,
};
pub use region::{default_grid, estimated_region, oracle_region, sup_error, Region, RegionKind};
