//! Monte Carlo study: the two mediator settings, the misspecification
//! panels, a regression comparator and the replication harness.

pub mod comparator;
pub mod dgp;
pub mod harness;
pub mod truth;

pub use comparator::{regression_based, regression_controlled, RegressionControlled, RegressionEffects};
pub use dgp::{child_seed, generate, DgpConfig, DgpModel, Panel, Setting, UnitDraw};
pub use harness::{
    run_monte_carlo, run_replication, summarize, write_table_csv, Cell, CellReport, Draw, Estimator, Failure,
    Metric, Replication, SimulationConfig, SimulationReport, Target,
};
pub use truth::{compute_truths, OracleValue, TruthSet, MIN_ORACLE_DRAWS};
