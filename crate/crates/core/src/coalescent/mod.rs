//! Time grid, per-interval ledgers and the piecewise-constant coalescent likelihood.

pub mod grid;
pub mod ledger;
pub mod likelihood;
pub mod quadrature;

pub use grid::{build_grid, Grid};
pub use ledger::{extract_ledger, CoalescentData, Event, EventKind, IntervalLedger, IntervalRecord};
pub use likelihood::{
    grad_log_likelihood, hess_diag_log_likelihood, log_likelihood, log_time_density, log_tree_normalizer,
};
pub use quadrature::{integrate, oracle_log_density};
