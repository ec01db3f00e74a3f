//! Reading genealogies, tip dates, covariates and run configuration.

pub mod config;
pub mod covariates;
pub mod dates;
pub mod newick;
pub mod tree;

pub use config::{GridSpec, Preconditioning, RunConfig};
pub use covariates::{load_covariates, CovariateOptions, CovariateTable};
pub use dates::{apply_tip_dates, parse_tip_dates, read_tip_dates};
pub use newick::{parse_newick, serialize_newick};
pub use tree::{DateDirection, DateReference, Node, NodeId, TimeTree};
