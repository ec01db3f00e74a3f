//! GMRF smoothing prior, Gaussian-process covariate prior, hyperpriors and
//! the assembled joint posterior.

pub mod gmrf;
pub mod hyper;
pub mod kernel;
pub mod missing;
pub mod posterior;

pub use gmrf::{gmrf_grad, gmrf_log_density, quadratic_form, structure_bands, structure_mul};
pub use hyper::{log_exponential, log_hyperprior, log_inv_gamma, HyperState};
pub use kernel::{gp_log_density, kernel_component, kernel_matrix, GpDensity, GpFactor, KernelParams};
pub use missing::{missing_blocks, missing_covariate_prior, MissingBlock};
pub use posterior::{field_terms, grad_joint, joint_log_posterior, JointGradient, LatentState, Model, PosteriorTerms};
