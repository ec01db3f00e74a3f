//! Preconditioned HMC over the latent field, slice moves for hyperparameters,
//! adaptation, checkpoints and chain orchestration.

pub mod adapt;
pub mod chain;
pub mod checkpoint;
pub mod integrator;
pub mod mass;
pub mod slice;
pub mod trace;
pub mod tridiag;

pub use chain::{chain_rng, ChainState, LatentTarget, Sampler, StepRecord};
pub use adapt::{adapt_step_size, DualAveraging};
pub use integrator::{hamiltonian, hmc_transition, jittered_steps, leapfrog, Point, Target, TransitionInfo};
pub use mass::{build_mass_matrix, MassMatrix};
pub use slice::{slice_sample, SliceOutcome};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use trace::{read_trace, trace_header, trace_row, Trace, TraceWriter};
pub use tridiag::{tridiag_solve, SymTridiag, TridiagCholesky};
