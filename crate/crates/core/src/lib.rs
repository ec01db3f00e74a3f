pub mod coalescent;
pub mod driver;
pub mod error;
pub mod hmc;
pub mod prior;
pub mod simulate;
pub mod summary;
pub mod treeio;

pub use error::{Error, Result};
