pub mod bootstrap;
pub mod data;
pub mod error;
pub mod firststep;
pub mod gmm;
pub mod jackknife;
mod linalg;
pub mod mte;
pub mod rng;
pub mod simulate;

pub use linalg::{inv_sqrt_floored, min_eigenvalue};
