pub mod analytic;
pub mod cli;
pub mod error;
pub mod laplace;
pub mod markov;
pub mod mcstats;
pub mod mlfunc;
pub mod randgen;
pub mod simulate;
pub mod special;
pub mod validation;

pub use error::{Error, Result};
