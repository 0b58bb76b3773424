//! Laplace-domain transforms of time-changed birth–death quantities and their
//! numerical inversion.

mod compose;
mod invert;

pub use compose::*;
pub use invert::{
    invert, invert_checked, stehfest_sum, talbot_sum, talbot_vec, Inversion, Method, METHOD_DISAGREEMENT,
    STEHFEST_TERMS, TALBOT_NODES,
};

use crate::error::Result;
use num_complex::Complex;
use std::fmt;
use std::sync::Arc;

pub type C64 = Complex<f64>;

type EvalFn = dyn Fn(C64) -> Result<C64> + Send + Sync;

/// A Laplace transform given as a callable on the right half-plane.
#[derive(Clone)]
pub struct LtEvaluator {
    eval: Arc<EvalFn>,
    abscissa: f64,
    note: String,
}

impl LtEvaluator {
    pub fn new<F>(note: impl Into<String>, f: F) -> Self
    where
        F: Fn(C64) -> Result<C64> + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(f),
            abscissa: 0.0,
            note: note.into(),
        }
    }

    /// Declares the real part of the rightmost singularity; the inversion
    /// contour is shifted to its right.
    pub fn with_abscissa(mut self, a: f64) -> Self {
        self.abscissa = a.max(0.0);
        self
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        (self.eval)(z)
    }

    pub fn eval_real(&self, x: f64) -> Result<f64> {
        Ok(self.eval(C64::new(x, 0.0))?.re)
    }

    pub fn abscissa(&self) -> f64 {
        self.abscissa
    }

    pub fn note(&self) -> &str {
        &self.note
    }
}

impl fmt::Debug for LtEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LtEvaluator")
            .field("note", &self.note)
            .field("abscissa", &self.abscissa)
            .finish()
    }
}
