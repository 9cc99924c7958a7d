//! Numerical laboratory for distributional simplicity bias: moment and
//! cumulant algebra, closed-form perceptron classifiers, truncated gradient
//! flow, Gaussian dataset clones and the training runs that compare them.

pub mod analytic;
pub mod data;
pub mod error;
pub mod gflow;
pub mod harness;
pub mod rng;
pub mod schedule;
pub mod stats;
pub mod train;

pub use error::{Error, Result};

// The guide's code blocks run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/gradient-flow.md")]
    mod gradient_flow {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
