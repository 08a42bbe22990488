//! Random-effects meta-analysis with prediction intervals for the true
//! effect in a new study.
//!
//! Besides the standard Higgins-Thompson-Spiegelhalter interval and its
//! REML variants, the crate implements a parametric-bootstrap interval that
//! propagates uncertainty in the heterogeneity variance by sampling it from
//! an exact confidence distribution built on Cochran's Q.
//!
//! ```
//! use cdpi_core::{model::StudySet, predint, rng::StreamSeed};
//!
//! let s = StudySet::new(vec![0.1, 0.5, -0.2, 0.35], vec![0.04, 0.1, 0.08, 0.2]).unwrap();
//! let pi = predint::pi_proposed(&s, 0.05, 1000, StreamSeed::new(1)).unwrap();
//! assert!(pi.lower < pi.upper);
//! ```

pub mod confdist;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod model;
pub mod predint;
pub mod qdist;
pub mod rng;
pub mod root;
pub mod sim;

pub use error::{Error, Result};
