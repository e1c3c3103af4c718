//! Numerical toolkit for projectively equivalent metrics: metrics sharing
//! their unparameterized geodesics, the tensors relating them, and the
//! Mobius-type dynamics induced by diffeomorphisms.

pub mod chart_core;
pub mod error;
pub mod homography_dynamics;
pub mod metric_geometry;
pub mod model_zoo;
pub mod projective_algebra;
pub mod report;
pub mod weyl_flatness;

pub use error::{Error, Result};
