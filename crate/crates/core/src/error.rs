use thiserror::Error;

use crate::metric_geometry::GeodesicPath;

/// Errors raised by the numerical operations of this crate.
///
/// Variants carry the offending sample where one exists so that callers can
/// report it instead of a bare failure.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point has {got} coordinates but the chart has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("evaluation at {point:?} leaves the chart")]
    OutOfDomain { point: Vec<f64> },
    #[error("non-finite sample at {point:?}")]
    NonFiniteSample { point: Vec<f64> },

    #[error("metric is singular at {point:?} (det = {det:e})")]
    SingularMetric { point: Vec<f64>, det: f64 },
    #[error("metric signature at {point:?} is ({found_pos}, {found_neg}), declared ({declared_pos}, {declared_neg})")]
    SignatureMismatch {
        point: Vec<f64>,
        declared_pos: usize,
        declared_neg: usize,
        found_pos: usize,
        found_neg: usize,
    },
    #[error("metric is not symmetric at {point:?} (asymmetry {asymmetry:e})")]
    AsymmetricMetric { point: Vec<f64>, asymmetry: f64 },
    #[error("plane is degenerate (Gram determinant {gram:e})")]
    DegeneratePlane { gram: f64 },
    #[error("geodesic left the chart at t = {t} after {} samples", partial.samples.len())]
    LeftDomain { t: f64, partial: Box<GeodesicPath> },
    #[error("energy drift {drift:e} exceeds the allowed bound; reduce the step")]
    StepTooLarge { drift: f64 },
    #[error("velocity is null for the test metric at every usable sample ({excluded} excluded)")]
    DegenerateVelocity { excluded: usize },
    #[error("path has {got} samples, at least {needed} are required")]
    TooFewSamples { needed: usize, got: usize },
    #[error("warp factor is not positive at r = {r} (value {value:e})")]
    NonPositiveWarp { r: f64, value: f64 },

    #[error("tensor is singular at {point:?}")]
    SingularTensor { point: Vec<f64> },
    #[error("no real root of det = {det:e} at {point:?}")]
    NegativeDetRoot { point: Vec<f64>, det: f64 },
    #[error("determinant {det:e} at {point:?} is too close to zero")]
    NearDegenerate { point: Vec<f64>, det: f64 },
    #[error("basis is empty")]
    EmptyBasis,

    #[error("Mobius matrix is singular")]
    SingularMobius,
    #[error("tensor is a scalar multiple of the identity on the sample grid")]
    ScalarK,
    #[error("least-squares fit residual {residual:e} exceeds {threshold:e}")]
    BadFit { residual: f64, threshold: f64 },
    #[error("cK + dI is singular at {point:?} for power {power}")]
    DegenerateStage { power: i32, point: Vec<f64> },
    #[error("Mobius map is not hyperbolic with finite fixed points")]
    NotHyperbolic,
    #[error("the lower fixed point is repelling")]
    RepellingLowerFixedPoint,
    #[error("attracting fixed point is zero")]
    ZeroFixedPoint,
    #[error("z = {z} lies outside the basin [lower, upper)")]
    OutOfBasin { z: f64 },
    #[error("expected lower < upper")]
    BadOrder,
    #[error("empty input")]
    EmptyInput,
    #[error("eigenvalue data must be positive")]
    NonPositiveEigen,

    #[error("operation needs dimension >= 3, got {dim}")]
    DimensionTooLow { dim: usize },
    #[error("ranges overlap: sup Y = {sup_y} >= inf X = {inf_x}")]
    RangeOverlap { sup_y: f64, inf_x: f64 },
    #[error("positivity condition fails: {0}")]
    PositivityFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
