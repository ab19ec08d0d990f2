//! End-to-end regression of metric-space valued responses on Euclidean
//! predictors.
//!
//! A network maps each predictor vector to a weight vector on the simplex over
//! a fixed set of anchor responses; the prediction is the weighted Fréchet
//! mean of those anchors in the response space.

pub mod audit;
pub mod error;
pub mod geometry;
pub mod gfr;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod simgen;
pub mod space;

pub use error::{E2mError, Result};
pub use geometry::{AnchorSet, LipschitzReport, MetricSpace, SpaceId, WeightVector};
pub use gfr::{GfrModel, SignedMean};
pub use model::{train, E2mModel, TrainConfig};
pub use scalar::Real;

/// Double-precision model, the default for training and evaluation.
pub type E2mModel64<S> = model::E2mModel<f64, S>;
/// Single-precision model for memory- or throughput-bound runs.
pub type E2mModel32<S> = model::E2mModel<f32, S>;
pub type GfrModel64<S> = gfr::GfrModel<f64, S>;
pub type GfrModel32<S> = gfr::GfrModel<f32, S>;
pub type Quantiles64 = space::QuantileVec<f64>;
pub type Quantiles32 = space::QuantileVec<f32>;
pub type Laplacian64 = space::GraphLaplacian<f64>;
pub type Laplacian32 = space::GraphLaplacian<f32>;
pub type Spd64 = space::SpdMatrix<f64>;
pub type Spd32 = space::SpdMatrix<f32>;
