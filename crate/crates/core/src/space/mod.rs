//! Output geometries.

mod bw;
mod flat;
mod network;
mod spd;
mod wasserstein;

pub use bw::{bw_barycenter, bw_distance, BwSolveConfig, SpdBw};
pub use flat::FlatAnchors;
pub use network::{frobenius_distance, laplacian_from_directed, laplacian_from_edges, GraphLaplacian, Network};
pub use spd::{power_distance, SpdMatrix, SpdPower};
pub use wasserstein::{
    gaussian_quantiles, norm_inv_cdf, quantile_from_samples, quantiles_from_histogram, w2_distance, ProbGrid,
    QuantileVec, Wasserstein1d,
};
