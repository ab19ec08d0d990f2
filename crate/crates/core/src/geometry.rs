//! Metric-space backend contract, simplex weights, anchor sets, and the
//! Lipschitz audit of the weighted Fréchet mean map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{dim, E2mError, Result};
use crate::rng::{substream, uniform_simplex};
use crate::scalar::Real;

/// Output geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceId {
    #[serde(rename = "wasserstein1d")]
    Wasserstein1d,
    #[serde(rename = "network")]
    Network,
    #[serde(rename = "spd-power")]
    SpdPower,
    #[serde(rename = "spd-bw")]
    SpdBw,
}

impl SpaceId {
    pub const ALL: [SpaceId; 4] = [SpaceId::Wasserstein1d, SpaceId::Network, SpaceId::SpdPower, SpaceId::SpdBw];

    pub fn as_str(&self) -> &'static str {
        match self {
            SpaceId::Wasserstein1d => "wasserstein1d",
            SpaceId::Network => "network",
            SpaceId::SpdPower => "spd-power",
            SpaceId::SpdBw => "spd-bw",
        }
    }

    /// Hadamard (globally non-positively curved) spaces.
    pub fn is_hadamard(&self) -> bool {
        !matches!(self, SpaceId::SpdBw)
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceId {
    type Err = E2mError;

    /// Canonical tags plus the short aliases `dist`, `distribution`, `net`,
    /// `power` and `bw`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wasserstein1d" | "dist" | "distribution" => Ok(SpaceId::Wasserstein1d),
            "network" | "net" => Ok(SpaceId::Network),
            "spd-power" | "power" => Ok(SpaceId::SpdPower),
            "spd-bw" | "bw" => Ok(SpaceId::SpdBw),
            other => Err(E2mError::UnknownSpace(other.to_string())),
        }
    }
}

/// A point of the simplex: non-negative coordinates summing to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Real> WeightVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![T::one() / T::from_usize_lossy(n); n])
    }

    pub fn one_hot(n: usize, j: usize) -> Self {
        let mut w = vec![T::zero(); n];
        w[j] = T::one();
        Self(w)
    }

    /// Wraps a vector produced by a softmax; only checked in debug builds.
    pub(crate) fn from_softmax(w: Vec<T>) -> Self {
        debug_assert!(w.iter().all(|&x| x >= T::zero()));
        Self(w)
    }
}

/// Sum tolerance for an `n`-vector: `1e-9`, widened for accumulated rounding
/// in low precision.
pub(crate) fn simplex_tol<T: Real>(n: usize) -> T {
    T::tol(1e-9).max(T::lit(4.0) * T::from_usize_lossy(n.max(1)) * T::epsilon())
}

/// Accepts `raw` iff it is non-negative and sums to one within tolerance;
/// returns it exactly renormalized.
pub fn validate_weights<T: Real>(raw: &[T]) -> Result<WeightVector<T>> {
    if raw.is_empty() {
        return Err(E2mError::Simplex("empty weight vector".into()));
    }
    if let Some((i, v)) = raw.iter().enumerate().find(|(_, v)| !(**v >= T::zero())) {
        return Err(E2mError::Simplex(format!("coordinate {i} is {v}")));
    }
    let sum: T = raw.iter().copied().sum();
    if (sum - T::one()).abs() > simplex_tol::<T>(raw.len()) {
        return Err(E2mError::Simplex(format!("coordinates sum to {sum}")));
    }
    Ok(WeightVector(raw.iter().map(|&v| v / sum).collect()))
}

/// Backend contract implemented by every output geometry.
///
/// The `prepare_*` hooks let a backend precompute representations of anchors
/// and targets once (quantile matrices, matrix square roots) so the training
/// loop only pays for the weight-dependent part.
pub trait MetricSpace<T: Real>: Send + Sync {
    type Point: Clone + fmt::Debug + Send + Sync;
    type Prepared: Send + Sync;
    type Target: Send + Sync;

    fn id(&self) -> SpaceId;

    fn validate(&self, p: &Self::Point) -> Result<()>;

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> Result<T>;

    fn prepare_anchors(&self, anchors: &[Self::Point]) -> Result<Self::Prepared>;

    fn anchor_count(&self, prepared: &Self::Prepared) -> usize;

    fn prepare_target(&self, target: &Self::Point) -> Result<Self::Target>;

    /// Weighted Fréchet mean over prepared anchors. `w` is trusted to lie on
    /// the simplex.
    fn mean_prepared(&self, prepared: &Self::Prepared, w: &[T]) -> Result<Self::Point>;

    /// `d²(μ(w), target)`; writes `∂/∂w` of it into `grad`.
    fn loss_and_grad(&self, prepared: &Self::Prepared, w: &[T], target: &Self::Target, grad: &mut [T]) -> Result<T>;

    /// `d²(μ(w), target)` without the gradient.
    fn loss(&self, prepared: &Self::Prepared, w: &[T], target: &Self::Target) -> Result<T>;

    fn frechet_mean(&self, w: &WeightVector<T>, anchors: &[Self::Point]) -> Result<Self::Point> {
        check_weights(w, anchors.len())?;
        let prepared = self.prepare_anchors(anchors)?;
        self.mean_prepared(&prepared, w.as_slice())
    }

    /// `∂/∂w d²(μ(w), target)` in ambient coordinates.
    fn loss_grad_w(&self, w: &WeightVector<T>, anchors: &[Self::Point], target: &Self::Point) -> Result<Vec<T>> {
        check_weights(w, anchors.len())?;
        let prepared = self.prepare_anchors(anchors)?;
        let target = self.prepare_target(target)?;
        let mut grad = vec![T::zero(); anchors.len()];
        self.loss_and_grad(&prepared, w.as_slice(), &target, &mut grad)?;
        Ok(grad)
    }

    fn is_hadamard(&self) -> bool {
        self.id().is_hadamard()
    }
}

pub(crate) fn check_weights<T: Real>(w: &WeightVector<T>, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(dim(format!("{} weights for {n} anchors", w.len())));
    }
    if n == 0 {
        return Err(dim("no anchors"));
    }
    Ok(())
}

/// The fixed collection of outputs a Fréchet mean is taken over.
#[derive(Clone, Debug)]
pub struct AnchorSet<P> {
    pub space: SpaceId,
    pub points: Vec<P>,
    pub source_indices: Vec<usize>,
}

impl<P: Clone> AnchorSet<P> {
    pub fn new<T: Real, S: MetricSpace<T, Point = P>>(space: &S, points: Vec<P>, source_indices: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(E2mError::Invalid("anchor set is empty".into()));
        }
        if points.len() != source_indices.len() {
            return Err(dim(format!("{} anchors but {} source indices", points.len(), source_indices.len())));
        }
        let mut sorted = source_indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(E2mError::Invalid("anchor source indices are not distinct".into()));
        }
        for (i, p) in points.iter().enumerate() {
            space.validate(p).map_err(|e| E2mError::Validation {
                what: "anchor",
                index: i,
                reason: e.to_string(),
            })?;
        }
        Ok(Self {
            space: space.id(),
            points,
            source_indices,
        })
    }

    /// Anchors numbered `0..m` in order.
    pub fn from_points<T: Real, S: MetricSpace<T, Point = P>>(space: &S, points: Vec<P>) -> Result<Self> {
        let idx = (0..points.len()).collect();
        Self::new(space, points, idx)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Outcome of a Lipschitz audit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub trials: usize,
    pub violations: usize,
    pub diameter_estimate: f64,
    pub max_ratio: f64,
}

/// Largest pairwise distance among anchors; `0` for a single anchor.
pub fn pairwise_diameter<T: Real, S: MetricSpace<T>>(space: &S, anchors: &AnchorSet<S::Point>) -> Result<T> {
    for (i, p) in anchors.points.iter().enumerate() {
        space.validate(p).map_err(|e| E2mError::Validation {
            what: "anchor",
            index: i,
            reason: e.to_string(),
        })?;
    }
    let mut d = T::zero();
    for i in 0..anchors.len() {
        for j in (i + 1)..anchors.len() {
            d = d.max(space.distance(&anchors.points[i], &anchors.points[j])?);
        }
    }
    Ok(d)
}

const DIAMETER_SLACK: f64 = 1e-12;

/// Checks `d(μ(w1), μ(w2)) ≤ D̂ √m ‖w1 − w2‖₂` on `trials` seeded pairs of
/// uniform simplex draws. Refuses non-Hadamard spaces.
pub fn audit_lipschitz<T: Real, S: MetricSpace<T>>(
    space: &S,
    anchors: &AnchorSet<S::Point>,
    trials: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    let mut rng = substream(seed, "lipschitz", 0);
    let m = anchors.len();
    audit_lipschitz_with(space, anchors, trials, || {
        (uniform_simplex(m, &mut rng), uniform_simplex(m, &mut rng))
    })
}

/// Same audit with a caller-supplied pair sampler.
pub fn audit_lipschitz_with<T: Real, S: MetricSpace<T>>(
    space: &S,
    anchors: &AnchorSet<S::Point>,
    trials: usize,
    mut draw: impl FnMut() -> (Vec<T>, Vec<T>),
) -> Result<LipschitzReport> {
    if !space.is_hadamard() {
        return Err(E2mError::NonHadamard);
    }
    if trials == 0 {
        return Err(E2mError::Invalid("trials must be at least 1".into()));
    }
    let diameter = pairwise_diameter(space, anchors)?;
    let m = anchors.len();
    let root_m = T::from_usize_lossy(m).sqrt();
    let slack_d = diameter + T::lit(DIAMETER_SLACK);
    let prepared = space.prepare_anchors(&anchors.points)?;

    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for _ in 0..trials {
        let (w1, w2) = draw();
        let w1 = validate_weights(&w1)?;
        let w2 = validate_weights(&w2)?;
        let mu1 = space.mean_prepared(&prepared, w1.as_slice())?;
        let mu2 = space.mean_prepared(&prepared, w2.as_slice())?;
        let d = space.distance(&mu1, &mu2)?;
        let dw = crate::scalar::sq_dist(w1.as_slice(), w2.as_slice()).sqrt();
        if d > slack_d * root_m * dw {
            violations += 1;
        }
        let denom = diameter * root_m * dw;
        let ratio = if d == T::zero() {
            0.0
        } else if denom == T::zero() {
            f64::INFINITY
        } else {
            (d / denom).to_f64_lossy()
        };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(LipschitzReport {
        trials,
        violations,
        diameter_estimate: diameter.to_f64_lossy(),
        max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_validation_examples() {
        assert!(validate_weights(&[0.25f64, 0.25, 0.25, 0.25]).is_ok());
        assert!(matches!(validate_weights(&[0.5f64, 0.6]), Err(E2mError::Simplex(_))));
        assert!(matches!(validate_weights(&[1.0f64, -1e-12, 1e-12]), Err(E2mError::Simplex(_))));
        assert!(validate_weights::<f64>(&[]).is_err());
        assert!(validate_weights(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn weight_validation_renormalizes() {
        let w = validate_weights(&[0.5f64 + 1e-10, 0.5]).unwrap();
        let s: f64 = w.as_slice().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn space_tags_parse() {
        for id in SpaceId::ALL {
            assert_eq!(id.as_str().parse::<SpaceId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(serde_json::from_str::<SpaceId>(&json).unwrap(), id);
        }
        assert_eq!("dist".parse::<SpaceId>().unwrap(), SpaceId::Wasserstein1d);
        assert!("euclid".parse::<SpaceId>().is_err());
        assert!(serde_json::from_str::<SpaceId>("\"dist\"").is_err());
    }
}
