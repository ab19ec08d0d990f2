//! Numerical self-checks: random instances per space, finite-difference
//! gradient checks, brute-force Fréchet means and entropy bounds.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{audit_lipschitz, validate_weights, AnchorSet, LipschitzReport, MetricSpace};
use crate::gfr::isotonic_projection;
use crate::linalg::{sym_eigen, Matrix};
use crate::nn::{entropy, entropy_grad, ENTROPY_DELTA};
use crate::rng::{derive_seed, substream, uniform_simplex};
use crate::scalar::Real;
use crate::space::{laplacian_from_edges, GraphLaplacian, Network, QuantileVec, SpdBw, SpdMatrix, SpdPower, Wasserstein1d};

/// Spaces that can draw well-conditioned random points for self-checks.
pub trait RandomPoint<T: Real>: MetricSpace<T> {
    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Point;
}

impl<T: Real> RandomPoint<T> for Wasserstein1d {
    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> QuantileVec<T> {
        let mut v: f64 = rng.sample::<f64, _>(StandardNormal) * 2.0;
        let scale: f64 = 0.05 + rng.random::<f64>() * 0.1;
        let q = (0..self.grid.len())
            .map(|_| {
                let e: f64 = Exp1.sample(rng);
                v += scale * e;
                T::lit(v)
            })
            .collect();
        QuantileVec::new(q).expect("strictly increasing")
    }
}

impl<T: Real> RandomPoint<T> for Network {
    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> GraphLaplacian<T> {
        let cap = self.max_weight.unwrap_or(1.0);
        let e = self.nodes * (self.nodes - 1) / 2;
        let edges: Vec<T> =
            (0..e).map(|_| if rng.random::<f64>() < 0.7 { T::lit(rng.random::<f64>() * cap) } else { T::zero() }).collect();
        laplacian_from_edges(&edges, self.nodes).expect("non-negative edges")
    }
}

/// `G Gᵀ / l + 0.1·I` with standard normal `G`.
pub fn random_spd<T: Real, R: Rng + ?Sized>(l: usize, rng: &mut R) -> SpdMatrix<T> {
    let g = Matrix::from_fn(l, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let mut m = g.matmul(&g.transpose()).scale(T::one() / T::from_usize_lossy(l));
    m.add_diag(T::lit(0.1));
    SpdMatrix::new(m.symmetrized()).expect("positive definite by construction")
}

impl<T: Real> RandomPoint<T> for SpdPower {
    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SpdMatrix<T> {
        random_spd(self.l, rng)
    }
}

impl<T: Real> RandomPoint<T> for SpdBw {
    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SpdMatrix<T> {
        random_spd(self.l, rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub space: String,
    pub instances: usize,
    pub anchors: usize,
    /// Worst `‖g_fd − g‖_∞ / max(‖g‖_∞, 1e-8)` over instances.
    pub max_rel_error: f64,
    pub worst_instance: usize,
}

/// Analytic `∂/∂w d²(μ(w), y)` against central differences with step `h`,
/// on random anchors, targets and interior weights.
pub fn gradient_check<S: RandomPoint<f64>>(
    space: &S,
    instances: usize,
    anchors: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if instances == 0 || anchors == 0 {
        return Err(invalid("gradient check needs at least one instance and one anchor"));
    }
    let mut rng = substream(seed, "gradcheck", 0);
    let mut worst = (0.0f64, 0usize);
    for k in 0..instances {
        let pts: Vec<S::Point> = (0..anchors).map(|_| space.random_point(&mut rng)).collect();
        let y = space.random_point(&mut rng);
        let w = validate_weights(&uniform_simplex::<f64, _>(anchors, &mut rng))?;
        let g = space.loss_grad_w(&w, &pts, &y)?;
        let prepared = space.prepare_anchors(&pts)?;
        let target = space.prepare_target(&y)?;
        let mut err: f64 = 0.0;
        for i in 0..anchors {
            let (mut wp, mut wm) = (w.as_slice().to_vec(), w.as_slice().to_vec());
            wp[i] += h;
            wm[i] -= h;
            let fd = (space.loss(&prepared, &wp, &target)? - space.loss(&prepared, &wm, &target)?) / (2.0 * h);
            err = err.max((fd - g[i]).abs());
        }
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-8);
        if err / scale > worst.0 {
            worst = (err / scale, k);
        }
    }
    Ok(GradCheckReport {
        space: space.id().to_string(),
        instances,
        anchors,
        max_rel_error: worst.0,
        worst_instance: worst.1,
    })
}

/// Unconstrained raw coordinates for a point plus a projection back onto
/// the space; used by the brute-force mean.
pub trait RawCoords<T: Real>: MetricSpace<T> {
    fn to_raw(&self, p: &Self::Point) -> Vec<T>;
    fn project(&self, raw: &[T]) -> Result<Self::Point>;
}

impl<T: Real> RawCoords<T> for Wasserstein1d {
    fn to_raw(&self, p: &QuantileVec<T>) -> Vec<T> {
        p.values().to_vec()
    }

    fn project(&self, raw: &[T]) -> Result<QuantileVec<T>> {
        QuantileVec::new(isotonic_projection(raw))
    }
}

impl<T: Real> RawCoords<T> for Network {
    /// Edge weights above the diagonal.
    fn to_raw(&self, p: &GraphLaplacian<T>) -> Vec<T> {
        p.upper_triangle()
    }

    fn project(&self, raw: &[T]) -> Result<GraphLaplacian<T>> {
        let edges: Vec<T> = raw.iter().map(|&v| v.max(T::zero())).collect();
        laplacian_from_edges(&edges, self.nodes)
    }
}

fn spd_raw<T: Real>(p: &SpdMatrix<T>) -> Vec<T> {
    p.lower_triangle()
}

/// Eigenvalue clip at `floor` of the symmetric matrix with lower triangle `raw`.
fn spd_project<T: Real>(l: usize, raw: &[T], floor: T) -> Result<SpdMatrix<T>> {
    let mut m = Matrix::zeros(l);
    let mut k = 0;
    for i in 0..l {
        for j in 0..=i {
            m.set(i, j, raw[k]);
            m.set(j, i, raw[k]);
            k += 1;
        }
    }
    let e = sym_eigen(&m.symmetrized())?;
    let clipped: Vec<T> = e.values.iter().map(|&v| v.max(floor)).collect();
    SpdMatrix::new(e.reconstruct_with(&clipped))
}

impl<T: Real> RawCoords<T> for SpdPower {
    fn to_raw(&self, p: &SpdMatrix<T>) -> Vec<T> {
        spd_raw(p)
    }

    fn project(&self, raw: &[T]) -> Result<SpdMatrix<T>> {
        spd_project(self.l, raw, T::zero())
    }
}

impl<T: Real> RawCoords<T> for SpdBw {
    fn to_raw(&self, p: &SpdMatrix<T>) -> Vec<T> {
        spd_raw(p)
    }

    fn project(&self, raw: &[T]) -> Result<SpdMatrix<T>> {
        spd_project(self.l, raw, T::lit(1e-12))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PgdConfig {
    pub max_iter: usize,
    /// Central-difference step for the objective gradient.
    pub h: f64,
    /// Stops once a step moves the raw coordinates less than this.
    pub tol: f64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self { max_iter: 20_000, h: 1e-6, tol: 1e-13 }
    }
}

/// Minimizes `Σ wᵢ d²(p, yᵢ)` by projected gradient descent with
/// backtracking, using only the space's distance. Starts at the first
/// anchor so it shares nothing with the closed-form or fixed-point solvers.
pub fn brute_force_mean<S: RawCoords<f64>>(space: &S, w: &[f64], anchors: &[S::Point], cfg: PgdConfig) -> Result<S::Point> {
    if w.len() != anchors.len() || anchors.is_empty() {
        return Err(invalid("weights and anchors must be non-empty and of equal length"));
    }
    let objective = |raw: &[f64]| -> Result<f64> {
        let p = space.project(raw)?;
        let mut s = 0.0;
        for (wi, a) in w.iter().zip(anchors) {
            let d = space.distance(&p, a)?;
            s += wi * d * d;
        }
        Ok(s)
    };
    let mut x = space.to_raw(&anchors[0]);
    let mut fx = objective(&x)?;
    let mut step = 1.0;
    for _ in 0..cfg.max_iter {
        let mut g = vec![0.0; x.len()];
        for k in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += cfg.h;
            xm[k] -= cfg.h;
            g[k] = (objective(&xp)? - objective(&xm)?) / (2.0 * cfg.h);
        }
        step = (step * 2.0f64).min(1e3);
        let mut moved = None;
        while step > 1e-16 {
            let cand = space.to_raw(&space.project(&x.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>())?);
            let fc = objective(&cand)?;
            let gap: f64 = x.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum();
            if fc <= fx - 1e-4 / step * gap {
                moved = Some((cand, fc, gap.sqrt()));
                break;
            }
            step *= 0.5;
        }
        match moved {
            Some((cand, fc, delta)) => {
                x = cand;
                fx = fc;
                if delta < cfg.tol {
                    break;
                }
            }
            None => break,
        }
    }
    space.project(&x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub samples: usize,
    pub n: usize,
    pub delta: f64,
    pub min_entropy: f64,
    pub max_entropy: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub max_grad: f64,
    pub grad_bound: f64,
    pub violations: usize,
}

/// Checks `−log(1+δ) ≤ H(w) ≤ log n + 1e-6` and `|∂H/∂wᵢ| ≤ |log δ| + 1`
/// on random simplex points, half of them sharpened towards the vertices.
pub fn entropy_bounds(samples: usize, n: usize, delta: f64, seed: u64) -> Result<EntropyReport> {
    if n == 0 || !(delta > 0.0) {
        return Err(invalid("entropy check needs n ≥ 1 and δ > 0"));
    }
    let mut rng = substream(seed, "entropy", 0);
    let lower = -(1.0 + delta).ln();
    let upper = (n as f64).ln() + 1e-6;
    let grad_bound = delta.ln().abs() + 1.0;
    let (mut lo, mut hi, mut gmax, mut bad) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0);
    for k in 0..samples {
        let mut w: Vec<f64> = uniform_simplex(n, &mut rng);
        if k % 2 == 1 {
            let p = 1.0 + rng.random::<f64>() * 40.0;
            w.iter_mut().for_each(|v| *v = v.powf(p));
            let s: f64 = w.iter().sum();
            if s > 0.0 {
                w.iter_mut().for_each(|v| *v /= s);
            } else {
                w = vec![0.0; n];
                w[0] = 1.0;
            }
        }
        let h = entropy(&w, delta);
        let g = entropy_grad(&w, delta).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        lo = lo.min(h);
        hi = hi.max(h);
        gmax = gmax.max(g);
        if h < lower || h > upper || g > grad_bound {
            bad += 1;
        }
    }
    Ok(EntropyReport {
        samples,
        n,
        delta,
        min_entropy: lo,
        max_entropy: hi,
        lower_bound: lower,
        upper_bound: upper,
        max_grad: gmax,
        grad_bound,
        violations: bad,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanOracleReport {
    pub instances: usize,
    pub anchors: usize,
    /// Largest distance between the fast mean and the brute-force minimizer.
    pub max_gap: f64,
    pub tolerance: f64,
}

/// Fast means against [`brute_force_mean`] on random anchors and weights.
pub fn mean_oracle_check<S: RandomPoint<f64> + RawCoords<f64>>(
    space: &S,
    instances: usize,
    anchors: usize,
    seed: u64,
) -> Result<MeanOracleReport> {
    if instances == 0 || anchors == 0 {
        return Err(invalid("mean check needs at least one instance and one anchor"));
    }
    let mut rng = substream(seed, "mean-oracle", 0);
    let mut gap = 0.0f64;
    for _ in 0..instances {
        let pts: Vec<S::Point> = (0..anchors).map(|_| space.random_point(&mut rng)).collect();
        let w: Vec<f64> = uniform_simplex(anchors, &mut rng);
        let fast = space.frechet_mean(&validate_weights(&w)?, &pts)?;
        let slow = brute_force_mean(space, &w, &pts, PgdConfig::default())?;
        gap = gap.max(space.distance(&fast, &slow)?);
    }
    let tolerance = if space.is_hadamard() { 1e-6 } else { 1e-4 };
    Ok(MeanOracleReport { instances, anchors, max_gap: gap, tolerance })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub lipschitz_trials: usize,
    pub lipschitz_anchors: usize,
    pub grad_instances: usize,
    pub grad_anchors: usize,
    pub grad_step: f64,
    pub mean_instances: usize,
    pub mean_anchors: usize,
    pub entropy_samples: usize,
    pub entropy_n: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            lipschitz_trials: 1000,
            lipschitz_anchors: 5,
            grad_instances: 100,
            grad_anchors: 5,
            grad_step: 1e-5,
            mean_instances: 20,
            mean_anchors: 3,
            entropy_samples: 10_000,
            entropy_n: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub space: String,
    /// `None` for non-Hadamard spaces, where the bound is not guaranteed.
    pub lipschitz: Option<LipschitzReport>,
    pub gradient: GradCheckReport,
    pub gradient_tolerance: f64,
    pub mean_oracle: MeanOracleReport,
    pub entropy: EntropyReport,
    pub violations: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Lipschitz audit (Hadamard spaces only), weight-gradient check, mean
/// oracle and entropy bounds, each from its own seeded stream.
pub fn run_audit<S: RandomPoint<f64> + RawCoords<f64>>(space: &S, cfg: &AuditConfig, seed: u64) -> Result<AuditReport> {
    let lipschitz = if space.is_hadamard() {
        let mut rng = substream(seed, "audit-anchors", 0);
        let pts: Vec<S::Point> = (0..cfg.lipschitz_anchors).map(|_| space.random_point(&mut rng)).collect();
        let set = AnchorSet::new(space, pts, (0..cfg.lipschitz_anchors).collect())?;
        Some(audit_lipschitz(space, &set, cfg.lipschitz_trials, derive_seed(seed, "lipschitz", 0))?)
    } else {
        None
    };
    let gradient = gradient_check(space, cfg.grad_instances, cfg.grad_anchors, cfg.grad_step, derive_seed(seed, "gradcheck", 0))?;
    let gradient_tolerance = if space.is_hadamard() { 1e-6 } else { 1e-3 };
    let mean_oracle = mean_oracle_check(space, cfg.mean_instances, cfg.mean_anchors, derive_seed(seed, "mean-oracle", 0))?;
    let entropy = entropy_bounds(cfg.entropy_samples, cfg.entropy_n, ENTROPY_DELTA, derive_seed(seed, "entropy", 0))?;
    let violations = lipschitz.as_ref().map_or(0, |l| l.violations)
        + usize::from(!(gradient.max_rel_error < gradient_tolerance))
        + usize::from(!(mean_oracle.max_gap < mean_oracle.tolerance))
        + entropy.violations;
    Ok(AuditReport { space: space.id().to_string(), lipschitz, gradient, gradient_tolerance, mean_oracle, entropy, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WeightVector;
    use crate::space::{w2_distance, ProbGrid};

    #[test]
    fn gradient_check_flat_spaces() {
        let r = gradient_check(&Network::new(4), 5, 3, 1e-5, 1).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        let r = gradient_check(&SpdPower::new(3), 5, 3, 1e-5, 1).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn brute_force_matches_quantile_average() {
        let space = Wasserstein1d::new(ProbGrid::new(10).unwrap());
        let mut rng = substream(2, "t", 0);
        let anchors: Vec<QuantileVec<f64>> = (0..3).map(|_| space.random_point(&mut rng)).collect();
        let w = [0.2, 0.3, 0.5];
        let bf = brute_force_mean(&space, &w, &anchors, PgdConfig::default()).unwrap();
        let cf = space.frechet_mean(&WeightVector::uniform(3), &anchors).unwrap();
        let cf_w = space.frechet_mean(&validate_weights(&w).unwrap(), &anchors).unwrap();
        assert!(w2_distance(&bf, &cf_w).unwrap() < 1e-6);
        assert!(w2_distance(&bf, &cf).unwrap() > 1e-6);
    }

    #[test]
    fn entropy_bounds_hold() {
        let r = entropy_bounds(2000, 7, 1e-10, 3).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(r.max_entropy <= (7f64).ln() + 1e-6);
    }
}
