use rand::Rng;
use rand_distr::{Bernoulli, Beta, ChiSquared, Distribution, Gamma, Normal, StandardNormal, Uniform};
use serde_json::json;
use std::f64::consts::PI;

use crate::error::{invalid, E2mError, Result};
use crate::linalg::{sym_apply, MatFn, Matrix, SymMatrix};
use crate::rng::{substream, StreamRng};
use crate::space::{
    bw_barycenter, gaussian_quantiles, laplacian_from_edges, quantile_from_samples, BwSolveConfig, GraphLaplacian,
    Network, ProbGrid, QuantileVec, SpdBw, SpdMatrix, SpdPower, Wasserstein1d,
};

use super::{Observation, Scenario};

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).expect("valid bounds").sample(rng)
}

/// Shape–rate Gamma, the convention used for predictors.
fn gamma_rate(rng: &mut StreamRng, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng)
}

fn normal(rng: &mut StreamRng, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).expect("positive variance").sample(rng)
}

fn bernoulli(rng: &mut StreamRng, p: f64) -> f64 {
    if Bernoulli::new(p).expect("probability").sample(rng) {
        1.0
    } else {
        0.0
    }
}

/// Gaussian responses observed through a finite sample.
#[derive(Clone, Debug)]
pub struct DistributionDgp {
    pub grid: ProbGrid,
    /// Observations drawn from each response distribution.
    pub samples: usize,
}

impl Default for DistributionDgp {
    fn default() -> Self {
        Self { grid: ProbGrid::default(), samples: 100 }
    }
}

impl DistributionDgp {
    pub fn mu(x: &[f64]) -> f64 {
        2.0 + 2.0 * (PI * x[0]).cos().powi(2) + (PI * x[1]).sin().powi(2) * x[8] + (x[4] * x[5]).sqrt() * (1.0 - x[8])
    }

    pub fn theta(x: &[f64]) -> f64 {
        1.0 + (PI * x[1] / 2.0).cos() + (PI * x[2]).sin() * x[9] + (x[5] * x[6]).sqrt() * (1.0 - x[9]) / 3.0
    }
}

impl Scenario for DistributionDgp {
    type Space = Wasserstein1d;

    fn name(&self) -> &'static str {
        "distribution"
    }

    fn space(&self) -> Wasserstein1d {
        Wasserstein1d::new(self.grid)
    }

    fn sample_x(&self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let x = vec![
            uniform(rng, -1.0, 0.0),
            uniform(rng, -1.0, 0.0),
            uniform(rng, 0.0, 1.0),
            uniform(rng, 0.0, 1.0),
            gamma_rate(rng, 2.0, 2.0),
            gamma_rate(rng, 3.0, 2.0),
            gamma_rate(rng, 4.0, 2.0),
            gamma_rate(rng, 5.0, 2.0),
            bernoulli(rng, 0.6),
            bernoulli(rng, 0.5),
            bernoulli(rng, 0.4),
            bernoulli(rng, 0.3),
        ];
        let theta = Self::theta(&x);
        if !(theta > 0.0) {
            return Err(invalid(format!("θ(x) = {theta} is not positive at x = {x:?}")));
        }
        Ok(x)
    }

    fn sample_y(&self, x: &[f64], rng: &mut StreamRng) -> Result<Observation<QuantileVec<f64>>> {
        let theta = Self::theta(x);
        let eta = normal(rng, Self::mu(x), 0.25);
        // shape θ², scale 1/θ, so that E[σ | X] = θ(X)
        let sigma = Gamma::new(theta * theta, 1.0 / theta).map_err(|e| invalid(e.to_string()))?.sample(rng);
        let raw: Vec<f64> = (0..self.samples).map(|_| eta + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(Observation { point: quantile_from_samples(&raw, self.grid)?, raw: Some(raw) })
    }

    fn truth(&self, xs: &[Vec<f64>], _oracle_seed: u64) -> Result<Vec<QuantileVec<f64>>> {
        xs.iter().map(|x| gaussian_quantiles(Self::mu(x), Self::theta(x), self.grid)).collect()
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "p": 12,
            "grid_nodes": self.grid.len(),
            "samples_per_response": self.samples,
            "predictor_gamma": "shape-rate",
            "sigma_gamma": "shape theta^2, scale 1/theta",
            "eta_sd": 0.5,
        })
    }
}

/// Two-community weighted stochastic block model on ten nodes.
#[derive(Clone, Debug)]
pub struct NetworkDgp {
    pub p_within: f64,
    pub p_between: f64,
}

impl Default for NetworkDgp {
    fn default() -> Self {
        Self { p_within: 0.5, p_between: 0.2 }
    }
}

pub const NETWORK_NODES: usize = 10;

impl NetworkDgp {
    /// `(α, β)` for within block 1, between blocks, within block 2.
    pub fn shapes(x: &[f64]) -> [(f64, f64); 3] {
        let (s1, c2) = ((PI * x[0]).sin(), (PI * x[1]).cos());
        let (x4, x5, x7, x8) = (x[3] * x[3], x[4] * x[4], x[6], x[7]);
        [
            (2.0 * s1 * x8 + c2 * (1.0 - x8), 2.0 * x4 * x7 + x5 * (1.0 - x7)),
            (2.0 * s1 * x8 + c2 * (1.0 - x8), x4 * x7 + 2.0 * x5 * (1.0 - x7)),
            (s1 * x8 + 2.0 * c2 * (1.0 - x8), x4 * x7 + 2.0 * x5 * (1.0 - x7)),
        ]
    }

    fn block(i: usize) -> usize {
        usize::from(i >= NETWORK_NODES / 2)
    }

    /// Shape index and presence probability of edge `(i, j)`.
    fn edge_kind(&self, i: usize, j: usize) -> (usize, f64) {
        match (Self::block(i), Self::block(j)) {
            (0, 0) => (0, self.p_within),
            (1, 1) => (2, self.p_within),
            _ => (1, self.p_between),
        }
    }

    fn draw_x(rng: &mut StreamRng) -> Vec<f64> {
        vec![
            uniform(rng, 0.0, 1.0),
            uniform(rng, -0.5, 0.5),
            uniform(rng, 1.0, 2.0),
            normal(rng, 0.0, 1.0),
            normal(rng, 0.0, 1.0),
            normal(rng, 5.0, 5.0),
            bernoulli(rng, 0.4),
            bernoulli(rng, 0.3),
            bernoulli(rng, 0.6),
        ]
    }
}

impl Scenario for NetworkDgp {
    type Space = Network;

    fn name(&self) -> &'static str {
        "network"
    }

    fn space(&self) -> Network {
        Network::new(NETWORK_NODES)
    }

    fn sample_x(&self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        for _ in 0..1000 {
            let x = Self::draw_x(rng);
            if Self::shapes(&x).iter().all(|&(a, b)| a > 0.0 && b > 0.0 && Beta::new(a, b).is_ok()) {
                return Ok(x);
            }
            log::info!("resampling network predictors with a non-positive Beta shape: {x:?}");
        }
        Err(invalid("could not draw predictors with positive Beta shapes"))
    }

    fn sample_y(&self, x: &[f64], rng: &mut StreamRng) -> Result<Observation<GraphLaplacian<f64>>> {
        let shapes = Self::shapes(x);
        let betas: Vec<Beta<f64>> = shapes
            .iter()
            .map(|&(a, b)| Beta::new(a, b).map_err(|e| invalid(format!("Beta({a}, {b}): {e}"))))
            .collect::<Result<_>>()?;
        let mut edges = Vec::with_capacity(NETWORK_NODES * (NETWORK_NODES - 1) / 2);
        for i in 0..NETWORK_NODES {
            for j in i + 1..NETWORK_NODES {
                let (k, p) = self.edge_kind(i, j);
                let present = rng.random::<f64>() < p;
                edges.push(if present { betas[k].sample(rng) } else { 0.0 });
            }
        }
        Ok(Observation { point: laplacian_from_edges(&edges, NETWORK_NODES)?, raw: None })
    }

    fn truth(&self, xs: &[Vec<f64>], _oracle_seed: u64) -> Result<Vec<GraphLaplacian<f64>>> {
        xs.iter()
            .map(|x| {
                let shapes = Self::shapes(x);
                let mut edges = Vec::new();
                for i in 0..NETWORK_NODES {
                    for j in i + 1..NETWORK_NODES {
                        let (k, p) = self.edge_kind(i, j);
                        let (a, b) = shapes[k];
                        edges.push(p * a / (a + b));
                    }
                }
                laplacian_from_edges(&edges, NETWORK_NODES)
            })
            .collect()
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "p": 9,
            "nodes": NETWORK_NODES,
            "p_within": self.p_within,
            "p_between": self.p_between,
            "x6_variance": 5.0,
            "nonpositive_shape": "resample predictors",
        })
    }
}

/// Lower-triangular Bartlett factor `A` with `A Aᵀ ~ W_l(I, df)`.
pub fn bartlett_factor(l: usize, df: f64, rng: &mut StreamRng) -> Result<Matrix<f64>> {
    let mut a = Matrix::zeros(l);
    for i in 0..l {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| invalid(format!("Wishart df {df} for dimension {l}: {e}")))?;
        a.set(i, i, chi.sample(rng).sqrt());
        for j in 0..i {
            a.set(i, j, rng.sample(StandardNormal));
        }
    }
    Ok(a)
}

/// `D^½ A Aᵀ D^½` for diagonal scale `d`.
fn scaled_wishart(d: &[f64], a: &Matrix<f64>) -> SymMatrix<f64> {
    let l = d.len();
    let sd: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let g = Matrix::from_fn(l, |i, j| sd[i] * a.get(i, j));
    g.matmul(&g.transpose()).symmetrized()
}

fn floor_scale(d: &mut [f64]) {
    for v in d.iter_mut() {
        if *v < 1e-10 {
            log::debug!("Wishart scale entry {v:e} regularized to 1e-10");
            *v = 1e-10;
        }
    }
}

/// Common Bartlett draws shared across oracle evaluations.
fn oracle_factors(l: usize, df: f64, draws: usize, seed: u64) -> Result<Vec<Matrix<f64>>> {
    let mut rng = substream(seed, "oracle", 0);
    (0..draws).map(|_| bartlett_factor(l, df, &mut rng)).collect()
}

/// Wishart responses under the square-root power metric.
#[derive(Clone, Debug)]
pub struct SpdPowerDgp {
    pub oracle_draws: usize,
}

impl Default for SpdPowerDgp {
    fn default() -> Self {
        Self { oracle_draws: 50_000 }
    }
}

pub const SPD_POWER_DIM: usize = 5;

impl SpdPowerDgp {
    pub const DF: f64 = (SPD_POWER_DIM + 1) as f64;

    pub fn scale_diag(x: &[f64]) -> Vec<f64> {
        let (s1, c2) = ((PI * x[0]).sin(), (PI * x[1]).cos());
        let mut d = vec![
            (s1 * x[9] + c2 * (1.0 - x[9])).powi(2),
            s1 * s1 * c2 * c2,
            (x[3] / x[4] / 10.0 * x[10] + (x[4] / x[3]).sqrt() / 10.0 * (1.0 - x[10])).powi(2),
            (x[6] * x[7]).abs() / 25.0,
            (x[8] / x[5]).abs() / 9.0,
        ];
        floor_scale(&mut d);
        d
    }

    /// `(E[Y^½])²` by Monte Carlo over shared Bartlett draws.
    pub fn truth_for_scale(&self, d: &[f64], factors: &[Matrix<f64>]) -> Result<SpdMatrix<f64>> {
        let l = d.len();
        let mut acc = SymMatrix::zeros(l);
        for a in factors {
            acc.add_scaled(1.0, &sym_apply(&scaled_wishart(d, a), MatFn::Sqrt)?);
        }
        let mean = acc.scale(1.0 / factors.len() as f64);
        SpdMatrix::new(mean.matrix().matmul(mean.matrix()).symmetrized())
    }
}

impl Scenario for SpdPowerDgp {
    type Space = SpdPower;

    fn name(&self) -> &'static str {
        "spd-power"
    }

    fn space(&self) -> SpdPower {
        SpdPower::new(SPD_POWER_DIM)
    }

    fn sample_x(&self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![
            uniform(rng, 0.0, 1.0),
            uniform(rng, -0.5, 0.5),
            uniform(rng, 1.0, 2.0),
            gamma_rate(rng, 3.0, 2.0),
            gamma_rate(rng, 4.0, 2.0),
            gamma_rate(rng, 5.0, 2.0),
            normal(rng, 0.0, 1.0),
            normal(rng, 0.0, 1.0),
            normal(rng, 0.0, 1.0),
            bernoulli(rng, 0.4),
            bernoulli(rng, 0.5),
            bernoulli(rng, 0.6),
        ])
    }

    fn sample_y(&self, x: &[f64], rng: &mut StreamRng) -> Result<Observation<SpdMatrix<f64>>> {
        let a = bartlett_factor(SPD_POWER_DIM, Self::DF, rng)?;
        Ok(Observation { point: SpdMatrix::new(scaled_wishart(&Self::scale_diag(x), &a))?, raw: None })
    }

    fn truth(&self, xs: &[Vec<f64>], oracle_seed: u64) -> Result<Vec<SpdMatrix<f64>>> {
        let factors = oracle_factors(SPD_POWER_DIM, Self::DF, self.oracle_draws, oracle_seed)?;
        xs.iter().map(|x| self.truth_for_scale(&Self::scale_diag(x), &factors)).collect()
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "p": 12,
            "l": SPD_POWER_DIM,
            "df": Self::DF,
            "predictor_gamma": "shape-rate",
            "sigma33": "first listed Sigma44 expression",
            "oracle": "Monte Carlo (E[Y^1/2])^2",
            "oracle_draws": self.oracle_draws,
        })
    }
}

/// 2×2 Wishart responses under the Bures–Wasserstein metric.
#[derive(Clone, Debug)]
pub struct SpdBwDgp {
    pub oracle_draws: usize,
    pub solve: BwSolveConfig,
}

impl Default for SpdBwDgp {
    fn default() -> Self {
        Self { oracle_draws: 2000, solve: BwSolveConfig { max_iter: 1000, ..BwSolveConfig::default() } }
    }
}

impl SpdBwDgp {
    pub const DF: f64 = 3.0;

    pub fn scale_diag(x: &[f64]) -> Vec<f64> {
        let s11 = (PI * x[0]).sin() * x[3] + (PI * x[1]).cos() * (1.0 - x[3]);
        let s22 = (PI * x[1]).sin() * (PI * x[2]).cos();
        let mut d = vec![s11 * s11, s22 * s22];
        floor_scale(&mut d);
        d
    }

    fn draw(d: &[f64], a: &Matrix<f64>) -> Result<SpdMatrix<f64>> {
        let mut y = scaled_wishart(d, a);
        y.add_diag(1e-10);
        SpdMatrix::new(y)
    }

    /// Empirical barycenter of the shared draws scaled by `d`.
    pub fn truth_for_scale(&self, d: &[f64], factors: &[Matrix<f64>]) -> Result<SpdMatrix<f64>> {
        let ys: Vec<SpdMatrix<f64>> = factors.iter().map(|a| Self::draw(d, a)).collect::<Result<_>>()?;
        let w = vec![1.0 / ys.len() as f64; ys.len()];
        bw_barycenter(&w, &ys, &self.solve).map_err(|e| match e {
            E2mError::NoConvergence { .. } => invalid(format!("truth oracle barycenter did not converge at scale {d:?}: {e}")),
            e => e,
        })
    }
}

impl Scenario for SpdBwDgp {
    type Space = SpdBw;

    fn name(&self) -> &'static str {
        "spd-bw"
    }

    /// Shares the oracle's solver settings; sharp weights near a
    /// nearly singular anchor can need a few hundred iterations.
    fn space(&self) -> SpdBw {
        SpdBw { l: 2, cfg: self.solve }
    }

    fn sample_x(&self, rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![
            uniform(rng, 0.0, 1.0),
            uniform(rng, -0.5, 0.5),
            uniform(rng, 1.0, 2.0),
            bernoulli(rng, 0.6),
            bernoulli(rng, 0.5),
        ])
    }

    fn sample_y(&self, x: &[f64], rng: &mut StreamRng) -> Result<Observation<SpdMatrix<f64>>> {
        let a = bartlett_factor(2, Self::DF, rng)?;
        Ok(Observation { point: Self::draw(&Self::scale_diag(x), &a)?, raw: None })
    }

    fn truth(&self, xs: &[Vec<f64>], oracle_seed: u64) -> Result<Vec<SpdMatrix<f64>>> {
        let factors = oracle_factors(2, Self::DF, self.oracle_draws, oracle_seed)?;
        xs.iter().map(|x| self.truth_for_scale(&Self::scale_diag(x), &factors)).collect()
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "p": 5,
            "l": 2,
            "df": Self::DF,
            "oracle": "empirical BW barycenter",
            "oracle_draws": self.oracle_draws,
            "draw_ridge": 1e-10,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MetricSpace;
    use crate::simgen::generate;
    use crate::space::{frobenius_distance, power_distance, w2_distance};

    #[test]
    fn generators_are_seeded() {
        let a = generate(&DistributionDgp::default(), 20, 5).unwrap();
        let b = generate(&DistributionDgp::default(), 20, 5).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.raw.as_ref().unwrap()[0].len(), 100);
        let c = generate(&DistributionDgp::default(), 20, 6).unwrap();
        assert_ne!(a.x, c.x);
        let n1 = generate(&NetworkDgp::default(), 10, 1).unwrap();
        assert_eq!(n1.y, generate(&NetworkDgp::default(), 10, 1).unwrap().y);
        let s1 = generate(&SpdPowerDgp::default(), 10, 1).unwrap();
        assert_eq!(s1.y, generate(&SpdPowerDgp::default(), 10, 1).unwrap().y);
        let b1 = generate(&SpdBwDgp::default(), 10, 1).unwrap();
        assert_eq!(b1.y, generate(&SpdBwDgp::default(), 10, 1).unwrap().y);
    }

    #[test]
    fn outputs_pass_validation() {
        let d = generate(&NetworkDgp::default(), 200, 2).unwrap();
        let net = NetworkDgp::default().space();
        assert!(d.y.iter().all(|y| net.validate(y).is_ok()));
        assert!(d.x.iter().all(|x| NetworkDgp::shapes(x).iter().all(|&(a, b)| a > 0.0 && b > 0.0)));
        let s = generate(&SpdPowerDgp::default(), 200, 2).unwrap();
        let sp = SpdPowerDgp::default().space();
        assert!(s.y.iter().all(|y| MetricSpace::<f64>::validate(&sp, y).is_ok()));
        let b = generate(&SpdBwDgp::default(), 200, 2).unwrap();
        let bw = SpdBwDgp::default().space();
        assert!(b.y.iter().all(|y| MetricSpace::<f64>::validate(&bw, y).is_ok()));
        let q = generate(&DistributionDgp::default(), 200, 2).unwrap();
        assert!(q.x.iter().all(|x| DistributionDgp::theta(x) > 0.0));
    }

    #[test]
    fn distribution_truth_matches_simulated_quantile_average() {
        let dgp = DistributionDgp::default();
        let mut rng = substream(9, "t", 0);
        let x = dgp.sample_x(&mut rng).unwrap();
        let truth = dgp.truth(&[x.clone()], 0).unwrap().remove(0);
        assert!(truth.values().windows(2).all(|w| w[0] <= w[1]));
        let theta = DistributionDgp::theta(&x);
        let z: Vec<f64> = gaussian_quantiles(0.0, 1.0, dgp.grid).unwrap().into_values();
        let mut acc = vec![0.0; z.len()];
        let draws = 100_000;
        for _ in 0..draws {
            let eta = normal(&mut rng, DistributionDgp::mu(&x), 0.25);
            let sigma = Gamma::new(theta * theta, 1.0 / theta).unwrap().sample(&mut rng);
            for (a, zk) in acc.iter_mut().zip(&z) {
                *a += eta + sigma * zk;
            }
        }
        let mc = QuantileVec::new(acc.iter().map(|a| a / draws as f64).collect()).unwrap();
        assert!(w2_distance(&mc, &truth).unwrap() < 0.02);
    }

    #[test]
    fn empty_block_model_gives_zero_laplacian() {
        let dgp = NetworkDgp { p_within: 0.0, p_between: 0.0 };
        let mut rng = substream(1, "t", 0);
        let x = dgp.sample_x(&mut rng).unwrap();
        let l = dgp.sample_y(&x, &mut rng).unwrap().point;
        assert!(l.entries().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn network_truth_matches_simulated_mean() {
        let dgp = NetworkDgp::default();
        let mut rng = substream(4, "t", 0);
        let x = dgp.sample_x(&mut rng).unwrap();
        let truth = dgp.truth(&[x.clone()], 0).unwrap().remove(0);
        // Frobenius MC error is about 0.015 at 1e5 draws, so use 1e6.
        let draws = 1_000_000;
        let mut acc = vec![0.0; NETWORK_NODES * NETWORK_NODES];
        for _ in 0..draws {
            let l = dgp.sample_y(&x, &mut rng).unwrap().point;
            acc.iter_mut().zip(l.entries()).for_each(|(a, v)| *a += v);
        }
        let mean = GraphLaplacian::from_matrix(NETWORK_NODES, acc.iter().map(|a| a / draws as f64).collect()).unwrap();
        let d = frobenius_distance(&mean, &truth).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn scalar_wishart_root_mean_matches_closed_form() {
        use statrs::function::gamma::ln_gamma;
        let df = SpdPowerDgp::DF;
        let factors = oracle_factors(1, df, 50_000, 3).unwrap();
        let s2 = 2.5;
        let got = SpdPowerDgp::default().truth_for_scale(&[s2], &factors).unwrap().sym().get(0, 0);
        let e_chi = 2f64.sqrt() * (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp();
        let want = s2 * e_chi * e_chi;
        assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");
    }

    #[test]
    fn power_oracle_converges_when_doubling_draws() {
        let dgp = SpdPowerDgp::default();
        let mut rng = substream(5, "t", 0);
        let f1 = oracle_factors(SPD_POWER_DIM, SpdPowerDgp::DF, 25_000, 8).unwrap();
        let f2 = oracle_factors(SPD_POWER_DIM, SpdPowerDgp::DF, 50_000, 8).unwrap();
        for _ in 0..5 {
            let d = SpdPowerDgp::scale_diag(&dgp.sample_x(&mut rng).unwrap());
            let (a, b) = (dgp.truth_for_scale(&d, &f1).unwrap(), dgp.truth_for_scale(&d, &f2).unwrap());
            let size = power_distance(&b, &SpdMatrix::from_diag(&[0.0; SPD_POWER_DIM]).unwrap(), 0.5).unwrap();
            assert!(power_distance(&a, &b, 0.5).unwrap() < 0.01 * size);
        }
    }

    #[test]
    fn bw_oracle_is_isotropic_for_equal_scales() {
        let dgp = SpdBwDgp::default();
        let factors = oracle_factors(2, SpdBwDgp::DF, dgp.oracle_draws, 2).unwrap();
        let t = dgp.truth_for_scale(&[0.8, 0.8], &factors).unwrap();
        let m = t.sym();
        let lam = 0.5 * (m.get(0, 0) + m.get(1, 1));
        assert!(m.get(0, 1).abs() < 0.05 * lam);
        assert!((m.get(0, 0) - m.get(1, 1)).abs() < 0.1 * lam);
    }

    #[test]
    fn bw_oracle_converges_when_doubling_draws() {
        let dgp = SpdBwDgp::default();
        let mut rng = substream(6, "t", 0);
        let f1 = oracle_factors(2, SpdBwDgp::DF, 4000, 8).unwrap();
        let f2 = oracle_factors(2, SpdBwDgp::DF, 8000, 8).unwrap();
        for _ in 0..5 {
            let d = SpdBwDgp::scale_diag(&dgp.sample_x(&mut rng).unwrap());
            let (a, b) = (dgp.truth_for_scale(&d, &f1).unwrap(), dgp.truth_for_scale(&d, &f2).unwrap());
            let size = b.sym().trace().sqrt();
            assert!(crate::space::bw_distance(&a, &b).unwrap() < 0.01 * size.max(1e-3));
        }
    }
}
