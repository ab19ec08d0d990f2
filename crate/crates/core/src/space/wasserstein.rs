//! One-dimensional distributions under the 2-Wasserstein metric, represented
//! by quantile functions on a fixed midpoint probability grid.

use crate::error::{dim, invalid, Result};
use crate::geometry::{MetricSpace, SpaceId};
use crate::scalar::Real;
use crate::space::flat::FlatAnchors;

/// Midpoint grid `p_k = (k − 1/2) / M`, `k = 1..M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbGrid {
    m: usize,
}

impl ProbGrid {
    pub const DEFAULT_M: usize = 100;

    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("probability grid needs at least 2 nodes, got {m}")));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.m as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(|k| self.point(k))
    }
}

impl Default for ProbGrid {
    fn default() -> Self {
        Self { m: Self::DEFAULT_M }
    }
}

/// Discretized quantile function; non-decreasing up to `1e-9`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileVec<T> {
    q: Vec<T>,
}

impl<T: Real> QuantileVec<T> {
    pub fn new(q: Vec<T>) -> Result<Self> {
        let v = Self { q };
        v.check_monotone()?;
        Ok(v)
    }

    pub(crate) fn from_raw(q: Vec<T>) -> Self {
        Self { q }
    }

    pub fn values(&self) -> &[T] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn into_values(self) -> Vec<T> {
        self.q
    }

    pub fn cast<U: Real>(&self) -> QuantileVec<U> {
        QuantileVec {
            q: self.q.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }

    fn check_monotone(&self) -> Result<()> {
        if let Some(k) = self.q.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("quantile {k} is not finite")));
        }
        for (k, w) in self.q.windows(2).enumerate() {
            let slack = T::tol(1e-9) * T::one().max(w[0].abs());
            if w[0] > w[1] + slack {
                return Err(invalid(format!("quantiles decrease at node {k}: {} > {}", w[0], w[1])));
            }
        }
        Ok(())
    }
}

/// Wasserstein distance between quantile vectors on a shared grid (midpoint rule).
pub fn w2_distance<T: Real>(a: &QuantileVec<T>, b: &QuantileVec<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(dim(format!("grid mismatch: {} vs {} nodes", a.len(), b.len())));
    }
    Ok((crate::scalar::sq_dist(&a.q, &b.q) / T::from_usize_lossy(a.len())).sqrt())
}

/// Empirical quantiles: the order statistic at `ceil(p_k·s)` (1-based).
pub fn quantile_from_samples<T: Real>(samples: &[T], grid: ProbGrid) -> Result<QuantileVec<T>> {
    if samples.is_empty() {
        return Err(invalid("empty sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite sample value"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let s = sorted.len();
    let m = grid.len();
    // ceil((2k−1)·s / 2M) in integers, k = 1..M
    let q = (1..=m)
        .map(|k| {
            let idx = ((2 * k - 1) * s).div_ceil(2 * m);
            sorted[idx - 1]
        })
        .collect();
    Ok(QuantileVec::from_raw(q))
}

/// `mean + sd·Φ⁻¹(p_k)` at every grid node.
pub fn gaussian_quantiles<T: Real>(mean: T, sd: T, grid: ProbGrid) -> Result<QuantileVec<T>> {
    if !(sd >= T::zero()) {
        return Err(invalid(format!("standard deviation must be non-negative, got {sd}")));
    }
    Ok(QuantileVec::from_raw(
        grid.points().map(|p| mean + sd * T::lit(norm_inv_cdf(p))).collect(),
    ))
}

/// Quantiles of the piecewise-linear CDF through the cumulative bin masses.
pub fn quantiles_from_histogram<T: Real>(edges: &[T], counts: &[T], grid: ProbGrid) -> Result<QuantileVec<T>> {
    if edges.len() != counts.len() + 1 || counts.is_empty() {
        return Err(dim(format!("{} edges for {} bins", edges.len(), counts.len())));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("bin edges must be strictly ascending"));
    }
    if counts.iter().any(|c| !(*c >= T::zero())) {
        return Err(invalid("bin counts must be non-negative"));
    }
    let total: T = counts.iter().copied().sum();
    if total <= T::zero() {
        return Err(invalid("histogram has no mass"));
    }
    let mut cdf = Vec::with_capacity(edges.len());
    let mut acc = T::zero();
    cdf.push(T::zero());
    for &c in counts {
        acc += c;
        cdf.push(acc / total);
    }
    let mut bin = 0;
    let q = grid
        .points()
        .map(|p| {
            let p = T::lit(p);
            while bin + 1 < counts.len() && !(p <= cdf[bin + 1] && counts[bin] > T::zero()) {
                bin += 1;
            }
            let mass = cdf[bin + 1] - cdf[bin];
            let frac = if mass > T::zero() {
                ((p - cdf[bin]) / mass).max(T::zero()).min(T::one())
            } else {
                T::one()
            };
            edges[bin] + frac * (edges[bin + 1] - edges[bin])
        })
        .collect();
    Ok(QuantileVec::from_raw(q))
}

/// Standard normal quantile function (Wichura's AS 241, about 1e-16 relative).
pub fn norm_inv_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// The 2-Wasserstein backend.
#[derive(Clone, Copy, Debug, Default)]
pub struct Wasserstein1d {
    pub grid: ProbGrid,
}

impl Wasserstein1d {
    pub fn new(grid: ProbGrid) -> Self {
        Self { grid }
    }

    fn check_len<T: Real>(&self, q: &QuantileVec<T>) -> Result<()> {
        if q.len() != self.grid.len() {
            return Err(dim(format!("quantile vector has {} nodes, grid has {}", q.len(), self.grid.len())));
        }
        Ok(())
    }

    fn scale<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.grid.len())
    }
}

impl<T: Real> MetricSpace<T> for Wasserstein1d {
    type Point = QuantileVec<T>;
    type Prepared = FlatAnchors<T>;
    type Target = Vec<T>;

    fn id(&self) -> SpaceId {
        SpaceId::Wasserstein1d
    }

    fn validate(&self, p: &QuantileVec<T>) -> Result<()> {
        self.check_len(p)?;
        p.check_monotone()
    }

    fn distance(&self, a: &QuantileVec<T>, b: &QuantileVec<T>) -> Result<T> {
        self.check_len(a)?;
        w2_distance(a, b)
    }

    fn prepare_anchors(&self, anchors: &[QuantileVec<T>]) -> Result<FlatAnchors<T>> {
        FlatAnchors::from_rows(self.grid.len(), anchors.iter().map(|a| a.values()))
    }

    fn anchor_count(&self, prepared: &FlatAnchors<T>) -> usize {
        prepared.len()
    }

    fn prepare_target(&self, target: &QuantileVec<T>) -> Result<Vec<T>> {
        self.check_len(target)?;
        Ok(target.q.clone())
    }

    fn mean_prepared(&self, prepared: &FlatAnchors<T>, w: &[T]) -> Result<QuantileVec<T>> {
        Ok(QuantileVec::from_raw(prepared.combine(w)))
    }

    fn loss_and_grad(&self, prepared: &FlatAnchors<T>, w: &[T], target: &Vec<T>, grad: &mut [T]) -> Result<T> {
        Ok(prepared.loss_and_grad(self.scale(), w, target, grad))
    }

    fn loss(&self, prepared: &FlatAnchors<T>, w: &[T], target: &Vec<T>) -> Result<T> {
        Ok(prepared.loss(self.scale(), w, target))
    }
}
