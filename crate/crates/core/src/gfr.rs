//! Global Fréchet regression: the linear-regression weights
//! `wᵢ(x) = 1 + (Xᵢ − X̄)ᵀ Σ̂⁻¹ (x − X̄)` plugged into a weighted Fréchet mean.
//!
//! The weights can be negative, so the weighted mean may leave the space; each
//! backend restores feasibility with a minimal repair.

use crate::error::{dim, invalid, E2mError, Result};
use crate::geometry::MetricSpace;
use crate::io::check_predictors;
use crate::linalg::{sym_eigen, Matrix, SymMatrix};
use crate::scalar::{dot, Real};
use crate::space::{FlatAnchors, GraphLaplacian, Network, QuantileVec, SpdBw, SpdMatrix, SpdPower, Wasserstein1d};

const MIN_MASS: f64 = 1e-8;
const SPD_FLOOR: f64 = 1e-8;

/// Backends that can form a mean under signed weights summing to one.
pub trait SignedMean<T: Real>: MetricSpace<T> {
    /// Returns the repaired mean and whether a repair was needed.
    fn signed_mean(&self, prepared: &Self::Prepared, w: &[T]) -> Result<(Self::Point, bool)>;
}

/// Least-squares projection onto non-decreasing sequences (pool adjacent violators).
pub fn isotonic_projection<T: Real>(v: &[T]) -> Vec<T> {
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let c = c1 + c2;
            let merged = (m1 * T::from_usize_lossy(c1) + m2 * T::from_usize_lossy(c2)) / T::from_usize_lossy(c);
            *blocks.last_mut().expect("two blocks") = (merged, c);
        }
    }
    blocks.into_iter().flat_map(|(m, c)| std::iter::repeat_n(m, c)).collect()
}

impl<T: Real> SignedMean<T> for Wasserstein1d {
    fn signed_mean(&self, prepared: &FlatAnchors<T>, w: &[T]) -> Result<(QuantileVec<T>, bool)> {
        let q = prepared.combine(w);
        let repaired = q.windows(2).any(|p| p[1] < p[0]);
        let q = if repaired { isotonic_projection(&q) } else { q };
        Ok((QuantileVec::new(q)?, repaired))
    }
}

impl<T: Real> SignedMean<T> for Network {
    fn signed_mean(&self, prepared: &FlatAnchors<T>, w: &[T]) -> Result<(GraphLaplacian<T>, bool)> {
        let v = self.nodes;
        let mut e = prepared.combine(w);
        let mut repaired = false;
        for i in 0..v {
            let mut row = T::zero();
            for j in 0..v {
                if i == j {
                    continue;
                }
                // Symmetrize against rounding before clipping.
                let a = T::lit(0.5) * (e[i * v + j] + e[j * v + i]);
                let a = if a > T::zero() {
                    repaired = true;
                    T::zero()
                } else {
                    a
                };
                e[i * v + j] = a;
                row += a;
            }
            e[i * v + i] = -row;
        }
        Ok((GraphLaplacian::from_matrix(v, e)?, repaired))
    }
}

impl<T: Real> SignedMean<T> for SpdPower {
    fn signed_mean(&self, prepared: &FlatAnchors<T>, w: &[T]) -> Result<(SpdMatrix<T>, bool)> {
        let m = Matrix::from_row_major(self.l, &prepared.combine(w))?.symmetrized();
        let e = sym_eigen(&m)?;
        let floor = T::lit(SPD_FLOOR);
        let repaired = e.min_value() < floor;
        let m = if repaired {
            let clipped: Vec<T> = e.values.iter().map(|&x| x.max(floor)).collect();
            e.reconstruct_with(&clipped)
        } else {
            m
        };
        Ok((self.unpower(&m)?, repaired))
    }
}

impl<T: Real> SignedMean<T> for SpdBw {
    fn signed_mean(&self, prepared: &Vec<SymMatrix<T>>, w: &[T]) -> Result<(SpdMatrix<T>, bool)> {
        let repaired = w.iter().any(|&x| x < T::zero());
        let clipped: Vec<T> = w.iter().map(|&x| x.max(T::zero())).collect();
        let mass: T = clipped.iter().copied().sum();
        if !(mass > T::lit(MIN_MASS)) {
            return Err(E2mError::DegenerateWeights(mass.to_f64_lossy()));
        }
        let normalized: Vec<T> = clipped.iter().map(|&x| x / mass).collect();
        Ok((self.mean_prepared(prepared, &normalized)?, repaired))
    }
}

/// Fitted predictor moments plus the prepared training responses.
pub struct GfrModel<T: Real, S: MetricSpace<T>> {
    space: S,
    mean: Vec<T>,
    cov_inv: Vec<T>,
    centered: Vec<Vec<T>>,
    prepared: S::Prepared,
    ridge: bool,
}

/// Inverse of a symmetric positive semi-definite matrix, with a
/// `1e-8·trace/p` ridge when it is numerically singular.
fn inverse_with_ridge<T: Real>(cov: SymMatrix<T>) -> Result<(Vec<T>, bool)> {
    let p = cov.dim();
    let mut e = sym_eigen(&cov)?;
    let ridge = e.min_value() <= T::tol(1e-10) * e.max_value().abs().max(T::min_positive_value());
    if ridge {
        let mut c = cov.clone();
        let r = T::lit(1e-8) * c.trace().max(T::min_positive_value()) / T::from_usize_lossy(p);
        c.add_diag(r);
        e = sym_eigen(&c)?;
        log::info!("predictor covariance is near-singular; added ridge {:e}", r.to_f64_lossy());
    }
    let inv: Vec<T> = e.values.iter().map(|&l| T::one() / l.max(T::min_positive_value())).collect();
    Ok((e.reconstruct_with(&inv).as_slice().to_vec(), ridge))
}

impl<T: Real, S: MetricSpace<T>> GfrModel<T, S> {
    pub fn fit(space: S, x: &[Vec<T>], y: &[S::Point]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(dim(format!("{} predictor rows vs {} responses", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(invalid("GFR needs at least two observations"));
        }
        let p = check_predictors(x)?;
        for (i, yi) in y.iter().enumerate() {
            space.validate(yi).map_err(|e| E2mError::Validation { what: "response", index: i, reason: e.to_string() })?;
        }
        let n = T::from_usize_lossy(x.len());
        let mut mean = vec![T::zero(); p];
        for r in x {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let centered: Vec<Vec<T>> = x.iter().map(|r| r.iter().zip(&mean).map(|(&v, &m)| v - m).collect()).collect();
        let mut cov = Matrix::zeros(p);
        for c in &centered {
            for i in 0..p {
                for j in 0..p {
                    cov.set(i, j, cov.get(i, j) + c[i] * c[j]);
                }
            }
        }
        let (cov_inv, ridge) = inverse_with_ridge(cov.scale(T::one() / n).symmetrized())?;
        let prepared = space.prepare_anchors(y)?;
        Ok(Self { space, mean, cov_inv, centered, prepared, ridge })
    }

    pub fn used_ridge(&self) -> bool {
        self.ridge
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// `wᵢ(x)`; averages to one over the training rows.
    pub fn weights(&self, x: &[T]) -> Result<Vec<T>> {
        let p = self.mean.len();
        if x.len() != p {
            return Err(dim(format!("query has {} features, model has {p}", x.len())));
        }
        let d: Vec<T> = x.iter().zip(&self.mean).map(|(&v, &m)| v - m).collect();
        let s: Vec<T> = (0..p).map(|i| dot(&self.cov_inv[i * p..(i + 1) * p], &d)).collect();
        Ok(self.centered.iter().map(|c| T::one() + dot(c, &s)).collect())
    }
}

impl<T: Real, S: SignedMean<T>> GfrModel<T, S> {
    pub fn predict(&self, x: &[T]) -> Result<S::Point> {
        let w = self.weights(x)?;
        let mass: T = w.iter().copied().sum();
        if !(mass > T::lit(MIN_MASS)) {
            return Err(E2mError::DegenerateWeights(mass.to_f64_lossy()));
        }
        let w: Vec<T> = w.iter().map(|&v| v / mass).collect();
        let (point, repaired) = self.space.signed_mean(&self.prepared, &w)?;
        if repaired {
            log::debug!("{} GFR mean repaired to stay in the space", self.space.id());
        }
        Ok(point)
    }

    pub fn predict_many(&self, xs: &[Vec<T>]) -> Result<Vec<S::Point>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WeightVector;
    use crate::rng::substream;
    use crate::space::{gaussian_quantiles, laplacian_from_edges, ProbGrid};
    use rand::Rng;

    #[test]
    fn pav_examples() {
        assert_eq!(isotonic_projection(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic_projection(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_projection(&[1.0, 2.0]), vec![1.0, 2.0]);
    }

    /// Brute force: the projection onto the monotone cone satisfies the KKT
    /// conditions, so no monotone perturbation direction lowers the distance.
    #[test]
    fn pav_is_a_projection() {
        let mut rng = substream(1, "pav", 0);
        for _ in 0..200 {
            let v: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let p = isotonic_projection(&v);
            assert!(p.windows(2).all(|w| w[0] <= w[1] + 1e-15));
            let base: f64 = v.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
            for _ in 0..50 {
                let mut q: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                q.sort_by(f64::total_cmp);
                let d: f64 = v.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(d >= base - 1e-12);
            }
        }
    }

    #[test]
    fn weight_examples() {
        let space = Wasserstein1d::new(ProbGrid::new(4).unwrap());
        let y = vec![
            gaussian_quantiles(0.0, 1.0, space.grid).unwrap(),
            gaussian_quantiles(1.0, 1.0, space.grid).unwrap(),
        ];
        let x = vec![vec![-1.0], vec![1.0]];
        let m = GfrModel::fit(space, &x, &y).unwrap();
        assert_eq!(m.weights(&[1.0]).unwrap(), vec![0.0, 2.0]);
        assert_eq!(m.weights(&[0.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(m.predict(&[1.0]).unwrap(), y[1]);
    }

    #[test]
    fn weights_average_to_one() {
        let mut rng = substream(2, "gfr", 0);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<_> = (0..40).map(|_| laplacian_from_edges(&[rng.random(), rng.random(), rng.random()], 3).unwrap()).collect();
        let m = GfrModel::fit(Network::new(3), &x, &y).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 3.0 - 1.0).collect();
            let w = m.weights(&q).unwrap();
            assert!((w.iter().sum::<f64>() / 40.0 - 1.0).abs() < 1e-10);
            let pred = m.predict(&q).unwrap();
            m.space.validate(&pred).unwrap();
        }
        let at_mean = m.weights(&m.mean().to_vec()).unwrap();
        assert!(at_mean.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let unweighted = m.space.frechet_mean(&WeightVector::uniform(40), &y).unwrap();
        let got = m.predict(&m.mean().to_vec()).unwrap();
        assert!(crate::space::frobenius_distance(&got, &unweighted).unwrap() < 1e-12);
    }

    #[test]
    fn collinear_predictors_use_ridge() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<_> = (0..10).map(|i| laplacian_from_edges(&[i as f64], 2).unwrap()).collect();
        let m = GfrModel::fit(Network::new(2), &x, &y).unwrap();
        assert!(m.used_ridge());
        assert!(m.weights(&[3.0, 6.0]).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn repairs_keep_points_valid() {
        let mut rng = substream(3, "gfr", 0);
        let space = SpdPower::new(2);
        let anchors: Vec<SpdMatrix<f64>> = (0..3)
            .map(|_| SpdMatrix::from_diag(&[rng.random::<f64>() + 0.1, rng.random::<f64>() + 0.1]).unwrap())
            .collect();
        let prep = <SpdPower as MetricSpace<f64>>::prepare_anchors(&space, &anchors).unwrap();
        let (p, repaired) = space.signed_mean(&prep, &[3.0, -1.0, -1.0]).unwrap();
        p.check_output().unwrap();
        let _ = repaired;
        let bw = SpdBw::new(2);
        let prep = <SpdBw as MetricSpace<f64>>::prepare_anchors(&bw, &anchors).unwrap();
        let (b, repaired) = bw.signed_mean(&prep, &[1.5, -0.5, 0.0]).unwrap();
        assert!(repaired);
        assert!(b.sym().sub(anchors[0].sym()).max_abs() < 1e-8);
        assert!(matches!(bw.signed_mean(&prep, &[-1.0, 2.0 - 2.0, 0.0]), Err(E2mError::DegenerateWeights(_))));
        let net = Network::new(2);
        let ls = vec![laplacian_from_edges(&[1.0], 2).unwrap(), laplacian_from_edges(&[3.0], 2).unwrap()];
        let prep = <Network as MetricSpace<f64>>::prepare_anchors(&net, &ls).unwrap();
        let (l, repaired) = net.signed_mean(&prep, &[2.0, -1.0]).unwrap();
        assert!(repaired);
        assert_eq!(l.upper_triangle(), vec![0.0]);
    }
}
