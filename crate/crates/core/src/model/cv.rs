use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::MetricSpace;
use crate::model::{train, TrainConfig};
use crate::rng::{derive_seed, substream};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum CvScheme {
    Loo,
    Kfold { k: usize },
    Repeated { k: usize, runs: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub scheme: CvScheme,
    /// Pooled out-of-sample MSPE (mean over runs for repeated schemes).
    pub mean: f64,
    /// Sample sd over folds, or over runs for repeated schemes.
    pub sd: f64,
    /// Per-fold MSPEs, or per-run MSPEs for repeated schemes.
    pub values: Vec<f64>,
}

/// Seeded partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, "folds", 0));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (j, i) in idx.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    Ok(folds)
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Sum of squared held-out distances per fold.
fn fold_errors<T: Real, S: MetricSpace<T> + Clone>(
    space: &S,
    x: &[Vec<T>],
    y: &[S::Point],
    cfg: &TrainConfig,
    folds: &[Vec<usize>],
    seed: u64,
    run: usize,
) -> Result<Vec<(f64, usize)>> {
    let n = x.len();
    folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            let (tx, ty): (Vec<Vec<T>>, Vec<S::Point>) =
                (0..n).filter(|&i| !in_test[i]).map(|i| (x[i].clone(), y[i].clone())).unzip();
            let fold_cfg = TrainConfig { seed: derive_seed(seed, "cv-fold", (run * folds.len() + f) as u64), ..cfg.clone() };
            let (model, _) = train(space, &tx, &ty, &fold_cfg)?;
            let mut s = 0.0;
            for &i in test {
                let d = space.distance(&model.predict(&x[i])?, &y[i])?.to_f64_lossy();
                s += d * d;
            }
            Ok((s, test.len()))
        })
        .collect()
}

/// Out-of-sample MSPE of `cfg` under the given resampling scheme.
pub fn cross_validate<T: Real, S: MetricSpace<T> + Clone>(
    space: &S,
    x: &[Vec<T>],
    y: &[S::Point],
    cfg: &TrainConfig,
    scheme: CvScheme,
    seed: u64,
) -> Result<CvSummary> {
    let n = x.len();
    let pooled = |errs: &[(f64, usize)]| errs.iter().map(|e| e.0).sum::<f64>() / errs.iter().map(|e| e.1).sum::<usize>() as f64;
    match scheme {
        CvScheme::Loo | CvScheme::Kfold { .. } => {
            let folds = match scheme {
                CvScheme::Loo => {
                    if n < 2 {
                        return Err(invalid("leave-one-out needs at least two rows"));
                    }
                    (0..n).map(|i| vec![i]).collect()
                }
                CvScheme::Kfold { k } => kfold_partition(n, k, seed)?,
                CvScheme::Repeated { .. } => unreachable!(),
            };
            let errs = fold_errors(space, x, y, cfg, &folds, seed, 0)?;
            let values: Vec<f64> = errs.iter().map(|(s, c)| s / *c as f64).collect();
            Ok(CvSummary { scheme, mean: pooled(&errs), sd: sample_sd(&values), values })
        }
        CvScheme::Repeated { k, runs } => {
            if runs == 0 {
                return Err(invalid("repeated cross-validation needs at least one run"));
            }
            let values = (0..runs)
                .map(|r| {
                    let folds = kfold_partition(n, k, derive_seed(seed, "cv-run", r as u64))?;
                    Ok(pooled(&fold_errors(space, x, y, cfg, &folds, seed, r)?))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = values.iter().sum::<f64>() / runs as f64;
            Ok(CvSummary { scheme, mean, sd: sample_sd(&values), values })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lambdas: vec![-0.01, -0.001, 0.0, 0.001, 0.01],
            depths: vec![2, 3, 4, 5, 6],
            widths: vec![8, 16, 32, 64, 128],
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.lambdas.len() * self.depths.len() * self.widths.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda: f64,
    pub depth: usize,
    pub width: usize,
    pub cv_mspe: f64,
    pub cv_sd: f64,
}

/// Index of the lowest CV MSPE; ties go to the smaller width, then the
/// shallower net, then the `λ` closest to zero.
pub fn pick_best(cells: &[GridCell]) -> Option<usize> {
    (0..cells.len()).min_by(|&a, &b| {
        let (ca, cb) = (&cells[a], &cells[b]);
        ca.cv_mspe
            .total_cmp(&cb.cv_mspe)
            .then(ca.width.cmp(&cb.width))
            .then(ca.depth.cmp(&cb.depth))
            .then(ca.lambda.abs().total_cmp(&cb.lambda.abs()))
    })
}

/// k-fold grid search over `λ`, depth and width; returns the winning
/// configuration and the full table in grid order.
pub fn grid_search<T: Real, S: MetricSpace<T> + Clone>(
    space: &S,
    x: &[Vec<T>],
    y: &[S::Point],
    base: &TrainConfig,
    grid: &GridSpec,
    folds: usize,
    seed: u64,
) -> Result<(TrainConfig, Vec<GridCell>)> {
    if grid.cells() == 0 {
        return Err(invalid("empty hyperparameter grid"));
    }
    if folds < 2 {
        return Err(invalid("grid search needs at least two folds"));
    }
    let mut cells = Vec::with_capacity(grid.cells());
    for &lambda in &grid.lambdas {
        for &depth in &grid.depths {
            for &width in &grid.widths {
                let cfg = TrainConfig { lambda, hidden: vec![width; depth], ..base.clone() };
                let s = cross_validate(space, x, y, &cfg, CvScheme::Kfold { k: folds }, seed)?;
                log::info!("grid cell λ={lambda} depth={depth} width={width}: CV MSPE {:.6}", s.mean);
                cells.push(GridCell { lambda, depth, width, cv_mspe: s.mean, cv_sd: s.sd });
            }
        }
    }
    let best = &cells[pick_best(&cells).expect("non-empty grid")];
    let cfg = TrainConfig { lambda: best.lambda, hidden: vec![best.width; best.depth], ..base.clone() };
    Ok((cfg, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{laplacian_from_edges, Network};

    fn cell(lambda: f64, depth: usize, width: usize, cv_mspe: f64) -> GridCell {
        GridCell { lambda, depth, width, cv_mspe, cv_sd: 0.0 }
    }

    #[test]
    fn folds_partition_indices() {
        let folds = kfold_partition(23, 10, 4).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 2 || f.len() == 3));
        assert!(kfold_partition(5, 6, 0).is_err());
    }

    #[test]
    fn tie_breaks() {
        assert_eq!(pick_best(&[cell(0.0, 2, 8, 1.0)]), Some(0));
        let cells = [cell(0.01, 2, 16, 0.5), cell(0.01, 3, 8, 0.5), cell(0.001, 2, 8, 0.5), cell(0.0, 4, 8, 0.5)];
        assert_eq!(pick_best(&cells), Some(2));
        let cells = [cell(-0.01, 2, 8, 0.5), cell(0.001, 2, 8, 0.5)];
        assert_eq!(pick_best(&cells), Some(1));
        assert_eq!(pick_best(&[cell(0.0, 2, 8, 0.7), cell(0.0, 6, 128, 0.6)]), Some(1));
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(GridSpec::default().cells(), 125);
    }

    #[test]
    fn loo_on_constant_response_is_zero() {
        let space = Network::new(2);
        let l = laplacian_from_edges(&[1.5], 2).unwrap();
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![l.clone(), l.clone(), l];
        let cfg = TrainConfig { epochs: 3, hidden: vec![2, 2], eval_every: 1, ..Default::default() };
        let s = cross_validate(&space, &x, &y, &cfg, CvScheme::Loo, 1).unwrap();
        assert!(s.mean < 1e-20 && s.values.len() == 3);
        let s = cross_validate(&space, &x, &y, &cfg, CvScheme::Repeated { k: 3, runs: 4 }, 1).unwrap();
        assert_eq!(s.values.len(), 4);
    }
}
