//! The E2M estimator: a softmax network feeding a weighted Fréchet mean over
//! a fixed anchor set, trained end to end on `d²(μ(w_θ(x)), y) + λH(w_θ(x))`.

mod checkpoint;
mod cv;

pub use checkpoint::{AnchorPayload, ModelCheckpoint, StandardizeRecord, CHECKPOINT_VERSION};
pub use cv::{cross_validate, grid_search, kfold_partition, pick_best, CvScheme, CvSummary, GridCell, GridSpec};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, E2mError, Result};
use crate::geometry::{MetricSpace, WeightVector};
use crate::io::check_predictors;
use crate::nn::{entropy, AdamConfig, AdamState, MlpParams, Mode, ENTROPY_DELTA};
use crate::rng::substream;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub dropout: f64,
    pub lambda: f64,
    pub delta: f64,
    pub hidden: Vec<usize>,
    /// Anchor count; `None` uses every training row.
    pub anchors: Option<usize>,
    pub holdout_frac: f64,
    /// Non-improving holdout evaluations tolerated before stopping.
    pub patience: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch: 32,
            lr: 5e-4,
            dropout: 0.3,
            lambda: 0.0,
            delta: ENTROPY_DELTA,
            hidden: vec![32, 32],
            anchors: None,
            holdout_frac: 0.1,
            patience: 10,
            eval_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.eval_every == 0 {
            return Err(invalid("epochs, batch and eval_every must be at least 1"));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return Err(invalid(format!("holdout fraction {} outside (0, 1)", self.holdout_frac)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if !(self.delta > 0.0) {
            return Err(invalid("entropy offset must be positive"));
        }
        if !self.lambda.is_finite() || !(self.lr > 0.0) {
            return Err(invalid("lambda must be finite and the learning rate positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("at least one hidden layer of positive width is required"));
        }
        if self.anchors == Some(0) {
            return Err(invalid("at least one anchor is required"));
        }
        Ok(())
    }
}

/// Per-column z-scoring fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub sd: Vec<T>,
    pub constant: Vec<bool>,
}

impl<T: Real> Standardizer<T> {
    pub fn fit(rows: &[&[T]]) -> Self {
        let p = rows[0].len();
        let n = T::from_usize_lossy(rows.len());
        let mut mean = vec![T::zero(); p];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); p];
        for r in rows {
            for ((s, &v), &m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant = vec![false; p];
        let sd = var
            .iter()
            .zip(&mean)
            .enumerate()
            .map(|(j, (&s, &m))| {
                let sd = (s / n).sqrt();
                if sd <= T::tol(1e-12) * T::one().max(m.abs()) {
                    constant[j] = true;
                    T::one()
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, sd, constant }
    }

    pub fn identity(p: usize) -> Self {
        Self { mean: vec![T::zero(); p], sd: vec![T::one(); p], constant: vec![false; p] }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.mean).zip(&self.sd).map(|((&v, &m), &s)| (v - m) / s).collect()
    }
}

/// Training split and holdout split after the seeded shuffle.
pub fn split_holdout(n: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let hold = (frac * n as f64).ceil() as usize;
    if n < 2 || hold == 0 || hold >= n {
        return Err(invalid(format!("cannot hold out {hold} of {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, "split", 0));
    let holdout = idx.split_off(n - hold);
    Ok((idx, holdout))
}

/// `m` distinct indices out of `0..n`, sorted; `m = n` gives `0..n`.
pub fn select_anchors(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(invalid(format!("cannot select {m} anchors out of {n} rows")));
    }
    if m == n {
        return Ok((0..n).collect());
    }
    let mut idx = rand::seq::index::sample(&mut substream(seed, "anchors", 0), n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_mspe: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// A trained model.
pub struct E2mModel<T: Real, S: MetricSpace<T>> {
    space: S,
    params: MlpParams<T>,
    anchors: Vec<S::Point>,
    anchor_indices: Vec<usize>,
    prepared: S::Prepared,
    standardizer: Standardizer<T>,
    lambda: f64,
    delta: f64,
    seed: u64,
}

impl<T: Real, S: MetricSpace<T>> E2mModel<T, S> {
    /// Assembles a model from its parts, validating anchors against the head.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        space: S,
        params: MlpParams<T>,
        anchors: Vec<S::Point>,
        anchor_indices: Vec<usize>,
        standardizer: Standardizer<T>,
        lambda: f64,
        delta: f64,
        seed: u64,
    ) -> Result<Self> {
        if anchors.len() != params.output_dim() || anchor_indices.len() != anchors.len() {
            return Err(dim(format!(
                "{} anchors, {} indices, head of width {}",
                anchors.len(),
                anchor_indices.len(),
                params.output_dim()
            )));
        }
        if standardizer.mean.len() != params.input_dim() || standardizer.sd.len() != params.input_dim() {
            return Err(dim("standardization constants do not match the input layer"));
        }
        if standardizer.sd.iter().any(|s| !(*s > T::zero())) {
            return Err(invalid("standardization sd must be positive"));
        }
        for (i, a) in anchors.iter().enumerate() {
            space.validate(a).map_err(|e| E2mError::Validation { what: "anchor", index: i, reason: e.to_string() })?;
        }
        let prepared = space.prepare_anchors(&anchors)?;
        Ok(Self { space, params, anchors, anchor_indices, prepared, standardizer, lambda, delta, seed })
    }

    pub fn space(&self) -> &S {
        &self.space
    }

    pub fn params(&self) -> &MlpParams<T> {
        &self.params
    }

    pub fn anchors(&self) -> &[S::Point] {
        &self.anchors
    }

    pub fn anchor_indices(&self) -> &[usize] {
        &self.anchor_indices
    }

    pub fn standardizer(&self) -> &Standardizer<T> {
        &self.standardizer
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn predict_weights(&self, x: &[T]) -> Result<WeightVector<T>> {
        if x.len() != self.params.input_dim() {
            return Err(dim(format!("input has {} features, model expects {}", x.len(), self.params.input_dim())));
        }
        self.params.weights_eval(&self.standardizer.apply(x))
    }

    pub fn predict(&self, x: &[T]) -> Result<S::Point> {
        let w = self.predict_weights(x)?;
        self.space.mean_prepared(&self.prepared, w.as_slice())
    }

    pub fn predict_many(&self, xs: &[Vec<T>]) -> Result<Vec<S::Point>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

/// Mean squared distance between paired points.
pub fn mspe<T: Real, S: MetricSpace<T>>(space: &S, preds: &[S::Point], refs: &[S::Point]) -> Result<T> {
    if preds.len() != refs.len() || preds.is_empty() {
        return Err(dim(format!("{} predictions vs {} references", preds.len(), refs.len())));
    }
    let mut s = T::zero();
    for (p, r) in preds.iter().zip(refs) {
        let d = space.distance(p, r)?;
        s += d * d;
    }
    Ok(s / T::from_usize_lossy(preds.len()))
}

/// Fits the model; see [`TrainConfig`] for the protocol knobs.
pub fn train<T: Real, S: MetricSpace<T> + Clone>(
    space: &S,
    x: &[Vec<T>],
    y: &[S::Point],
    cfg: &TrainConfig,
) -> Result<(E2mModel<T, S>, TrainHistory)> {
    cfg.validate()?;
    let n = x.len();
    if n != y.len() {
        return Err(dim(format!("{n} predictor rows vs {} responses", y.len())));
    }
    if n < 2 {
        return Err(invalid("training needs at least two observations"));
    }
    let p = check_predictors(x)?;
    for (i, yi) in y.iter().enumerate() {
        space.validate(yi).map_err(|e| E2mError::Validation { what: "response", index: i, reason: e.to_string() })?;
    }
    if let Some(m) = cfg.anchors {
        if m > n {
            return Err(invalid(format!("{m} anchors requested but only {n} observations")));
        }
    }

    let (train_idx, hold_idx) = split_holdout(n, cfg.holdout_frac, cfg.seed)?;
    let rows: Vec<&[T]> = train_idx.iter().map(|&i| x[i].as_slice()).collect();
    let standardizer = Standardizer::fit(&rows);
    let z: Vec<Vec<T>> = x.iter().map(|r| standardizer.apply(r)).collect();

    let n_train = train_idx.len();
    let m = match cfg.anchors {
        Some(m) if m > n_train => {
            log::warn!("{m} anchors requested but the training split has {n_train} rows; using all of them");
            n_train
        }
        Some(m) => m,
        None => n_train,
    };
    let anchor_idx: Vec<usize> = select_anchors(n_train, m, cfg.seed)?.into_iter().map(|k| train_idx[k]).collect();
    let anchors: Vec<S::Point> = anchor_idx.iter().map(|&i| y[i].clone()).collect();
    let prepared = space.prepare_anchors(&anchors)?;
    let targets: Vec<S::Target> = y.iter().map(|yi| space.prepare_target(yi)).collect::<Result<_>>()?;

    let mut dims = Vec::with_capacity(cfg.hidden.len() + 2);
    dims.push(p);
    dims.extend_from_slice(&cfg.hidden);
    dims.push(m);
    let mut params = MlpParams::<T>::init(&dims, &mut substream(cfg.seed, "init", 0))?;
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), params.len())?;

    let lambda = T::lit(cfg.lambda);
    let delta = T::lit(cfg.delta);
    let mut grads = vec![T::zero(); params.len()];
    let mut gw = vec![T::zero(); m];
    let mut order = train_idx.clone();
    let mut history = TrainHistory::default();
    let mut best: Option<(T, MlpParams<T>)> = None;
    let mut stale = 0usize;

    let holdout_mspe = |params: &MlpParams<T>| -> Result<T> {
        let mut s = T::zero();
        for &i in &hold_idx {
            let w = params.weights_eval(&z[i])?;
            s += space.loss(&prepared, w.as_slice(), &targets[i])?;
        }
        Ok(s / T::from_usize_lossy(hold_idx.len()))
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut substream(cfg.seed, "shuffle", epoch as u64));
        let mut dropout_rng = substream(cfg.seed, "dropout", epoch as u64);
        let mut epoch_loss = T::zero();
        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            grads.iter_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                let (w, cache) = params.forward(&z[i], Mode::Train, cfg.dropout, &mut dropout_rng)?;
                let w = w.as_slice();
                let mut loss = space.loss_and_grad(&prepared, w, &targets[i], &mut gw)?;
                if cfg.lambda != 0.0 {
                    loss += lambda * entropy(w, delta);
                    for (g, &wi) in gw.iter_mut().zip(w) {
                        *g += lambda * (-(wi + delta).ln() - wi / (wi + delta));
                    }
                }
                if !loss.is_finite() {
                    return Err(E2mError::NonFinite { epoch, batch: b, detail: format!("loss {loss} at row {i}") });
                }
                epoch_loss += loss;
                params.backprop_into(&cache, &gw, &mut grads)?;
            }
            let scale = T::one() / T::from_usize_lossy(batch.len());
            grads.iter_mut().for_each(|g| *g *= scale);
            adam.step(params.as_mut_slice(), &grads)
                .map_err(|e| E2mError::NonFinite { epoch, batch: b, detail: e.to_string() })?;
        }
        history.epochs_run = epoch;

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let h = holdout_mspe(&params)?;
            if !h.is_finite() {
                return Err(E2mError::NonFinite { epoch, batch: 0, detail: "holdout MSPE".into() });
            }
            let train_loss = epoch_loss / T::from_usize_lossy(n_train);
            history.records.push(EvalRecord { epoch, train_loss: train_loss.to_f64_lossy(), holdout_mspe: h.to_f64_lossy() });
            log::debug!("epoch {epoch}: train loss {train_loss:.6}, holdout MSPE {h:.6}");
            if best.as_ref().is_none_or(|(b, _)| h < *b) {
                best = Some((h, params.clone()));
                history.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }

    let (_, best_params) = best.expect("at least one evaluation runs");
    let model = E2mModel {
        space: space.clone(),
        params: best_params,
        anchors,
        anchor_indices: anchor_idx,
        prepared,
        standardizer,
        lambda: cfg.lambda,
        delta: cfg.delta,
        seed: cfg.seed,
    };
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{gaussian_quantiles, laplacian_from_edges, Network, ProbGrid, Wasserstein1d};
    use rand::Rng;

    fn small_cfg() -> TrainConfig {
        TrainConfig { epochs: 30, batch: 8, hidden: vec![8, 8], eval_every: 5, patience: 100, seed: 7, ..Default::default() }
    }

    fn dist_data(n: usize, seed: u64) -> (Wasserstein1d, Vec<Vec<f64>>, Vec<crate::space::QuantileVec<f64>>) {
        let space = Wasserstein1d::new(ProbGrid::new(20).unwrap());
        let mut rng = substream(seed, "test-data", 0);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y = x.iter().map(|r| gaussian_quantiles(2.0 * r[0], 1.0 + r[1], space.grid).unwrap()).collect();
        (space, x, y)
    }

    #[test]
    fn split_and_anchor_selection() {
        let (tr, ho) = split_holdout(100, 0.1, 3).unwrap();
        assert_eq!((tr.len(), ho.len()), (90, 10));
        let mut all: Vec<usize> = tr.iter().chain(&ho).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(select_anchors(5, 5, 1).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(select_anchors(50, 7, 1).unwrap(), select_anchors(50, 7, 1).unwrap());
        let big = select_anchors(10_000, 1000, 2).unwrap();
        let mut d = big.clone();
        d.dedup();
        assert_eq!(d.len(), 1000);
        assert!(select_anchors(3, 4, 0).is_err());
    }

    #[test]
    fn standardizer_flags_constant_columns() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.sd, vec![1.0, 1.0]);
        assert_eq!(s.constant, vec![false, true]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { hidden: vec![], ..Default::default() }.validate().is_err());
        assert!(TrainConfig { holdout_frac: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let (space, x, y) = dist_data(60, 1);
        let (a, ha) = train(&space, &x, &y, &small_cfg()).unwrap();
        let (b, hb) = train(&space, &x, &y, &small_cfg()).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ha, hb);
        assert_eq!(a.predict(&x[0]).unwrap(), b.predict(&x[0]).unwrap());
    }

    #[test]
    fn training_reduces_holdout_error() {
        let (space, x, y) = dist_data(200, 2);
        let cfg = TrainConfig { epochs: 200, lr: 5e-3, ..small_cfg() };
        let (_, h) = train(&space, &x, &y, &cfg).unwrap();
        let first = h.records.first().unwrap().holdout_mspe;
        let best = h.records.iter().map(|r| r.holdout_mspe).fold(f64::INFINITY, f64::min);
        assert!(best < 0.5 * first, "{first} → {best}");
    }

    #[test]
    fn early_stopping_keeps_best_parameters() {
        let (space, x, y) = dist_data(80, 3);
        let cfg = TrainConfig { epochs: 200, lr: 2e-2, patience: 2, ..small_cfg() };
        let (model, h) = train(&space, &x, &y, &cfg).unwrap();
        let best = h.records.iter().find(|r| r.epoch == h.best_epoch).unwrap();
        assert!(h.records.iter().all(|r| r.holdout_mspe >= best.holdout_mspe));
        // Recompute the holdout MSPE of the returned parameters.
        let (_, hold) = split_holdout(80, 0.1, cfg.seed).unwrap();
        let preds: Vec<_> = hold.iter().map(|&i| model.predict(&x[i]).unwrap()).collect();
        let refs: Vec<_> = hold.iter().map(|&i| y[i].clone()).collect();
        let got = mspe(&space, &preds, &refs).unwrap();
        assert!((got - best.holdout_mspe).abs() < 1e-9 * best.holdout_mspe.max(1.0));
    }

    #[test]
    fn constant_response_is_fit_exactly() {
        let space = Network::new(3);
        let l = laplacian_from_edges(&[1.0, 2.0, 0.5], 3).unwrap();
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = vec![l.clone(); 20];
        let (model, h) = train(&space, &x, &y, &small_cfg()).unwrap();
        assert!(h.records.last().unwrap().train_loss < 1e-8);
        assert!(crate::space::frobenius_distance(&model.predict(&[3.5, -1.0]).unwrap(), &l).unwrap() < 1e-8);
    }

    #[test]
    fn single_anchor_loss_is_fixed() {
        let (space, x, y) = dist_data(30, 4);
        let cfg = TrainConfig { anchors: Some(1), epochs: 5, eval_every: 1, dropout: 0.0, ..small_cfg() };
        let (model, h) = train(&space, &x, &y, &cfg).unwrap();
        let a = &model.anchors()[0];
        let (tr, _) = split_holdout(30, 0.1, cfg.seed).unwrap();
        let want = tr.iter().map(|&i| crate::space::w2_distance(a, &y[i]).unwrap().powi(2)).sum::<f64>() / tr.len() as f64;
        for r in &h.records {
            assert!((r.train_loss - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (space, mut x, y) = dist_data(10, 5);
        assert!(train(&space, &x[..9], &y, &small_cfg()).is_err());
        x[3][1] = f64::NAN;
        assert!(matches!(train(&space, &x, &y, &small_cfg()), Err(E2mError::Validation { index: 3, .. })));
        let (space, x, y) = dist_data(10, 5);
        assert!(train(&space, &x, &y, &TrainConfig { anchors: Some(11), ..small_cfg() }).is_err());
    }

    #[test]
    fn mspe_examples() {
        let space = Network::new(2);
        let a = laplacian_from_edges(&[1.0], 2).unwrap();
        let b = laplacian_from_edges(&[2.0f64.sqrt().recip() + 1.0], 2).unwrap();
        assert_eq!(mspe(&space, &[a.clone()], &[a.clone()]).unwrap(), 0.0);
        let d = crate::space::frobenius_distance(&a, &b).unwrap();
        assert!((mspe(&space, &[a.clone()], &[b]).unwrap() - d * d).abs() < 1e-15);
        assert!(mspe(&space, &[a.clone()], &[]).is_err());
    }
}
