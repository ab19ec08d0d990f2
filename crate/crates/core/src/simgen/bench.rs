use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gfr::GfrModel;
use crate::model::{mspe, train, TrainConfig};
use crate::rng::derive_seed;

use super::{generate, test_inputs, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Methods {
    pub e2m: bool,
    pub gfr: bool,
}

impl Default for Methods {
    fn default() -> Self {
        Self { e2m: true, gfr: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n: usize,
    pub runs: usize,
    pub test_size: usize,
    pub train: TrainConfig,
    pub methods: Methods,
    pub seed: u64,
}

impl BenchmarkConfig {
    pub fn new(n: usize, runs: usize, seed: u64) -> Self {
        Self { n, runs, test_size: 200, train: TrainConfig::default(), methods: Methods::default(), seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub per_run: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over runs (0 for a single run).
    pub sd: f64,
}

impl MethodReport {
    pub fn from_runs(per_run: Vec<f64>) -> Self {
        let k = per_run.len() as f64;
        let mean = per_run.iter().sum::<f64>() / k;
        let sd = if per_run.len() > 1 {
            (per_run.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { per_run, mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub oracle_seed: u64,
    pub e2m_mspe: Option<f64>,
    pub gfr_mspe: Option<f64>,
    pub epochs_run: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dgp: String,
    pub config: BenchmarkConfig,
    pub params: serde_json::Value,
    pub e2m: Option<MethodReport>,
    pub gfr: Option<MethodReport>,
    pub records: Vec<RunRecord>,
}

fn one_run<S: Scenario>(sc: &S, cfg: &BenchmarkConfig, run: usize) -> Result<RunRecord> {
    let seed = derive_seed(cfg.seed, "run", run as u64);
    let oracle_seed = derive_seed(seed, "oracle", 0);
    let data = generate(sc, cfg.n, derive_seed(seed, "dgp", 0))?;
    let x_test = test_inputs(sc, cfg.test_size, derive_seed(seed, "test", 0))?;
    let truth = sc.truth(&x_test, oracle_seed)?;
    let space = sc.space();
    let mut rec = RunRecord { run, seed, oracle_seed, e2m_mspe: None, gfr_mspe: None, epochs_run: None };
    if cfg.methods.e2m {
        let tc = TrainConfig { seed: derive_seed(seed, "train", 0), ..cfg.train.clone() };
        let (model, hist) = train(&space, &data.x, &data.y, &tc)?;
        let preds = model.predict_many(&x_test)?;
        rec.e2m_mspe = Some(mspe(&space, &preds, &truth)?);
        rec.epochs_run = Some(hist.epochs_run);
    }
    if cfg.methods.gfr {
        let model = GfrModel::fit(space.clone(), &data.x, &data.y)?;
        let preds = model.predict_many(&x_test)?;
        rec.gfr_mspe = Some(mspe(&space, &preds, &truth)?);
    }
    log::info!(
        "{} run {run}: E2M {:?}, GFR {:?}, epochs {:?}",
        sc.name(),
        rec.e2m_mspe,
        rec.gfr_mspe,
        rec.epochs_run
    );
    Ok(rec)
}

/// Monte Carlo AMSPE against the truth oracle. Each run draws a fresh
/// training set and test inputs from seeds derived from the master seed.
pub fn run_benchmark<S: Scenario>(sc: &S, cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.runs == 0 {
        return Err(invalid("a benchmark needs at least one run"));
    }
    if cfg.test_size == 0 {
        return Err(invalid("a benchmark needs at least one test point"));
    }
    let records: Vec<RunRecord> = (0..cfg.runs).into_par_iter().map(|r| one_run(sc, cfg, r)).collect::<Result<_>>()?;
    let collect = |f: fn(&RunRecord) -> Option<f64>| {
        let v: Option<Vec<f64>> = records.iter().map(f).collect();
        v.map(MethodReport::from_runs)
    };
    Ok(BenchmarkReport {
        dgp: sc.name().to_string(),
        config: cfg.clone(),
        params: sc.params(),
        e2m: collect(|r| r.e2m_mspe),
        gfr: collect(|r| r.gfr_mspe),
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub lambda: f64,
    pub report: MethodReport,
}

/// E2M AMSPE across `lambdas`, reusing the same datasets for every value.
pub fn sensitivity<S: Scenario>(sc: &S, base: &BenchmarkConfig, lambdas: &[f64]) -> Result<Vec<SensitivityRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = BenchmarkConfig {
                train: TrainConfig { lambda, ..base.train.clone() },
                methods: Methods { e2m: true, gfr: false },
                ..base.clone()
            };
            let rep = run_benchmark(sc, &cfg)?;
            Ok(SensitivityRow { lambda, report: rep.e2m.expect("E2M enabled") })
        })
        .collect()
}
