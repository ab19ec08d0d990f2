//! Seeded simulation scenarios with truth oracles for the conditional
//! Fréchet mean, plus the Monte Carlo benchmark harness.

mod bench;
mod dgp;

pub use bench::{run_benchmark, sensitivity, BenchmarkConfig, BenchmarkReport, MethodReport, Methods, RunRecord, SensitivityRow};
pub use dgp::{
    bartlett_factor, DistributionDgp, NetworkDgp, SpdBwDgp, SpdPowerDgp, NETWORK_NODES, SPD_POWER_DIM,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, E2mError, Result};
use crate::gfr::SignedMean;
use crate::io::{sidecar_path, write_header, write_rows, RowCodec, RowFormat};
use crate::rng::{substream, StreamRng};

/// One simulated response, with the raw sample it was estimated from when
/// the response is only observed indirectly.
#[derive(Clone, Debug)]
pub struct Observation<P> {
    pub point: P,
    pub raw: Option<Vec<f64>>,
}

pub trait Scenario: Send + Sync {
    type Space: SignedMean<f64> + RowCodec<f64> + Clone;

    fn name(&self) -> &'static str;
    fn space(&self) -> Self::Space;
    fn sample_x(&self, rng: &mut StreamRng) -> Result<Vec<f64>>;
    fn sample_y(&self, x: &[f64], rng: &mut StreamRng) -> Result<Observation<Point<Self>>>;
    /// Conditional Fréchet means at `xs`; Monte Carlo oracles draw from `oracle_seed`.
    fn truth(&self, xs: &[Vec<f64>], oracle_seed: u64) -> Result<Vec<Point<Self>>>;
    /// Parameter conventions recorded alongside generated data.
    fn params(&self) -> serde_json::Value;
}

pub type Point<S> = <<S as Scenario>::Space as crate::MetricSpace<f64>>::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    Distribution,
    Network,
    SpdPower,
    SpdBw,
}

impl DgpKind {
    pub const ALL: [DgpKind; 4] = [DgpKind::Distribution, DgpKind::Network, DgpKind::SpdPower, DgpKind::SpdBw];

    pub fn as_str(&self) -> &'static str {
        match self {
            DgpKind::Distribution => "distribution",
            DgpKind::Network => "network",
            DgpKind::SpdPower => "spd-power",
            DgpKind::SpdBw => "spd-bw",
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DgpKind {
    type Err = E2mError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distribution" | "dist" | "wasserstein1d" => Ok(DgpKind::Distribution),
            "network" | "net" => Ok(DgpKind::Network),
            "spd-power" | "spd" | "power" => Ok(DgpKind::SpdPower),
            "spd-bw" | "bw" => Ok(DgpKind::SpdBw),
            other => Err(invalid(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimDataset<P> {
    pub dgp: &'static str,
    pub seed: u64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<P>,
    /// Raw per-unit samples when responses are observed through them.
    pub raw: Option<Vec<Vec<f64>>>,
    pub params: serde_json::Value,
}

impl<P> SimDataset<P> {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `n` units drawn from the scenario; reproducible from `(scenario, n, seed)`.
pub fn generate<S: Scenario>(sc: &S, n: usize, seed: u64) -> Result<SimDataset<Point<S>>> {
    if n == 0 {
        return Err(invalid("cannot generate an empty dataset"));
    }
    let mut rng = substream(seed, "dgp", 0);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut raw = Vec::new();
    for _ in 0..n {
        let xi = sc.sample_x(&mut rng)?;
        let obs = sc.sample_y(&xi, &mut rng)?;
        x.push(xi);
        y.push(obs.point);
        if let Some(r) = obs.raw {
            raw.push(r);
        }
    }
    let raw = (raw.len() == n).then_some(raw);
    Ok(SimDataset { dgp: sc.name(), seed, x, y, raw, params: sc.params() })
}

/// Fresh predictor draws for evaluation.
pub fn test_inputs<S: Scenario>(sc: &S, size: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = substream(seed, "test", 0);
    (0..size).map(|_| sc.sample_x(&mut rng)).collect()
}

/// Writes `X.csv` and `Y.csv` (with its JSON sidecar) into `dir`. Responses
/// observed through raw samples are written in sample form.
pub fn write_dataset<S: Scenario>(sc: &S, data: &SimDataset<Point<S>>, dir: &Path) -> Result<()> {
    let space = sc.space();
    write_rows(&dir.join("X.csv"), &data.x)?;
    let mut header = space.header();
    let y_path = dir.join("Y.csv");
    match &data.raw {
        Some(raw) => {
            header.format = RowFormat::Samples;
            write_rows(&y_path, raw)?;
        }
        None => {
            let rows: Vec<Vec<f64>> = data.y.iter().map(|p| space.encode(p)).collect();
            write_rows(&y_path, &rows)?;
        }
    }
    write_header(&sidecar_path(&y_path), &header)
}

/// Writes `X_test.csv` and `truth.csv` (native row format) into `dir`.
pub fn write_truth<S: Scenario>(sc: &S, x_test: &[Vec<f64>], truth: &[Point<S>], dir: &Path) -> Result<()> {
    let space = sc.space();
    write_rows(&dir.join("X_test.csv"), x_test)?;
    let rows: Vec<Vec<f64>> = truth.iter().map(|p| space.encode(p)).collect();
    let path = dir.join("truth.csv");
    write_rows(&path, &rows)?;
    write_header(&sidecar_path(&path), &space.header())
}
