mod audit;
mod fit;
mod sim;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use e2m::TrainConfig;
use serde::Serialize;

use crate::args::{Cli, Command, TrainFlags};
use crate::manifest::{Manifest, Outputs};

/// What a command hands back to the runner.
pub struct Outcome {
    pub manifest: PathBuf,
    pub resolved: serde_json::Value,
    /// Set when the run completed but its checks failed.
    pub failure: Option<String>,
}

impl Outcome {
    fn new(manifest: PathBuf, resolved: serde_json::Value) -> Self {
        Self { manifest, resolved, failure: None }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Rerun(a) = &cli.command {
        let m = Manifest::load(&a.manifest)?;
        if let Command::Rerun(_) = m.invocation.command {
            bail!("manifest {} records another rerun", a.manifest.display());
        }
        log::info!("replaying {} with seed {}", a.manifest.display(), m.seed);
        return run(&m.invocation);
    }
    let seed = cli.global.seed;
    let mut out = Outputs::default();
    let outcome = match &cli.command {
        Command::Simulate(a) => sim::simulate(a, seed, &mut out)?,
        Command::Benchmark(a) => sim::benchmark(a, seed, &mut out)?,
        Command::Sensitivity(a) => sim::sensitivity(a, seed, &mut out)?,
        Command::Train(a) => fit::train(a, seed, &mut out)?,
        Command::Predict(a) => fit::predict(a, &mut out)?,
        Command::Evaluate(a) => fit::evaluate(a, &mut out)?,
        Command::Gridsearch(a) => fit::gridsearch(a, seed, &mut out)?,
        Command::Cv(a) => fit::cv(a, seed, &mut out)?,
        Command::BaselineGfr(a) => fit::baseline_gfr(a, &mut out)?,
        Command::Audit(a) => audit::audit(a, seed, &mut out)?,
        Command::Rerun(_) => unreachable!("handled above"),
    };
    let path = cli.global.manifest.clone().unwrap_or(outcome.manifest);
    out.file(&path)?;
    let manifest = Manifest::new(cli, outcome.resolved, out.files().to_vec());
    write_text(&path, &serde_json::to_string_pretty(&manifest)?)?;
    out.commit();
    match outcome.failure {
        Some(f) => bail!(f),
        None => Ok(()),
    }
}

impl TrainFlags {
    /// Overrides `base` with every flag that was given.
    pub fn apply(&self, base: TrainConfig) -> TrainConfig {
        let mut c = base;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(epochs, batch, lr, dropout, lambda, holdout_frac, patience, eval_every);
        if let Some(h) = &self.hidden {
            c.hidden = h.clone();
        }
        if self.anchors.is_some() {
            c.anchors = self.anchors;
        }
        c
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(out: &mut Outputs, path: &Path, value: &T) -> Result<()> {
    out.file(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn write_table(out: &mut Outputs, path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    out.file(path)?;
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

/// `out` with a `.csv` extension, refusing to clobber `out` itself.
fn csv_beside(out: &Path) -> Result<PathBuf> {
    let p = out.with_extension("csv");
    if p == out {
        bail!("report path {} must not end in .csv", out.display());
    }
    Ok(p)
}

/// Left-aligned text table for the terminal.
fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (c, w) in cells.zip(&widths) {
            let _ = write!(s, "{c:<w$}  ");
        }
        s.trim_end().to_string()
    };
    println!("{}", line(&mut header.iter().copied()));
    println!("{}", line(&mut widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str)));
    for r in rows {
        println!("{}", line(&mut r.iter().map(String::as_str)));
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}
