use anyhow::Result;
use e2m::rng::derive_seed;
use e2m::simgen::{self, generate, test_inputs, write_dataset, write_truth, BenchmarkConfig, DgpKind, Methods, Scenario};
use e2m::TrainConfig;
use serde_json::json;

use super::{csv_beside, num, opt_num, print_table, write_json, write_table, Outcome};
use crate::args::{BenchmarkArgs, SensitivityArgs, SimulateArgs};
use crate::dispatch::with_scenario;
use crate::manifest::{manifest_for_file, Outputs};

pub fn simulate(a: &SimulateArgs, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let kind: DgpKind = a.dgp.parse()?;
    out.dir(&a.out)?;
    let resolved = with_scenario!(kind, a.oracle_draws, sc => simulate_in(&sc, a, seed, out)?);
    Ok(Outcome::new(a.out.join("manifest.json"), resolved))
}

fn simulate_in<S: Scenario>(sc: &S, a: &SimulateArgs, seed: u64, out: &mut Outputs) -> Result<serde_json::Value> {
    let data = generate(sc, a.n, seed)?;
    for f in ["X.csv", "Y.csv", "Y.json"] {
        out.file(&a.out.join(f))?;
    }
    write_dataset(sc, &data, &a.out)?;
    let oracle_seed = derive_seed(seed, "oracle", 0);
    if a.test_size > 0 {
        let x_test = test_inputs(sc, a.test_size, seed)?;
        let truth = sc.truth(&x_test, oracle_seed)?;
        for f in ["X_test.csv", "truth.csv", "truth.json"] {
            out.file(&a.out.join(f))?;
        }
        write_truth(sc, &x_test, &truth, &a.out)?;
    }
    print_table(
        &["dgp", "n", "test", "seed", "dir"],
        &[vec![sc.name().into(), a.n.to_string(), a.test_size.to_string(), seed.to_string(), a.out.display().to_string()]],
    );
    Ok(json!({
        "dgp": sc.name(),
        "n": a.n,
        "test_size": a.test_size,
        "seed": seed,
        "oracle_seed": oracle_seed,
        "raw_samples": data.raw.is_some(),
        "params": sc.params(),
    }))
}

fn methods(names: &[String]) -> Methods {
    Methods { e2m: names.iter().any(|m| m == "e2m"), gfr: names.iter().any(|m| m == "gfr") }
}

pub fn benchmark(a: &BenchmarkArgs, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let kind: DgpKind = a.dgp.parse()?;
    let mut cfg = BenchmarkConfig::new(a.n, a.runs, seed);
    cfg.test_size = a.test_size;
    cfg.methods = methods(&a.methods);
    cfg.train = a.train.apply(TrainConfig::default());
    let report = with_scenario!(kind, a.oracle_draws, sc => simgen::run_benchmark(&sc, &cfg)?);
    write_json(out, &a.out, &report)?;
    let runs: Vec<Vec<String>> = report
        .records
        .iter()
        .map(|r| {
            vec![
                r.run.to_string(),
                r.seed.to_string(),
                r.oracle_seed.to_string(),
                opt_num(r.e2m_mspe),
                opt_num(r.gfr_mspe),
                r.epochs_run.map_or("-".into(), |e| e.to_string()),
            ]
        })
        .collect();
    write_table(out, &csv_beside(&a.out)?, &["run", "seed", "oracle_seed", "e2m_mspe", "gfr_mspe", "epochs"], &runs)?;
    let rows: Vec<Vec<String>> = [("E2M", &report.e2m), ("GFR", &report.gfr)]
        .into_iter()
        .filter_map(|(name, r)| r.as_ref().map(|r| vec![name.into(), num(r.mean), num(r.sd), r.per_run.len().to_string()]))
        .collect();
    println!("{} n={} runs={}", report.dgp, a.n, a.runs);
    print_table(&["method", "AMSPE", "sd", "runs"], &rows);
    Ok(Outcome::new(manifest_for_file(&a.out), serde_json::to_value(&cfg)?))
}

pub fn sensitivity(a: &SensitivityArgs, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let kind: DgpKind = a.space.parse()?;
    let mut cfg = BenchmarkConfig::new(a.n, a.runs, seed);
    cfg.test_size = a.test_size;
    cfg.train = a.train.apply(TrainConfig { hidden: vec![8, 8], ..TrainConfig::default() });
    let rows = with_scenario!(kind, a.oracle_draws, sc => simgen::sensitivity(&sc, &cfg, &a.lambdas)?);
    write_json(out, &a.out, &json!({ "dgp": kind.as_str(), "config": cfg, "rows": rows }))?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.lambda.to_string(), num(r.report.mean), num(r.report.sd)])
        .collect();
    write_table(out, &csv_beside(&a.out)?, &["lambda", "amspe", "sd"], &table)?;
    println!("{} n={} runs={} hidden={:?}", kind, a.n, a.runs, cfg.train.hidden);
    print_table(&["lambda", "AMSPE", "sd"], &table);
    Ok(Outcome::new(manifest_for_file(&a.out), serde_json::to_value(&cfg)?))
}
