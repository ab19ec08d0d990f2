use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use e2m::io::{sidecar_path, write_header, write_rows, DataHeader, RowCodec};
use e2m::model::{cross_validate, grid_search, mspe, CvScheme, GridSpec, ModelCheckpoint};
use e2m::{GfrModel, TrainConfig};
use serde_json::json;

use super::{csv_beside, num, print_table, write_json, write_table, write_text, Outcome};
use crate::args::{CvArgs, EvaluateArgs, GfrArgs, GridArgs, PredictArgs, SpaceArgs, TrainArgs};
use crate::data::{read_predictors, read_responses};
use crate::dispatch::{with_space, CliSpace};
use crate::manifest::{manifest_for_file, sibling, Outputs};

fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelCheckpoint::from_json(&text).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Writes points in native rows with a sidecar header.
fn write_points<S: CliSpace>(out: &mut Outputs, space: &S, path: &Path, points: &[S::Point]) -> Result<()> {
    let side = sidecar_path(path);
    if side == path {
        bail!("output {} must not end in .json", path.display());
    }
    out.file(path)?;
    out.file(&side)?;
    let rows: Vec<Vec<f64>> = points.iter().map(|p| space.encode(p)).collect();
    write_rows(path, &rows)?;
    write_header(&side, &space.header())?;
    Ok(())
}

pub fn train(a: &TrainArgs, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let x = read_predictors(&a.x)?;
    let (h, rows) = read_responses(&a.y, &a.space, None)?;
    let cfg = TrainConfig { seed, ..a.train.apply(TrainConfig::default()) };
    let summary = with_space!(h, space => train_in(&space, &h, &x, &rows, &cfg, &a.out, out)?);
    Ok(Outcome::new(manifest_for_file(&a.out), json!({ "header": h, "train": cfg, "summary": summary })))
}

fn train_in<S: CliSpace>(
    space: &S,
    h: &DataHeader,
    x: &[Vec<f64>],
    rows: &[Vec<f64>],
    cfg: &TrainConfig,
    path: &Path,
    out: &mut Outputs,
) -> Result<serde_json::Value> {
    let y = space.decode_rows(rows, h.format)?;
    let (model, hist) = e2m::train(space, x, &y, cfg)?;
    out.file(path)?;
    write_text(path, &ModelCheckpoint::from_model(&model).to_json()?)?;
    let curve: Vec<Vec<String>> = hist
        .records
        .iter()
        .map(|r| vec![r.epoch.to_string(), r.train_loss.to_string(), r.holdout_mspe.to_string()])
        .collect();
    write_table(out, &sibling(path, "history.csv"), &["epoch", "train_loss", "holdout_mspe"], &curve)?;
    let train_mspe = mspe(space, &model.predict_many(x)?, &y)?;
    let best = hist.records.iter().find(|r| r.epoch == hist.best_epoch).map(|r| r.holdout_mspe);
    let summary = json!({
        "n": x.len(),
        "anchors": model.anchors().len(),
        "epochs_run": hist.epochs_run,
        "best_epoch": hist.best_epoch,
        "stopped_early": hist.stopped_early,
        "best_holdout_mspe": best,
        "train_mspe": train_mspe,
    });
    write_json(out, &sibling(path, "report.json"), &json!({ "space": h, "config": cfg, "summary": summary }))?;
    print_table(
        &["space", "n", "anchors", "epochs", "best epoch", "holdout MSPE", "train MSPE"],
        &[vec![
            space.id().to_string(),
            x.len().to_string(),
            model.anchors().len().to_string(),
            hist.epochs_run.to_string(),
            hist.best_epoch.to_string(),
            best.map_or("-".into(), num),
            num(train_mspe),
        ]],
    );
    Ok(summary)
}

pub fn predict(a: &PredictArgs, out: &mut Outputs) -> Result<Outcome> {
    let ck = load_checkpoint(&a.model)?;
    let x = read_predictors(&a.x)?;
    with_space!(ck.anchors.header, space => predict_in(&space, &ck, &x, a, out)?);
    Ok(Outcome::new(manifest_for_file(&a.out), json!({ "space": ck.space, "rows": x.len() })))
}

fn predict_in<S: CliSpace>(_: &S, ck: &ModelCheckpoint, x: &[Vec<f64>], a: &PredictArgs, out: &mut Outputs) -> Result<()> {
    let model = ck.into_model::<f64, S>()?;
    let preds = model.predict_many(x)?;
    write_points(out, model.space(), &a.out, &preds)?;
    if let Some(wp) = &a.weights {
        let w = x
            .iter()
            .map(|xi| Ok(model.predict_weights(xi)?.as_slice().to_vec()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        out.file(wp)?;
        write_rows(wp, &w)?;
    }
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, out: &mut Outputs) -> Result<Outcome> {
    let ck = load_checkpoint(&a.model)?;
    let x = read_predictors(&a.x)?;
    let (mode, refs) = match (&a.truth, &a.y) {
        (Some(t), _) => ("truth", t),
        (None, Some(y)) => ("observed", y),
        (None, None) => bail!("evaluate needs --truth or --y"),
    };
    let (h, rows) = read_responses(refs, &a.space, Some(&ck.anchors.header))?;
    if h.space != ck.space {
        bail!("{} holds {} rows but the model is for {}", refs.display(), h.space, ck.space);
    }
    let (n, score) = with_space!(ck.anchors.header, space => evaluate_in(&space, &ck, &x, &h, &rows, a, out)?);
    write_json(out, &a.out, &json!({ "mode": mode, "n": n, "mspe": score, "model": a.model, "reference": refs }))?;
    print_table(&["mode", "n", "MSPE"], &[vec![mode.into(), n.to_string(), num(score)]]);
    Ok(Outcome::new(manifest_for_file(&a.out), json!({ "mode": mode, "header": h })))
}

fn evaluate_in<S: CliSpace>(
    _: &S,
    ck: &ModelCheckpoint,
    x: &[Vec<f64>],
    h: &DataHeader,
    rows: &[Vec<f64>],
    a: &EvaluateArgs,
    out: &mut Outputs,
) -> Result<(usize, f64)> {
    let model = ck.into_model::<f64, S>()?;
    let space = model.space();
    let refs = space.decode_rows(rows, h.format)?;
    if refs.len() != x.len() {
        bail!("{} predictor rows but {} reference rows", x.len(), refs.len());
    }
    let preds = model.predict_many(x)?;
    let sq = preds
        .iter()
        .zip(&refs)
        .map(|(p, r)| Ok(space.distance(p, r)?.powi(2)))
        .collect::<Result<Vec<f64>>>()?;
    let table: Vec<Vec<String>> = sq.iter().enumerate().map(|(i, d)| vec![i.to_string(), d.to_string()]).collect();
    write_table(out, &csv_beside(&a.out)?, &["row", "sq_distance"], &table)?;
    Ok((sq.len(), sq.iter().sum::<f64>() / sq.len() as f64))
}

fn base_config(flags: &crate::args::TrainFlags, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..flags.apply(TrainConfig::default()) }
}

pub fn gridsearch(a: &GridArgs, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let x = read_predictors(&a.x)?;
    let (h, rows) = read_responses(&a.y, &a.space, None)?;
    let d = GridSpec::default();
    let grid = GridSpec {
        lambdas: a.lambdas.clone().unwrap_or(d.lambdas),
        depths: a.depths.clone().unwrap_or(d.depths),
        widths: a.widths.clone().unwrap_or(d.widths),
    };
    let base = base_config(&a.train, seed);
    let (best, cells) = with_space!(h, space => {
        let y = space.decode_rows(&rows, h.format)?;
        grid_search(&space, &x, &y, &base, &grid, a.folds, seed)?
    });
    write_json(out, &a.out, &json!({ "grid": grid, "folds": a.folds, "best": best, "cells": cells }))?;
    let table: Vec<Vec<String>> = cells
        .iter()
        .map(|c| vec![c.lambda.to_string(), c.depth.to_string(), c.width.to_string(), c.cv_mspe.to_string(), c.cv_sd.to_string()])
        .collect();
    write_table(out, &csv_beside(&a.out)?, &["lambda", "depth", "width", "cv_mspe", "cv_sd"], &table)?;
    print_table(&["lambda", "depth", "width", "CV MSPE", "sd"], &table);
    println!("best: lambda={} hidden={:?}", best.lambda, best.hidden);
    Ok(Outcome::new(manifest_for_file(&a.out), json!({ "header": h, "base": base, "grid": grid, "best": best })))
}

pub fn cv(a: &CvArgs, seed: u64, out: &mut Outputs) -> Result<Outcome> {
    let x = read_predictors(&a.x)?;
    let (h, rows) = read_responses(&a.y, &a.space, None)?;
    let scheme = match a.scheme.as_str() {
        "loo" => CvScheme::Loo,
        "kfold" => CvScheme::Kfold { k: a.k },
        _ => CvScheme::Repeated { k: a.k, runs: a.repeats },
    };
    let cfg = base_config(&a.train, seed);
    let summary = with_space!(h, space => {
        let y = space.decode_rows(&rows, h.format)?;
        cross_validate(&space, &x, &y, &cfg, scheme, seed)?
    });
    write_json(out, &a.out, &json!({ "config": cfg, "summary": summary }))?;
    print_table(
        &["scheme", "MSPE", "sd", "parts"],
        &[vec![a.scheme.clone(), num(summary.mean), num(summary.sd), summary.values.len().to_string()]],
    );
    Ok(Outcome::new(manifest_for_file(&a.out), json!({ "header": h, "config": cfg, "scheme": scheme })))
}

pub fn baseline_gfr(a: &GfrArgs, out: &mut Outputs) -> Result<Outcome> {
    let x = read_predictors(&a.x)?;
    let (h, rows) = read_responses(&a.y, &a.space, None)?;
    let x_test = read_predictors(&a.x_test)?;
    let truth = match &a.truth {
        Some(t) => Some(read_responses(t, &SpaceArgs::default(), Some(&h))?),
        None => None,
    };
    let summary = with_space!(h, space => gfr_in(&space, &h, &x, &rows, &x_test, truth.as_ref(), a, out)?);
    write_json(out, &sibling(&a.out, "report.json"), &summary)?;
    Ok(Outcome::new(manifest_for_file(&a.out), json!({ "header": h, "summary": summary })))
}

#[allow(clippy::too_many_arguments)]
fn gfr_in<S: CliSpace>(
    space: &S,
    h: &DataHeader,
    x: &[Vec<f64>],
    rows: &[Vec<f64>],
    x_test: &[Vec<f64>],
    truth: Option<&(DataHeader, Vec<Vec<f64>>)>,
    a: &GfrArgs,
    out: &mut Outputs,
) -> Result<serde_json::Value> {
    let y = space.decode_rows(rows, h.format)?;
    let model = GfrModel::fit(space.clone(), x, &y)?;
    let preds = model.predict_many(x_test)?;
    write_points(out, space, &a.out, &preds)?;
    let score = match truth {
        Some((th, trows)) => {
            if th.space != h.space {
                bail!("truth holds {} rows but the responses are {}", th.space, h.space);
            }
            let refs = space.decode_rows(trows, th.format)?;
            Some(mspe(space, &preds, &refs)?)
        }
        None => None,
    };
    print_table(
        &["space", "n", "test", "ridge", "MSPE"],
        &[vec![
            space.id().to_string(),
            x.len().to_string(),
            x_test.len().to_string(),
            model.used_ridge().to_string(),
            score.map_or("-".into(), num),
        ]],
    );
    Ok(json!({ "n": x.len(), "n_test": x_test.len(), "ridge": model.used_ridge(), "mspe": score }))
}
