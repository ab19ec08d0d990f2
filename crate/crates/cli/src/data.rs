use std::path::Path;

use anyhow::{bail, Context, Result};
use e2m::io::{check_predictors, read_header, read_rows, sidecar_path, DataHeader, RowFormat};
use e2m::SpaceId;

use crate::args::SpaceArgs;

pub fn read_predictors(path: &Path) -> Result<Vec<Vec<f64>>> {
    let x: Vec<Vec<f64>> = read_rows(path).with_context(|| format!("reading predictors {}", path.display()))?;
    check_predictors(&x).with_context(|| format!("predictors in {}", path.display()))?;
    Ok(x)
}

fn parse_format(s: &str) -> Result<RowFormat> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .with_context(|| format!("unknown row format '{s}' (native, samples, adjacency)"))
}

/// Solves `k(k+1)/2 = len` (or `k(k-1)/2` when `strict`).
fn triangular_side(len: usize, strict: bool) -> Option<usize> {
    (1..=len + 1).find(|&k| if strict { k * (k - 1) / 2 == len } else { k * (k + 1) / 2 == len })
}

/// Header for a response file: its sidecar when present, then explicit
/// flags, then `fallback`, with sizes inferred from the row length.
pub fn resolve_header(csv: &Path, args: &SpaceArgs, fallback: Option<&DataHeader>, row_len: usize) -> Result<DataHeader> {
    let side = sidecar_path(csv);
    let flag_space = args.space.as_deref().map(str::parse::<SpaceId>).transpose()?;
    let mut h = if side.exists() {
        let h = read_header(&side).with_context(|| format!("reading header {}", side.display()))?;
        if let Some(s) = flag_space.filter(|s| *s != h.space) {
            bail!("--space {s} conflicts with {} in {}", h.space, side.display());
        }
        h
    } else if let Some(s) = flag_space {
        match fallback {
            Some(f) if f.space == s => DataHeader { format: RowFormat::Native, ..f.clone() },
            _ => DataHeader::new(s),
        }
    } else if let Some(f) = fallback {
        DataHeader { format: RowFormat::Native, ..f.clone() }
    } else {
        bail!("no header {} found; pass --space", side.display());
    };
    h.m = args.m.or(h.m);
    h.v = args.v.or(h.v);
    h.l = args.l.or(h.l);
    h.alpha = args.alpha.or(h.alpha);
    h.max_iter = args.max_iter.or(h.max_iter);
    if let Some(f) = &args.format {
        h.format = parse_format(f)?;
    }
    match (h.space, h.format) {
        (SpaceId::Wasserstein1d, RowFormat::Native) if h.m.is_none() => h.m = Some(row_len),
        (SpaceId::Network, RowFormat::Native) if h.v.is_none() => h.v = triangular_side(row_len, true),
        (SpaceId::Network, RowFormat::Adjacency) if h.v.is_none() => {
            h.v = (1..=row_len).find(|v| v * v == row_len);
        }
        (SpaceId::SpdPower | SpaceId::SpdBw, _) if h.l.is_none() => h.l = triangular_side(row_len, false),
        _ => {}
    }
    Ok(h)
}

/// Raw response rows plus their resolved header.
pub fn read_responses(path: &Path, args: &SpaceArgs, fallback: Option<&DataHeader>) -> Result<(DataHeader, Vec<Vec<f64>>)> {
    let rows: Vec<Vec<f64>> = read_rows(path).with_context(|| format!("reading responses {}", path.display()))?;
    if rows.is_empty() {
        bail!("{} holds no rows", path.display());
    }
    let h = resolve_header(path, args, fallback, rows[0].len())?;
    Ok((h, rows))
}
