//! CSV row formats for predictors and responses, with JSON sidecar headers.
//!
//! A response file `Y.csv` is described by `Y.json` next to it, e.g.
//! `{"space":"wasserstein1d","M":100}` or `{"space":"spd-bw","l":2}`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, E2mError, Result};
use crate::geometry::{MetricSpace, SpaceId};
use crate::scalar::Real;
use crate::space::{
    BwSolveConfig,
    laplacian_from_directed, laplacian_from_edges, quantile_from_samples, GraphLaplacian, Network, ProbGrid, QuantileVec, SpdBw,
    SpdMatrix, SpdPower, Wasserstein1d,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RowFormat {
    /// The space's native row layout.
    #[default]
    Native,
    /// Raw samples per row (distributions only).
    Samples,
    /// Full `V×V` directed adjacency per row (networks only).
    Adjacency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataHeader {
    pub space: SpaceId,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Barycenter iteration cap for spd-bw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "is_native")]
    pub format: RowFormat,
}

fn is_native(f: &RowFormat) -> bool {
    *f == RowFormat::Native
}

impl DataHeader {
    pub fn new(space: SpaceId) -> Self {
        Self { space, m: None, v: None, l: None, alpha: None, max_iter: None, format: RowFormat::Native }
    }

    fn require(&self, value: Option<usize>, key: &str) -> Result<usize> {
        value.ok_or_else(|| invalid(format!("{} header needs \"{key}\"", self.space)))
    }
}

/// Encoding of a space's points as flat CSV rows.
pub trait RowCodec<T: Real>: MetricSpace<T> + Sized {
    fn from_header(h: &DataHeader) -> Result<Self>;

    fn header(&self) -> DataHeader;

    fn encode(&self, p: &Self::Point) -> Vec<T>;

    fn decode(&self, row: &[T], format: RowFormat) -> Result<Self::Point>;

    /// Decodes and validates every row, naming the first bad one.
    fn decode_rows(&self, rows: &[Vec<T>], format: RowFormat) -> Result<Vec<Self::Point>> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| {
                let p = self.decode(r, format).map_err(|e| E2mError::Validation {
                    what: "response row",
                    index: i,
                    reason: e.to_string(),
                })?;
                self.validate(&p).map_err(|e| E2mError::Validation {
                    what: "response row",
                    index: i,
                    reason: e.to_string(),
                })?;
                Ok(p)
            })
            .collect()
    }
}

fn unsupported(format: RowFormat, space: SpaceId) -> E2mError {
    invalid(format!("row format {format:?} is not available for {space}"))
}

fn native_only(format: RowFormat, space: SpaceId) -> Result<()> {
    if format != RowFormat::Native {
        return Err(unsupported(format, space));
    }
    Ok(())
}

impl<T: Real> RowCodec<T> for Wasserstein1d {
    fn from_header(h: &DataHeader) -> Result<Self> {
        let m = h.m.unwrap_or(ProbGrid::DEFAULT_M);
        Ok(Wasserstein1d::new(ProbGrid::new(m)?))
    }

    fn header(&self) -> DataHeader {
        DataHeader { m: Some(self.grid.len()), ..DataHeader::new(SpaceId::Wasserstein1d) }
    }

    fn encode(&self, p: &QuantileVec<T>) -> Vec<T> {
        p.values().to_vec()
    }

    fn decode(&self, row: &[T], format: RowFormat) -> Result<QuantileVec<T>> {
        match format {
            RowFormat::Samples => quantile_from_samples(row, self.grid),
            RowFormat::Native => {
                if row.len() != self.grid.len() {
                    return Err(dim(format!("{} quantiles, grid has {}", row.len(), self.grid.len())));
                }
                QuantileVec::new(row.to_vec())
            }
            RowFormat::Adjacency => Err(unsupported(format, SpaceId::Wasserstein1d)),
        }
    }
}

impl<T: Real> RowCodec<T> for Network {
    fn from_header(h: &DataHeader) -> Result<Self> {
        Ok(Network::new(h.require(h.v, "V")?))
    }

    fn header(&self) -> DataHeader {
        DataHeader { v: Some(self.nodes), ..DataHeader::new(SpaceId::Network) }
    }

    fn encode(&self, p: &GraphLaplacian<T>) -> Vec<T> {
        p.upper_triangle()
    }

    fn decode(&self, row: &[T], format: RowFormat) -> Result<GraphLaplacian<T>> {
        let l = match format {
            RowFormat::Native => laplacian_from_edges(row, self.nodes)?,
            RowFormat::Adjacency => laplacian_from_directed(row, self.nodes)?,
            RowFormat::Samples => return Err(unsupported(format, SpaceId::Network)),
        };
        self.check_cap(&l)?;
        Ok(l)
    }
}

impl<T: Real> RowCodec<T> for SpdPower {
    fn from_header(h: &DataHeader) -> Result<Self> {
        SpdPower::with_alpha(h.require(h.l, "l")?, h.alpha.unwrap_or(0.5))
    }

    fn header(&self) -> DataHeader {
        DataHeader {
            l: Some(self.l),
            alpha: (self.alpha != 0.5).then_some(self.alpha),
            ..DataHeader::new(SpaceId::SpdPower)
        }
    }

    fn encode(&self, p: &SpdMatrix<T>) -> Vec<T> {
        p.lower_triangle()
    }

    fn decode(&self, row: &[T], format: RowFormat) -> Result<SpdMatrix<T>> {
        native_only(format, SpaceId::SpdPower)?;
        SpdMatrix::from_lower_triangle(self.l, row)
    }
}

impl<T: Real> RowCodec<T> for SpdBw {
    fn from_header(h: &DataHeader) -> Result<Self> {
        let l = h.require(h.l, "l")?;
        match h.max_iter {
            Some(max_iter) => SpdBw::with_config(l, BwSolveConfig { max_iter, ..BwSolveConfig::default() }),
            None => Ok(SpdBw::new(l)),
        }
    }

    fn header(&self) -> DataHeader {
        let max_iter = (self.cfg.max_iter != BwSolveConfig::default().max_iter).then_some(self.cfg.max_iter);
        DataHeader { l: Some(self.l), max_iter, ..DataHeader::new(SpaceId::SpdBw) }
    }

    fn encode(&self, p: &SpdMatrix<T>) -> Vec<T> {
        p.lower_triangle()
    }

    fn decode(&self, row: &[T], format: RowFormat) -> Result<SpdMatrix<T>> {
        native_only(format, SpaceId::SpdBw)?;
        SpdMatrix::from_lower_triangle(self.l, row)
    }
}

/// `Y.csv` → `Y.json`
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn read_header(path: &Path) -> Result<DataHeader> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(serde_json::from_str(&s)?)
}

pub fn write_header(path: &Path, h: &DataHeader) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(serde_json::to_string_pretty(h)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Parses header-less numeric CSV; rows may differ in length.
pub fn parse_rows<T: Real>(reader: impl Read) -> Result<Vec<Vec<T>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<f64>().map(T::lit).map_err(|_| E2mError::Validation {
                    what: "csv row",
                    index: i,
                    reason: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_rows<T: Real>(path: &Path) -> Result<Vec<Vec<T>>> {
    parse_rows(File::open(path)?)
}

/// Rows formatted with the shortest representation that round-trips.
pub fn format_rows<T: Real>(rows: &[Vec<T>]) -> String {
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{}", v.to_f64_lossy())).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_rows<T: Real>(path: &Path, rows: &[Vec<T>]) -> Result<()> {
    File::create(path)?.write_all(format_rows(rows).as_bytes())?;
    Ok(())
}

/// Predictor matrix: every row the same length, all entries finite.
pub fn check_predictors<T: Real>(x: &[Vec<T>]) -> Result<usize> {
    let p = x.first().map(Vec::len).ok_or_else(|| invalid("empty predictor matrix"))?;
    for (i, r) in x.iter().enumerate() {
        if r.len() != p {
            return Err(E2mError::Validation { what: "predictor row", index: i, reason: format!("{} columns, expected {p}", r.len()) });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(E2mError::Validation { what: "predictor row", index: i, reason: "non-finite value".into() });
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::gaussian_quantiles;

    #[test]
    fn header_json_shapes() {
        let w: DataHeader = RowCodec::<f64>::header(&Wasserstein1d::default());
        assert_eq!(serde_json::to_string(&w).unwrap(), r#"{"space":"wasserstein1d","M":100}"#);
        let n: DataHeader = RowCodec::<f64>::header(&Network::new(10));
        assert_eq!(serde_json::to_string(&n).unwrap(), r#"{"space":"network","V":10}"#);
        let s: DataHeader = RowCodec::<f64>::header(&SpdPower::new(5));
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"space":"spd-power","l":5}"#);
        let h: DataHeader = serde_json::from_str(r#"{"space":"wasserstein1d","M":50,"format":"samples"}"#).unwrap();
        assert_eq!(h.format, RowFormat::Samples);
        assert!(serde_json::from_str::<DataHeader>(r#"{"space":"sphere"}"#).is_err());
    }

    #[test]
    fn bw_iteration_cap_survives_header() {
        let plain: DataHeader = RowCodec::<f64>::header(&SpdBw::new(2));
        assert_eq!(serde_json::to_string(&plain).unwrap(), r#"{"space":"spd-bw","l":2}"#);
        let capped = SpdBw::with_config(2, BwSolveConfig { max_iter: 300, ..BwSolveConfig::default() }).unwrap();
        let h: DataHeader = RowCodec::<f64>::header(&capped);
        assert_eq!(serde_json::to_string(&h).unwrap(), r#"{"space":"spd-bw","l":2,"max_iter":300}"#);
        let back = <SpdBw as RowCodec<f64>>::from_header(&h).unwrap();
        assert_eq!(back.cfg.max_iter, 300);
        assert!(<SpdBw as RowCodec<f64>>::from_header(&DataHeader { max_iter: Some(0), ..h }).is_err());
    }

    #[test]
    fn codec_round_trips() {
        let w = Wasserstein1d::new(ProbGrid::new(5).unwrap());
        let q = gaussian_quantiles(0.0f64, 1.0, w.grid).unwrap();
        assert_eq!(w.decode(&w.encode(&q), RowFormat::Native).unwrap(), q);
        let net = Network::new(3);
        let l = laplacian_from_edges(&[1.0f64, 0.0, 2.5], 3).unwrap();
        assert_eq!(net.decode(&net.encode(&l), RowFormat::Native).unwrap(), l);
        let spd = SpdBw::new(2);
        let a = SpdMatrix::from_lower_triangle(2, &[2.0f64, 0.5, 1.0]).unwrap();
        assert_eq!(spd.decode(&spd.encode(&a), RowFormat::Native).unwrap(), a);
    }

    #[test]
    fn decode_rows_names_bad_row() {
        let net = Network::new(2);
        let rows = vec![vec![1.0f64], vec![-1.0]];
        match net.decode_rows(&rows, RowFormat::Native) {
            Err(E2mError::Validation { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_parse_and_format() {
        let rows: Vec<Vec<f64>> = parse_rows("1,2.5,3\n-4e-3, 5,6\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.5, 3.0], vec![-4e-3, 5.0, 6.0]]);
        let back: Vec<Vec<f64>> = parse_rows(format_rows(&rows).as_bytes()).unwrap();
        assert_eq!(back, rows);
        assert!(parse_rows::<f64>("1,x\n".as_bytes()).is_err());
        assert!(check_predictors(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn samples_are_converted_on_ingest() {
        let w = Wasserstein1d::new(ProbGrid::new(2).unwrap());
        let q = w.decode(&[3.0f64, 1.0, 2.0, 4.0], RowFormat::Samples).unwrap();
        assert_eq!(q.values().len(), 2);
        assert!(w.decode(&[1.0f64, 2.0, 3.0], RowFormat::Native).is_err());
    }
}
