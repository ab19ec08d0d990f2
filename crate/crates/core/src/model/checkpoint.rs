use serde::{Deserialize, Serialize};

use crate::error::{invalid, E2mError, Result};
use crate::geometry::SpaceId;
use crate::io::{format_rows, parse_rows, DataHeader, RowCodec, RowFormat};
use crate::model::{E2mModel, Standardizer};
use crate::nn::MlpParams;
use crate::scalar::Real;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorPayload {
    /// Row indices of the anchors in the training data.
    pub indices: Vec<usize>,
    /// Anchors in the space's CSV row format, one per line.
    pub payload_csv: String,
    pub header: DataHeader,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRecord {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    #[serde(default)]
    pub constant: Vec<bool>,
}

/// Serialized model. The head width equals the anchor count, so a checkpoint
/// cannot be reused with a different anchor set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub space: SpaceId,
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub anchors: AnchorPayload,
    pub lambda: f64,
    pub delta: f64,
    pub standardize: StandardizeRecord,
    pub seed: u64,
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn from_f64<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

impl ModelCheckpoint {
    pub fn from_model<T: Real, S: RowCodec<T>>(model: &E2mModel<T, S>) -> Self {
        let params = model.params();
        let space = model.space();
        let rows: Vec<Vec<T>> = model.anchors().iter().map(|a| space.encode(a)).collect();
        let st = model.standardizer();
        Self {
            version: CHECKPOINT_VERSION,
            space: space.id(),
            layer_dims: params.dims().to_vec(),
            weights: (0..params.layers()).map(|l| to_f64(params.weight(l))).collect(),
            biases: (0..params.layers()).map(|l| to_f64(params.bias(l))).collect(),
            anchors: AnchorPayload {
                indices: model.anchor_indices().to_vec(),
                payload_csv: format_rows(&rows),
                header: space.header(),
            },
            lambda: model.lambda(),
            delta: model.delta(),
            standardize: StandardizeRecord { mean: to_f64(&st.mean), sd: to_f64(&st.sd), constant: st.constant.clone() },
            seed: model.seed(),
        }
    }

    pub fn into_model<T: Real, S: RowCodec<T>>(&self) -> Result<E2mModel<T, S>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(E2mError::Version(self.version));
        }
        if self.anchors.header.space != self.space {
            return Err(invalid(format!("checkpoint space {} but anchor header {}", self.space, self.anchors.header.space)));
        }
        let space = S::from_header(&self.anchors.header)?;
        if space.id() != self.space {
            return Err(invalid(format!("checkpoint holds a {} model, not {}", self.space, space.id())));
        }
        let weights: Vec<Vec<T>> = self.weights.iter().map(|w| from_f64(w)).collect();
        let biases: Vec<Vec<T>> = self.biases.iter().map(|b| from_f64(b)).collect();
        let params = MlpParams::from_layers(&self.layer_dims, &weights, &biases)?;
        let rows: Vec<Vec<T>> = parse_rows(self.anchors.payload_csv.as_bytes())?;
        let anchors = space.decode_rows(&rows, RowFormat::Native)?;
        let p = self.standardize.mean.len();
        let constant = if self.standardize.constant.is_empty() { vec![false; p] } else { self.standardize.constant.clone() };
        let standardizer = Standardizer { mean: from_f64(&self.standardize.mean), sd: from_f64(&self.standardize.sd), constant };
        E2mModel::from_parts(space, params, anchors, self.anchors.indices.clone(), standardizer, self.lambda, self.delta, self.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        if let Some(ver) = v.get("version").and_then(|x| x.as_u64()) {
            if ver != u64::from(CHECKPOINT_VERSION) {
                return Err(E2mError::Version(ver as u32));
            }
        }
        Ok(serde_json::from_value(v)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{train, TrainConfig};
    use crate::rng::substream;
    use crate::space::{SpdBw, SpdMatrix};
    use rand::Rng;

    #[test]
    fn json_round_trip_preserves_predictions() {
        let space = SpdBw::new(2);
        let mut rng = substream(1, "ckpt", 0);
        let x: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<SpdMatrix<f64>> = x.iter().map(|r| SpdMatrix::from_diag(&[1.0 + r[0], 1.0 + r[1]]).unwrap()).collect();
        let cfg = TrainConfig { epochs: 4, hidden: vec![4, 4], eval_every: 2, seed: 3, ..Default::default() };
        let (model, _) = train(&space, &x, &y, &cfg).unwrap();
        let ck = ModelCheckpoint::from_model(&model);
        let json = ck.to_json().unwrap();
        assert!(json.contains("\"version\": 1") && json.contains("\"payload_csv\""));
        let back: E2mModel<f64, SpdBw> = ModelCheckpoint::from_json(&json).unwrap().into_model().unwrap();
        assert_eq!(model.params(), back.params());
        assert_eq!(model.anchors(), back.anchors());
        assert_eq!(model.standardizer(), back.standardizer());
        for xi in &x[..5] {
            assert_eq!(model.predict(xi).unwrap(), back.predict(xi).unwrap());
        }
        assert_eq!(ModelCheckpoint::from_model(&back).to_json().unwrap(), json);
    }

    #[test]
    fn version_and_space_mismatch() {
        let bad = r#"{"version":2,"space":"network"}"#;
        assert!(matches!(ModelCheckpoint::from_json(bad), Err(E2mError::Version(2))));
    }
}
