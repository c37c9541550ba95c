//! ReLU multilayer perceptrons: validation, JSON persistence, seeded
//! generation and content digests.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MODEL_FORMAT: &str = "babnd-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub relu: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: Option<u64>,
    pub widths: Vec<usize>,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    meta: ModelMeta,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        Self::with_seed(layers, None)
    }

    fn with_seed(layers: Vec<Layer>, seed: Option<u64>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidModel("model has no layers".into()));
        };
        if last.relu {
            return Err(Error::InvalidModel("final layer must be linear".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: bias has {} entries for {} rows",
                    layer.bias.len(),
                    layer.weight.rows()
                )));
            }
            if i > 0 && layer.weight.cols() != layers[i - 1].weight.rows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    layer.weight.cols(),
                    i - 1,
                    layers[i - 1].weight.rows()
                )));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFiniteWeight { layer: i });
            }
        }
        let mut widths = vec![layers[0].weight.cols()];
        widths.extend(layers.iter().map(|l| l.weight.rows()));
        let digest = digest_layers(&layers);
        Ok(Self { layers, meta: ModelMeta { seed, widths, digest } })
    }

    /// Single linear layer computing `x' = x + tile(u)` for `points` points of
    /// dimension `point_dim`. Under either feature convention the state moves
    /// rigidly with the action.
    pub fn identity_dynamics(point_dim: usize, points: usize) -> Result<Self> {
        let s = point_dim * points;
        let mut weight = Matrix::zeros(s, s + point_dim);
        for i in 0..s {
            weight.set(i, i, 1.0);
            weight.set(i, s + i % point_dim, 1.0);
        }
        Self::new(vec![Layer { weight, bias: vec![0.0; s], relu: false }])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn digest(&self) -> &str {
        &self.meta.digest
    }

    pub fn input_dim(&self) -> usize {
        self.meta.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.meta.widths.last().expect("non-empty widths")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.rows() * l.weight.cols() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.weight.matvec(&h)?;
            for (v, b) in h.iter_mut().zip(&layer.bias) {
                *v += b;
                if layer.relu {
                    *v = v.max(0.0);
                }
            }
        }
        Ok(h)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            meta: FileMeta {
                seed: self.meta.seed,
                widths: self.meta.widths.clone(),
                digest: Some(self.meta.digest.clone()),
            },
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.weight.rows(),
                    cols: l.weight.cols(),
                    weight: l.weight.data().iter().map(|&v| JsonNumber::Num(v)).collect(),
                    bias: l.bias.iter().map(|&v| JsonNumber::Num(v)).collect(),
                    relu: l.relu,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::InvalidModel(format!("unknown format tag {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::InvalidModel(format!("unsupported version {}", file.version)));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, lf) in file.layers.into_iter().enumerate() {
            let weight = lf.weight.iter().map(JsonNumber::value).collect::<Result<Vec<_>>>()?;
            let bias = lf.bias.iter().map(JsonNumber::value).collect::<Result<Vec<_>>>()?;
            if weight.len() != lf.rows * lf.cols {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: {}x{} weight with {} entries",
                    lf.rows,
                    lf.cols,
                    weight.len()
                )));
            }
            if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteWeight { layer: i });
            }
            layers.push(Layer { weight: Matrix::new(lf.rows, lf.cols, weight)?, bias, relu: lf.relu });
        }
        let model = Self::with_seed(layers, file.meta.seed)?;
        if let Some(recorded) = file.meta.digest {
            if recorded != model.meta.digest {
                return Err(Error::DigestMismatch { recorded, computed: model.meta.digest });
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    MlpModel::from_json(&std::fs::read_to_string(path)?)
}

/// Deterministic Glorot-uniform weights: every entry of layer `i` (weights and
/// biases) is drawn from `U[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
/// ReLU follows every layer but the last.
pub fn generate_model(seed: u64, widths: &[usize]) -> Result<MlpModel> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::InvalidModel(format!(
            "need at least two positive widths, got {widths:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = widths.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..=a)).collect();
            let bias = (0..fan_out).map(|_| rng.gen_range(-a..=a)).collect();
            Ok(Layer { weight: Matrix::new(fan_out, fan_in, data)?, bias, relu: i + 1 < n })
        })
        .collect::<Result<Vec<_>>>()?;
    MlpModel::with_seed(layers, Some(seed))
}

/// SHA-256 over each layer's shape, activation flag and little-endian weights.
fn digest_layers(layers: &[Layer]) -> String {
    let mut h = Sha256::new();
    for l in layers {
        h.update((l.weight.rows() as u64).to_le_bytes());
        h.update((l.weight.cols() as u64).to_le_bytes());
        h.update([u8::from(l.relu)]);
        for v in l.weight.data().iter().chain(&l.bias) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    meta: FileMeta,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct FileMeta {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    widths: Vec<usize>,
    #[serde(default)]
    digest: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weight: Vec<JsonNumber>,
    bias: Vec<JsonNumber>,
    #[serde(default)]
    relu: bool,
}

/// JSON has no NaN/Infinity literals; accept them as strings so such files
/// fail validation with a precise error instead of a parse error.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonNumber {
    Num(f64),
    Text(String),
}

impl JsonNumber {
    fn value(&self) -> Result<f64> {
        match self {
            JsonNumber::Num(v) => Ok(*v),
            JsonNumber::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidModel(format!("not a number: {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_layer_json(b2: &str) -> String {
        format!(
            r#"{{"format":"babnd-mlp","version":1,"meta":{{}},
            "layers":[
              {{"rows":2,"cols":3,"weight":[1,0,0,0,1,0],"bias":[0,0],"relu":true}},
              {{"rows":1,"cols":2,"weight":[1,1],"bias":[{b2}],"relu":false}}]}}"#
        )
    }

    #[test]
    fn shape_bookkeeping() {
        let m = MlpModel::from_json(&two_layer_json("0.5")).unwrap();
        assert_eq!(m.input_dim(), 3);
        assert_eq!(m.output_dim(), 1);
        assert_eq!(m.forward(&[1.0, -2.0, 7.0]).unwrap(), vec![1.5]);
    }

    #[test]
    fn nan_bias_is_rejected() {
        let err = MlpModel::from_json(&two_layer_json("\"NaN\"")).unwrap_err();
        assert!(matches!(err, Error::NonFiniteWeight { layer: 1 }), "{err}");
    }

    #[test]
    fn broken_chain_is_rejected() {
        let text = two_layer_json("0").replace(r#""rows":1,"cols":2,"weight":[1,1]"#, r#""rows":1,"cols":3,"weight":[1,1,1]"#);
        assert!(matches!(MlpModel::from_json(&text), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn trailing_relu_is_rejected() {
        let text = two_layer_json("0").replace(r#""relu":false"#, r#""relu":true"#);
        assert!(MlpModel::from_json(&text).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_model(3, &[4, 8, 2]).unwrap();
        let b = generate_model(3, &[4, 8, 2]).unwrap();
        let c = generate_model(4, &[4, 8, 2]).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert!(generate_model(1, &[4]).is_err());
        assert!(generate_model(1, &[4, 0, 1]).is_err());
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let widths = [10usize, 128, 256, 256, 128, 8];
        let m = generate_model(0, &widths).unwrap();
        let expected: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        assert_eq!(expected, 10 * 128 + 128 + 128 * 256 + 256 + 256 * 256 + 256 + 256 * 128 + 128 + 128 * 8 + 8);
        assert_eq!(m.parameter_count(), expected);
    }

    #[test]
    fn tampered_digest_is_detected() {
        let m = generate_model(5, &[2, 3, 1]).unwrap();
        let text = m.to_json().unwrap().replace(m.digest(), &"0".repeat(64));
        assert!(matches!(MlpModel::from_json(&text), Err(Error::DigestMismatch { .. })));
    }
}
