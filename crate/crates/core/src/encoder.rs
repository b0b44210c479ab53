//! Feedforward embedding network: feature vector in, 768-dimensional
//! embedding out. Hidden layers use ReLU; the output layer is affine.
//! Everything is double precision so gradient checks against finite
//! differences are meaningful.
//!
//! Models serialize to a single JSON file together with the featurizer that
//! produced their inputs. Weights are base64-encoded little-endian f64, so
//! save/load round-trips are bit-exact, and the file carries a SHA-256
//! checksum over its payload.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::repr::{FeatureVector, FittedFeaturizer};

pub const FORMAT_VERSION: u32 = 1;

/// Hidden-layer activation. Only ReLU is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub num_hidden_layers: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl EncoderConfig {
    /// Default geometry (64 hidden units, one hidden layer, 768-dim output)
    /// for a given featurizer dimension.
    pub fn with_input_dim(input_dim: usize, init_seed: u64) -> Self {
        EncoderConfig {
            input_dim,
            hidden_dim: 64,
            output_dim: 768,
            num_hidden_layers: 1,
            activation: Activation::Relu,
            init_seed,
        }
    }
}

/// One affine layer: `rows x cols` weight matrix (row-major) plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// y = W x + b
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.bias[r];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid dimension: {0} must be at least 1")]
    InvalidDimension(&'static str),
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch row {row}: input has dimension {got}, model expects {expected}")]
    BatchDimensionMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
}

impl EncoderModel {
    /// Initialize with uniform Glorot weights, `U(-s, s)` with
    /// `s = sqrt(6 / (fan_in + fan_out))`, and zero biases. Deterministic
    /// for a fixed `init_seed`.
    pub fn init(config: EncoderConfig) -> Result<EncoderModel, EncoderError> {
        for (dim, name) in [
            (config.input_dim, "input_dim"),
            (config.hidden_dim, "hidden_dim"),
            (config.output_dim, "output_dim"),
            (config.num_hidden_layers, "num_hidden_layers"),
        ] {
            if dim == 0 {
                return Err(EncoderError::InvalidDimension(name));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut layers = Vec::with_capacity(config.num_hidden_layers + 1);
        let mut fan_in = config.input_dim;
        for _ in 0..config.num_hidden_layers {
            layers.push(init_layer(config.hidden_dim, fan_in, &mut rng));
            fan_in = config.hidden_dim;
        }
        layers.push(init_layer(config.output_dim, fan_in, &mut rng));
        Ok(EncoderModel { config, layers })
    }

    /// Embed a single feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, EncoderError> {
        if x.len() != self.config.input_dim {
            return Err(EncoderError::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        let mut current = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&current, &mut next);
            if i != last {
                for v in &mut next {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Embed a batch; row `i` of the result equals `forward` on `xs[i]`.
    pub fn forward_batch(&self, xs: &[FeatureVector]) -> Result<Vec<Vec<f64>>, EncoderError> {
        xs.iter()
            .enumerate()
            .map(|(row, x)| {
                self.forward(&x.values)
                    .map_err(|_| EncoderError::BatchDimensionMismatch {
                        row,
                        expected: self.config.input_dim,
                        got: x.values.len(),
                    })
            })
            .collect()
    }

    /// Total parameter count (weights + biases).
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

fn init_layer(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseLayer {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-scale, scale);
    let weights = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    DenseLayer {
        rows,
        cols,
        weights,
        bias: vec![0.0; rows],
    }
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported model format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u32 },
    #[error("corrupt model payload: {0}")]
    CorruptPayload(String),
    #[error("model checksum mismatch (file is corrupted or was edited)")]
    ChecksumMismatch,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    w: String,
    rows: usize,
    cols: usize,
    b: String,
}

#[derive(Serialize, Deserialize)]
struct EncoderRecord {
    config: EncoderConfig,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct ModelPayload {
    featurizer: FittedFeaturizer,
    encoder: EncoderRecord,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    featurizer: FittedFeaturizer,
    encoder: EncoderRecord,
    checksum: String,
}

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn decode_f64s(text: &str, expected: usize) -> Result<Vec<f64>, ModelFileError> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| ModelFileError::CorruptPayload(format!("bad base64: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(ModelFileError::CorruptPayload(format!(
            "expected {expected} parameters ({} bytes), found {} bytes",
            expected * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModelFileError::CorruptPayload(
            "non-finite parameter".to_string(),
        ));
    }
    Ok(values)
}

fn encoder_record(model: &EncoderModel) -> EncoderRecord {
    EncoderRecord {
        config: model.config.clone(),
        layers: model
            .layers
            .iter()
            .map(|l| LayerRecord {
                w: encode_f64s(&l.weights),
                rows: l.rows,
                cols: l.cols,
                b: encode_f64s(&l.bias),
            })
            .collect(),
    }
}

fn payload_checksum(payload: &ModelPayload) -> String {
    let bytes = serde_json::to_vec(payload).expect("payload serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write model and featurizer to `path` (atomically, via temp + rename).
pub fn save_model(
    model: &EncoderModel,
    featurizer: &FittedFeaturizer,
    path: &Path,
) -> Result<(), ModelFileError> {
    let payload = ModelPayload {
        featurizer: featurizer.clone(),
        encoder: encoder_record(model),
    };
    let checksum = payload_checksum(&payload);
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        featurizer: payload.featurizer,
        encoder: payload.encoder,
        checksum,
    };
    let mut bytes = serde_json::to_vec(&file).expect("model file serializes");
    bytes.push(b'\n');
    crate::write_atomic(path, &bytes)?;
    Ok(())
}

/// Load a model file, verifying format version and checksum. Round-trips
/// with [`save_model`] bit-for-bit.
pub fn load_model(path: &Path) -> Result<(EncoderModel, FittedFeaturizer), ModelFileError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| ModelFileError::CorruptPayload(format!("invalid JSON: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ModelFileError::CorruptPayload("missing format_version".to_string()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(ModelFileError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value)
        .map_err(|e| ModelFileError::CorruptPayload(e.to_string()))?;

    let payload = ModelPayload {
        featurizer: file.featurizer,
        encoder: file.encoder,
    };
    if payload_checksum(&payload) != file.checksum {
        return Err(ModelFileError::ChecksumMismatch);
    }

    let mut layers = Vec::with_capacity(payload.encoder.layers.len());
    for record in &payload.encoder.layers {
        layers.push(DenseLayer {
            rows: record.rows,
            cols: record.cols,
            weights: decode_f64s(&record.w, record.rows * record.cols)?,
            bias: decode_f64s(&record.b, record.rows)?,
        });
    }
    let model = EncoderModel {
        config: payload.encoder.config,
        layers,
    };
    validate_shape_chain(&model)?;
    Ok((model, payload.featurizer))
}

fn validate_shape_chain(model: &EncoderModel) -> Result<(), ModelFileError> {
    let cfg = &model.config;
    let mut expected_in = cfg.input_dim;
    if model.layers.len() != cfg.num_hidden_layers + 1 {
        return Err(ModelFileError::CorruptPayload(format!(
            "expected {} layers, found {}",
            cfg.num_hidden_layers + 1,
            model.layers.len()
        )));
    }
    for (i, layer) in model.layers.iter().enumerate() {
        let expected_out = if i == model.layers.len() - 1 {
            cfg.output_dim
        } else {
            cfg.hidden_dim
        };
        if layer.cols != expected_in || layer.rows != expected_out {
            return Err(ModelFileError::CorruptPayload(format!(
                "layer {i} has shape {}x{}, expected {expected_out}x{expected_in}",
                layer.rows, layer.cols
            )));
        }
        expected_in = expected_out;
    }
    Ok(())
}
