//! JSON model files: architecture, flattened parameters and scaling.
//!
//! Parameters are flattened layer by layer, each layer's weight matrix in
//! row-major order (one row per output unit) followed by its biases.
//! Floats are written in shortest round-trip form, so loading a saved
//! model reproduces it bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{param_count, InverseModel, Network, NormParams};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub weights: Vec<f64>,
    pub norm: NormParams,
}

impl ModelFile {
    pub fn from_model(m: &InverseModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            layer_sizes: m.net.sizes().to_vec(),
            hidden_activation: "tanh".into(),
            output_activation: "linear".into(),
            weights: m.net.flatten(),
            norm: m.norm,
        }
    }

    pub fn into_model(self) -> Result<InverseModel> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Contract(format!(
                "unsupported model schema_version {}",
                self.schema_version
            )));
        }
        if self.hidden_activation != "tanh" || self.output_activation != "linear" {
            return Err(Error::Contract(format!(
                "unsupported activations {}/{}",
                self.hidden_activation, self.output_activation
            )));
        }
        let expected = param_count(&self.layer_sizes);
        if self.weights.len() != expected {
            return Err(Error::Contract(format!(
                "{} weights for layer sizes {:?}, expected {expected}",
                self.weights.len(),
                self.layer_sizes
            )));
        }
        let net = Network::unflatten(&self.layer_sizes, &self.weights)?;
        let norm = NormParams {
            input: crate::nn::MinMax::new(self.norm.input.min, self.norm.input.max)?,
            output: crate::nn::MinMax::new(self.norm.output.min, self.norm.output.max)?,
        };
        Ok(InverseModel { net, norm })
    }
}

pub fn to_json(m: &InverseModel) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_model(m)).expect("model serialises");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> std::result::Result<InverseModel, String> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    file.into_model().map_err(|e| e.to_string())
}

pub fn save(path: &Path, m: &InverseModel) -> Result<()> {
    super::write_atomic(path, to_json(m).as_bytes())
}

pub fn load(path: &Path) -> Result<InverseModel> {
    let text = super::read_to_string(path)?;
    from_json(&text).map_err(|e| super::format_err(path, e))
}
