//! JSON test vectors: `{config, tensors, expected}` records for cross-language checks.

use serde::{Deserialize, Serialize};

use super::{sparf_attention, HeadConfig, HeadTensors};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TensorSource {
    /// Standard-normal q, K, V drawn from a ChaCha8 stream in that order.
    Seed { seed: u64 },
    Explicit {
        query: Vec<f64>,
        keys: Vec<Vec<f64>>,
        values: Vec<Vec<f64>>,
    },
}

impl TensorSource {
    pub fn materialize(&self, cfg: &HeadConfig) -> Result<HeadTensors> {
        match self {
            TensorSource::Seed { seed } => Ok(HeadTensors::random(*seed, cfg.head_dim, cfg.seq_len)),
            TensorSource::Explicit { query, keys, values } => {
                HeadTensors::new(query.clone(), Matrix::from_rows(keys)?, Matrix::from_rows(values)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub out: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVector {
    pub config: HeadConfig,
    pub tensors: TensorSource,
    pub expected: Expected,
}

impl TestVector {
    /// Largest absolute deviation of `sparf_attention` from the recorded output.
    pub fn deviation(&self) -> Result<f64> {
        let t = self.tensors.materialize(&self.config)?;
        let r = sparf_attention(&t, &self.config)?;
        if r.out.len() != self.expected.out.len() {
            return Err(Error::DimensionMismatch {
                what: "expected output",
                expected: r.out.len(),
                actual: self.expected.out.len(),
            });
        }
        let out_dev = r
            .out
            .iter()
            .zip(&self.expected.out)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(out_dev.max((r.alpha - self.expected.alpha).abs()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
