//! Parameter snapshots: a flat, ordered list of named arrays in a JSON
//! container. Arrays are stored as doubles, which round-trips `f64`
//! parameters exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Layer, ModelConfig, PhVaeParams};
use crate::scalar::Scalar;

pub const SNAPSHOT_FORMAT: &str = "phvae-snapshot-v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub arrays: Vec<NamedArray>,
}

impl Snapshot {
    pub fn from_params<S: Scalar>(params: &PhVaeParams<S>) -> Self {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            arrays: params
                .named_arrays()
                .into_iter()
                .map(|view| NamedArray {
                    name: view.name,
                    shape: view.shape,
                    data: view.data.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    /// Rebuild parameters for `config`, checking names and shapes.
    pub fn into_params<S: Scalar>(&self, config: &ModelConfig) -> Result<PhVaeParams<S>> {
        if self.format != SNAPSHOT_FORMAT {
            return Err(Error::Config(format!(
                "unknown snapshot format {:?}",
                self.format
            )));
        }
        let mut params = empty_params::<S>(config)?;
        let expected: Vec<String> = params
            .named_arrays()
            .iter()
            .map(|v| v.name.clone())
            .collect();
        let got: Vec<String> = self.arrays.iter().map(|a| a.name.clone()).collect();
        if expected != got {
            return Err(Error::Config(format!(
                "snapshot arrays {got:?} do not match the model layout {expected:?}"
            )));
        }
        for ((_, buf), array) in params.arrays_mut().into_iter().zip(self.arrays.iter()) {
            if buf.len() != array.data.len() {
                return Err(Error::Config(format!(
                    "snapshot array {} has {} entries, expected {}",
                    array.name,
                    array.data.len(),
                    buf.len()
                )));
            }
            for (slot, &v) in buf.iter_mut().zip(array.data.iter()) {
                *slot = S::from_f64(v);
            }
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read snapshot {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn empty_params<S: Scalar>(config: &ModelConfig) -> Result<PhVaeParams<S>> {
    config.validate()?;
    let (dec_hidden, dec_in) = match config.decoder_hidden_dim {
        Some(h) => (Some(Layer::zeros(h, config.latent_dim)), h),
        None => (None, config.latent_dim),
    };
    Ok(PhVaeParams {
        enc: (0..config.branches)
            .map(|_| Layer::zeros(config.hidden_dim, config.input_dim))
            .collect(),
        head_mu: Layer::zeros(config.latent_dim, config.hidden_dim),
        head_logvar: Layer::zeros(config.latent_dim, config.hidden_dim),
        dec_hidden,
        dec: Layer::zeros(config.input_dim, dec_in),
    })
}
