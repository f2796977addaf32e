//! Run configuration: one JSON document describing the dataset, model,
//! optimizer, and evaluation grids. The CLI can override scalar fields with
//! flags; the full config is echoed into every run report so a run can be
//! reproduced from its artifacts alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSpec, DistParams, Source};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Histogram bins for density comparison.
    pub n_bins: usize,
    /// Forward repeats when reconstructing (fresh noise each repeat).
    pub n_repeats: usize,
    /// Run seeds for the comparison grid.
    pub seeds: Vec<u64>,
    /// Branch counts to sweep.
    pub s_grid: Vec<usize>,
    /// Amplitudes to sweep.
    pub a_grid: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.optimizer.batch_size == 0 {
            return Err(Error::Config("optimizer.batch_size must be >= 1".into()));
        }
        if !self.optimizer.lr.is_finite() || self.optimizer.lr < 0.0 {
            return Err(Error::Config(format!(
                "optimizer.lr must be finite and >= 0, got {}",
                self.optimizer.lr
            )));
        }
        if self.eval.n_bins == 0 || self.eval.n_repeats == 0 {
            return Err(Error::Config("eval.n_bins and eval.n_repeats must be >= 1".into()));
        }
        if self.eval.seeds.is_empty() || self.eval.s_grid.is_empty() || self.eval.a_grid.is_empty()
        {
            return Err(Error::Config("eval grids must be non-empty".into()));
        }
        if self.dataset.n_samples == 0 {
            return Err(Error::Config("dataset.n_samples must be >= 1".into()));
        }
        if let Some(m) = crate::data::feature_count(&self.dataset) {
            if m != self.model.input_dim {
                return Err(Error::Config(format!(
                    "model.input_dim is {} but the dataset provides {} features",
                    self.model.input_dim, m
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// The desk-scale defaults: 20 feature sets of 50 points, dims
    /// 20/256/10, S = 3, batch 5, lr 5e-4, 100 epochs.
    pub fn example1(source: Source) -> Self {
        RunConfig {
            dataset: DatasetSpec {
                source,
                n_samples: 50,
                n_features: 20,
                seed: 7,
                params: DistParams::default(),
            },
            model: ModelConfig {
                input_dim: 20,
                hidden_dim: 256,
                latent_dim: 10,
                branches: 3,
                amplitude: 1.0,
                encoder_activation: crate::autodiff::Activation::Relu,
                decoder_activation: crate::autodiff::Activation::Sigmoid,
                decoder_hidden_dim: None,
                tied_encoders: false,
                seed: 1,
            },
            optimizer: OptimizerConfig {
                lr: 5e-4,
                epochs: 100,
                batch_size: 5,
            },
            eval: EvalConfig {
                n_bins: 20,
                n_repeats: 100,
                seeds: (1..=10).collect(),
                s_grid: vec![1, 2, 3],
                a_grid: vec![1.0, 3.0, 5.0],
            },
            output_dir: PathBuf::from("runs/example1"),
        }
    }

    /// Defaults for the 2-D mixture datasets: two input features, the same
    /// optimizer settings as the 1-D experiments.
    pub fn pathology(source: Source) -> Self {
        let mut config = Self::example1(source);
        config.dataset.n_samples = 500;
        config.dataset.n_features = 2;
        config.model.input_dim = 2;
        config.output_dir = PathBuf::from("runs/pathology");
        config
    }
}
