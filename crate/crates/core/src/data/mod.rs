//! Dataset construction: normalization, polynomial feature expansion,
//! batching, synthetic generators, and IDX image ingestion.
//!
//! The canonical in-memory layout is samples x features. Normalization maps
//! each feature to [0, 1] independently; the polynomial expansion then raises
//! every entry to the powers 1..=S by cumulative multiplication, one matrix
//! per power.

pub mod generate;
pub mod idx;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Declarative description of a data source.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: Source,
    /// Points per feature set for the 1-D families; total points for the
    /// 2-D mixture clouds. Ignored for IDX files.
    pub n_samples: usize,
    /// Feature count m for the 1-D families. The 2-D clouds always emit two
    /// columns; IDX files derive it from the image size.
    pub n_features: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: DistParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Uniform,
    Lognormal,
    Normal,
    #[serde(rename = "gmm_distorted_1")]
    GmmDistorted1,
    #[serde(rename = "gmm_distorted_2")]
    GmmDistorted2,
    Cluster,
    IdxFile {
        path: PathBuf,
        /// Downscale each image to `d x d` by block averaging.
        #[serde(default)]
        downscale: Option<usize>,
    },
}

/// Distribution parameters with conventional defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DistParams {
    /// Uniform bounds.
    pub low: f64,
    pub high: f64,
    /// Normal / log-normal location and scale (of the underlying normal).
    pub mu: f64,
    pub sigma: f64,
    /// Additive noise scale for the second mixture pathology.
    pub noise_std: f64,
    pub cluster: ClusterParams,
}

impl Default for DistParams {
    fn default() -> Self {
        DistParams {
            low: 0.0,
            high: 1.0,
            mu: 0.0,
            sigma: 1.0,
            noise_std: 0.1,
            cluster: ClusterParams::default(),
        }
    }
}

/// Ring-of-Gaussians layout for the cluster source. The reference layout is
/// not fixed anywhere, so the geometry is configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub n_clusters: usize,
    pub radius: f64,
    pub std: f64,
    /// Mixture weights; uniform when empty. Must sum to 1.
    pub weights: Vec<f64>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            n_clusters: 5,
            radius: 2.0,
            std: 0.1,
            weights: Vec::new(),
        }
    }
}

/// Raw generator output, before normalization.
#[derive(Clone, Debug)]
pub struct RawData<S> {
    /// samples x features.
    pub samples: Vec<Vec<S>>,
    /// Mixture component per sample, when the source is a mixture.
    pub labels: Option<Vec<usize>>,
    /// Mixture weights used, when the source is a mixture.
    pub weights: Option<Vec<f64>>,
}

/// Normalized samples plus any anomalies surfaced while normalizing.
#[derive(Clone, Debug)]
pub struct NormalizedDataset<S> {
    /// samples x features, every entry in [0, 1].
    pub samples: Vec<Vec<S>>,
    /// Per-feature (min, max) of the raw data, for de-normalization.
    pub feature_ranges: Vec<(f64, f64)>,
    /// One entry per degenerate (constant) feature.
    pub flags: Vec<String>,
}

/// A normalized, polynomially expanded minibatch.
///
/// `x_powers[s]` holds the elementwise power `x^(s+1)` of the batch,
/// `x_powers[0]` being the reconstruction target.
#[derive(Clone, Debug)]
pub struct ExpandedBatch<S> {
    pub x_powers: Vec<Vec<Vec<S>>>,
}

impl<S: Scalar> ExpandedBatch<S> {
    pub fn max_power(&self) -> usize {
        self.x_powers.len()
    }

    pub fn batch_size(&self) -> usize {
        self.x_powers[0].len()
    }

    pub fn n_features(&self) -> usize {
        self.x_powers[0].first().map_or(0, Vec::len)
    }

    /// The s = 1 matrix, which the decoder reconstructs.
    pub fn target(&self) -> &[Vec<S>] {
        &self.x_powers[0]
    }

    /// Power slices for one sample, outermost index s.
    pub fn sample_powers(&self, i: usize) -> Vec<&[S]> {
        self.x_powers.iter().map(|m| m[i].as_slice()).collect()
    }
}

/// Map a feature vector to [0, 1]. A constant vector maps to all zeros and
/// reports `degenerate = true` instead of erroring, so batch shapes survive.
pub fn minmax_normalize<S: Scalar>(y: &[S]) -> Result<(Vec<S>, bool)> {
    if y.is_empty() {
        return Err(Error::Empty {
            context: "minmax_normalize",
        });
    }
    for (i, v) in y.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "minmax_normalize input".into(),
                index: i,
            });
        }
    }
    let mut lo = y[0];
    let mut hi = y[0];
    for &v in y.iter().skip(1) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return Ok((vec![S::zero(); y.len()], true));
    }
    let span = hi - lo;
    Ok((y.iter().map(|&v| (v - lo) / span).collect(), false))
}

/// Normalize each feature (column) of a samples x features matrix.
pub fn normalize_dataset<S: Scalar>(samples: &[Vec<S>]) -> Result<NormalizedDataset<S>> {
    if samples.is_empty() {
        return Err(Error::Empty {
            context: "normalize_dataset",
        });
    }
    let n = samples.len();
    let m = samples[0].len();
    let mut out = vec![vec![S::zero(); m]; n];
    let mut flags = Vec::new();
    let mut ranges = Vec::with_capacity(m);
    let mut col = vec![S::zero(); n];
    for j in 0..m {
        for (i, row) in samples.iter().enumerate() {
            col[i] = row[j];
        }
        let lo = col.iter().copied().fold(col[0], S::min).as_f64();
        let hi = col.iter().copied().fold(col[0], S::max).as_f64();
        ranges.push((lo, hi));
        let (norm, degenerate) = minmax_normalize(&col)?;
        if degenerate {
            flags.push(format!("constant feature {j}: normalized to zeros"));
        }
        for (i, v) in norm.into_iter().enumerate() {
            out[i][j] = v;
        }
    }
    Ok(NormalizedDataset {
        samples: out,
        feature_ranges: ranges,
        flags,
    })
}

/// Undo [`normalize_dataset`] for reporting in the raw coordinate system.
pub fn denormalize<S: Scalar>(normalized: &[Vec<S>], ranges: &[(f64, f64)]) -> Vec<Vec<S>> {
    normalized
        .iter()
        .map(|row| {
            row.iter()
                .zip(ranges.iter())
                .map(|(&v, &(lo, hi))| S::from_f64(lo) + v * S::from_f64(hi - lo))
                .collect()
        })
        .collect()
}

/// Expand a normalized batch into its elementwise powers `x^1 .. x^S`,
/// computed by cumulative multiplication.
pub fn polynomial_expand<S: Scalar>(x: &[Vec<S>], max_power: usize) -> Result<ExpandedBatch<S>> {
    if max_power == 0 {
        return Err(Error::InvalidParam("max power S must be at least 1".into()));
    }
    if x.is_empty() {
        return Err(Error::Empty {
            context: "polynomial_expand",
        });
    }
    let mut x_powers = Vec::with_capacity(max_power);
    x_powers.push(x.to_vec());
    for s in 1..max_power {
        let prev = &x_powers[s - 1];
        let next: Vec<Vec<S>> = prev
            .iter()
            .zip(x.iter())
            .map(|(p, base)| p.iter().zip(base.iter()).map(|(&a, &b)| a * b).collect())
            .collect();
        x_powers.push(next);
    }
    Ok(ExpandedBatch { x_powers })
}

/// Shuffle sample rows with a seeded Fisher–Yates pass and cut them into
/// expanded batches. The final short batch is kept.
pub fn make_batches<S: Scalar>(
    samples: &[Vec<S>],
    max_power: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<ExpandedBatch<S>>> {
    if samples.is_empty() {
        return Err(Error::Empty {
            context: "make_batches",
        });
    }
    if batch_size == 0 {
        return Err(Error::InvalidParam("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    order
        .chunks(batch_size)
        .map(|chunk| {
            let rows: Vec<Vec<S>> = chunk.iter().map(|&i| samples[i].clone()).collect();
            polynomial_expand(&rows, max_power)
        })
        .collect()
}

/// Generate the raw samples described by `spec` (samples x features layout).
pub fn generate<S: Scalar>(spec: &DatasetSpec) -> Result<RawData<S>> {
    match &spec.source {
        Source::Uniform | Source::Lognormal | Source::Normal => {
            let samples = generate::gen_base_distribution(spec)?;
            Ok(RawData {
                samples,
                labels: None,
                weights: None,
            })
        }
        Source::GmmDistorted1 => generate::gen_gmm_distorted(
            generate::PathologyCase::Pathology1,
            spec.n_samples,
            spec.seed,
            &spec.params,
        ),
        Source::GmmDistorted2 => generate::gen_gmm_distorted(
            generate::PathologyCase::Pathology2,
            spec.n_samples,
            spec.seed,
            &spec.params,
        ),
        Source::Cluster => generate::gen_gmm_distorted(
            generate::PathologyCase::Cluster,
            spec.n_samples,
            spec.seed,
            &spec.params,
        ),
        Source::IdxFile { path, downscale } => {
            let images = idx::load_idx::<S>(path, *downscale)?;
            Ok(RawData {
                samples: images.pixels,
                labels: None,
                weights: None,
            })
        }
    }
}

/// Feature count implied by the spec, when it is known without reading files.
pub fn feature_count(spec: &DatasetSpec) -> Option<usize> {
    match &spec.source {
        Source::Uniform | Source::Lognormal | Source::Normal => Some(spec.n_features),
        Source::GmmDistorted1 | Source::GmmDistorted2 | Source::Cluster => Some(2),
        Source::IdxFile { downscale, .. } => downscale.map(|d| d * d),
    }
}
