//! Synthetic sample generators.
//!
//! All generators are pure functions of (spec, seed): identical inputs
//! produce bit-identical outputs.

use crate::data::{DatasetSpec, DistParams, RawData, Source};
use crate::error::{Error, Result};
use crate::rng::{streams, Rng};
use crate::scalar::Scalar;

/// Which of the known failure-mode datasets to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathologyCase {
    /// Five-component mixture pushed through `tanh(u) + 0.1 sin(2u)`.
    Pathology1,
    /// Three-component mixture with additive noise and `0.1 sin(u)`.
    Pathology2,
    /// Ring of Gaussian clusters, geometry taken from the config.
    Cluster,
}

/// A 2-D Gaussian mixture table. Covariances are stored row-major.
struct MixtureTable {
    means: Vec<[f64; 2]>,
    covs: Vec<[f64; 4]>,
    weights: Vec<f64>,
}

impl MixtureTable {
    fn validate(&self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        for (i, c) in self.covs.iter().enumerate() {
            let [a, b, c10, d] = *c;
            if b != c10 {
                return Err(Error::InvalidParam(format!(
                    "covariance {i} is not symmetric"
                )));
            }
            if a <= 0.0 || a * d - b * b <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "covariance {i} is not positive-definite"
                )));
            }
        }
        Ok(())
    }

    /// Lower Cholesky factors, one per component.
    fn cholesky(&self) -> Vec<[f64; 3]> {
        self.covs
            .iter()
            .map(|&[a, b, _, d]| {
                let l11 = a.sqrt();
                let l21 = b / l11;
                let l22 = (d - l21 * l21).sqrt();
                [l11, l21, l22]
            })
            .collect()
    }
}

fn pathology_1_table() -> MixtureTable {
    MixtureTable {
        means: vec![[3.0, 3.0], [-3.0, -3.0], [3.0, -3.0], [-3.0, 3.0], [0.0, 0.0]],
        covs: vec![
            [1.0, 0.8, 0.8, 1.0],
            [1.0, -0.6, -0.6, 1.0],
            [1.0, 0.3, 0.3, 1.0],
            [0.5, 0.0, 0.0, 0.5],
            [2.0, 1.5, 1.5, 2.0],
        ],
        weights: vec![0.25, 0.25, 0.2, 0.2, 0.1],
    }
}

fn pathology_2_table() -> MixtureTable {
    MixtureTable {
        means: vec![[-4.0, 0.0], [4.0, 0.0], [0.0, 4.0]],
        covs: vec![
            [1.0, 0.8, 0.8, 1.0],
            [1.0, -0.8, -0.8, 1.0],
            [0.5, 0.3, 0.3, 0.5],
        ],
        weights: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    }
}

fn cluster_table(params: &DistParams) -> Result<MixtureTable> {
    let c = &params.cluster;
    if c.n_clusters == 0 {
        return Err(Error::InvalidParam("cluster.n_clusters must be >= 1".into()));
    }
    if c.std <= 0.0 {
        return Err(Error::InvalidParam("cluster.std must be positive".into()));
    }
    let weights = if c.weights.is_empty() {
        vec![1.0 / c.n_clusters as f64; c.n_clusters]
    } else {
        if c.weights.len() != c.n_clusters {
            return Err(Error::InvalidParam(format!(
                "cluster.weights has {} entries for {} clusters",
                c.weights.len(),
                c.n_clusters
            )));
        }
        c.weights.clone()
    };
    let means = (0..c.n_clusters)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / c.n_clusters as f64;
            [c.radius * angle.cos(), c.radius * angle.sin()]
        })
        .collect();
    let var = c.std * c.std;
    let covs = vec![[var, 0.0, 0.0, var]; c.n_clusters];
    Ok(MixtureTable { means, covs, weights })
}

/// Sample the 1-D base families in the sets x points layout of the spec and
/// return them transposed to samples x features. Normal variates come from
/// Box–Muller; a log-normal draw is `exp` of a normal draw.
pub fn gen_base_distribution<S: Scalar>(spec: &DatasetSpec) -> Result<Vec<Vec<S>>> {
    if spec.n_samples == 0 || spec.n_features == 0 {
        return Err(Error::InvalidParam(
            "n_samples and n_features must be at least 1".into(),
        ));
    }
    let p = &spec.params;
    match spec.source {
        Source::Uniform => {
            if p.high <= p.low {
                return Err(Error::InvalidParam(format!(
                    "uniform bounds [{}, {}] are empty",
                    p.low, p.high
                )));
            }
        }
        Source::Normal | Source::Lognormal => {
            if p.sigma <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "sigma must be positive, got {}",
                    p.sigma
                )));
            }
        }
        _ => {
            return Err(Error::InvalidParam(
                "gen_base_distribution handles uniform, normal, and lognormal".into(),
            ))
        }
    }

    let mut rng = Rng::stream(spec.seed, streams::DATA);
    // One feature set per row, n_samples points each.
    let mut sets = vec![vec![S::zero(); spec.n_samples]; spec.n_features];
    for set in sets.iter_mut() {
        for v in set.iter_mut() {
            let draw = match spec.source {
                Source::Uniform => rng.uniform(p.low, p.high),
                Source::Normal => rng.normal(p.mu, p.sigma),
                Source::Lognormal => rng.normal(p.mu, p.sigma).exp(),
                _ => unreachable!(),
            };
            *v = S::from_f64(draw);
        }
    }
    // Transpose so each row is one sample across the feature sets.
    let mut samples = vec![vec![S::zero(); spec.n_features]; spec.n_samples];
    for (j, set) in sets.iter().enumerate() {
        for (i, &v) in set.iter().enumerate() {
            samples[i][j] = v;
        }
    }
    Ok(samples)
}

/// Sample one of the 2-D mixture datasets, with the case-specific nonlinear
/// distortion applied. Returns the points plus the component label of each
/// draw so mixture proportions can be audited.
pub fn gen_gmm_distorted<S: Scalar>(
    case: PathologyCase,
    n: usize,
    seed: u64,
    params: &DistParams,
) -> Result<RawData<S>> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    let table = match case {
        PathologyCase::Pathology1 => pathology_1_table(),
        PathologyCase::Pathology2 => pathology_2_table(),
        PathologyCase::Cluster => cluster_table(params)?,
    };
    table.validate()?;
    let chol = table.cholesky();

    let mut rng = Rng::stream(seed, streams::DATA);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.categorical(&table.weights);
        let z0 = rng.standard_normal();
        let z1 = rng.standard_normal();
        let [l11, l21, l22] = chol[k];
        let mut u = [
            table.means[k][0] + l11 * z0,
            table.means[k][1] + l21 * z0 + l22 * z1,
        ];
        match case {
            PathologyCase::Pathology1 => {
                for v in u.iter_mut() {
                    *v = v.tanh() + 0.1 * (2.0 * *v).sin();
                }
            }
            PathologyCase::Pathology2 => {
                for v in u.iter_mut() {
                    *v += params.noise_std * rng.standard_normal() + 0.1 * v.sin();
                }
            }
            PathologyCase::Cluster => {}
        }
        samples.push(vec![S::from_f64(u[0]), S::from_f64(u[1])]);
        labels.push(k);
    }
    Ok(RawData {
        samples,
        labels: Some(labels),
        weights: Some(table.weights),
    })
}
