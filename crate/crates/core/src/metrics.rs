//! Reconstruction fidelity: histogram densities, L1 density distance, and
//! the VAE-vs-PH-VAE comparison grid over branch counts and amplitudes.
//!
//! Density comparisons pool every scalar entry of the matrices involved: the
//! ground truth is the normalized training data, the model side the
//! reconstructed rows. Both land in [0, 1], binned identically.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::{self, EpochRow};

/// A normalized histogram over uniform bins.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// `n_bins + 1` monotone edges.
    pub bin_edges: Vec<f64>,
    /// Non-negative masses summing to 1.
    pub masses: Vec<f64>,
    pub n_samples: usize,
}

/// Histogram density over uniform bins; out-of-range samples are clipped
/// into the end bins.
pub fn histogram_density(
    samples: &[f64],
    n_bins: usize,
    range: (f64, f64),
) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::Empty {
            context: "histogram_density",
        });
    }
    if n_bins == 0 || !(range.0 < range.1) {
        return Err(Error::InvalidParam(format!(
            "histogram needs n_bins >= 1 and low < high, got {n_bins} bins over {range:?}"
        )));
    }
    let (low, high) = range;
    let width = (high - low) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        let i = ((x - low) / width).floor() as isize;
        let i = i.clamp(0, n_bins as isize - 1) as usize;
        counts[i] += 1;
    }
    let n = samples.len();
    Ok(DensityEstimate {
        bin_edges: (0..=n_bins).map(|i| low + i as f64 * width).collect(),
        masses: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        n_samples: n,
    })
}

/// `sum_i |p_i - q_i|`, in [0, 2]. Requires identical bin edges.
pub fn l1_density_distance(p: &DensityEstimate, q: &DensityEstimate) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(Error::BinningMismatch);
    }
    Ok(p.masses
        .iter()
        .zip(q.masses.iter())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Mean total loss over the final ten epochs (fewer if the run was shorter).
pub fn stabilized_loss(rows: &[EpochRow]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let tail = rows.len().min(10);
    rows[rows.len() - tail..]
        .iter()
        .map(|r| r.loss.total)
        .sum::<f64>()
        / tail as f64
}

/// Flatten a samples x features matrix into its scalar entries.
pub fn pool<S: Scalar>(rows: &[Vec<S>]) -> Vec<f64> {
    rows.iter().flatten().map(|v| v.as_f64()).collect()
}

/// One cell of the comparison grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub branches: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub l1_distance: f64,
    pub stabilized_loss: f64,
    pub wall_seconds: f64,
    /// "VAE baseline" for S = 1, "PH-VAE" otherwise.
    pub label: String,
    /// Density of the pooled reconstructions, kept for inspection output.
    #[serde(skip)]
    pub density: Option<DensityEstimate>,
}

/// Train one model per (S, A, seed) cell and measure it against the ground
/// truth density. The dataset is fixed by its own seed; cell seeds drive
/// initialization, shuffling, and noise. Cells are independent, and the
/// table is a pure function of (config, grids, seeds).
pub fn compare_models(
    run: &RunConfig,
    s_values: &[usize],
    a_values: &[f64],
    seeds: &[u64],
) -> Result<(Vec<ComparisonRow>, DensityEstimate)> {
    if s_values.is_empty() || a_values.is_empty() || seeds.is_empty() {
        return Err(Error::Empty {
            context: "compare_models grids",
        });
    }
    let n_bins = run.eval.n_bins;

    // Ground-truth density from the normalized training data.
    let raw = crate::data::generate::<f64>(&run.dataset)?;
    let normalized = crate::data::normalize_dataset(&raw.samples)?;
    let truth = histogram_density(&pool(&normalized.samples), n_bins, (0.0, 1.0))?;

    let mut rows = Vec::with_capacity(s_values.len() * a_values.len() * seeds.len());
    for &s in s_values {
        for &a in a_values {
            for &seed in seeds {
                let mut cell = run.clone();
                cell.model.branches = s;
                cell.model.amplitude = a;
                cell.model.seed = seed;
                let outcome = train::train::<f64>(&cell)?;
                let recon = train::reconstruct(
                    &cell.model,
                    &outcome.params,
                    &outcome.dataset.samples,
                    a,
                    cell.eval.n_repeats,
                    seed,
                )?;
                let density = histogram_density(&pool(&recon), n_bins, (0.0, 1.0))?;
                rows.push(ComparisonRow {
                    branches: s,
                    amplitude: a,
                    seed,
                    l1_distance: l1_density_distance(&density, &truth)?,
                    stabilized_loss: stabilized_loss(&outcome.report.epochs),
                    wall_seconds: outcome.report.wall_seconds,
                    label: if s == 1 { "VAE baseline" } else { "PH-VAE" }.to_string(),
                    density: Some(density),
                });
            }
        }
    }
    Ok((rows, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::data::Source;
    use crate::loss::LossBreakdown;
    use proptest::prelude::*;

    #[test]
    fn single_bin_takes_all_mass() {
        let d = histogram_density(&[0.5, 0.5, 0.5], 4, (0.0, 1.0)).unwrap();
        assert_eq!(d.masses, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn uniform_grid_fills_evenly() {
        // 8 samples, 4 bins, two per bin.
        let samples: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) / 8.0).collect();
        let d = histogram_density(&samples, 4, (0.0, 1.0)).unwrap();
        assert_eq!(d.masses, vec![0.25; 4]);
    }

    #[test]
    fn counting_reference() {
        let d = histogram_density(&[0.1, 0.1, 0.9], 2, (0.0, 1.0)).unwrap();
        assert!((d.masses[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.masses[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_clips_to_end_bins() {
        let d = histogram_density(&[-5.0, 5.0], 2, (0.0, 1.0)).unwrap();
        assert_eq!(d.masses, vec![0.5, 0.5]);
    }

    #[test]
    fn empty_samples_rejected() {
        assert!(histogram_density(&[], 2, (0.0, 1.0)).is_err());
    }

    #[test]
    fn l1_reference_values() {
        let p = histogram_density(&[0.2, 0.8], 2, (0.0, 1.0)).unwrap();
        assert_eq!(l1_density_distance(&p, &p).unwrap(), 0.0);

        let lo = histogram_density(&[0.2, 0.2], 2, (0.0, 1.0)).unwrap();
        let hi = histogram_density(&[0.8, 0.8], 2, (0.0, 1.0)).unwrap();
        assert_eq!(l1_density_distance(&lo, &hi).unwrap(), 2.0);

        let even = histogram_density(&[0.2, 0.8], 2, (0.0, 1.0)).unwrap();
        let skew = histogram_density(&[0.2, 0.8, 0.8, 0.8], 2, (0.0, 1.0)).unwrap();
        assert!((l1_density_distance(&even, &skew).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn l1_requires_identical_binning() {
        let p = histogram_density(&[0.5], 2, (0.0, 1.0)).unwrap();
        let q = histogram_density(&[0.5], 4, (0.0, 1.0)).unwrap();
        assert!(matches!(
            l1_density_distance(&p, &q),
            Err(Error::BinningMismatch)
        ));
    }

    #[test]
    fn stabilized_loss_is_tail_mean() {
        let rows: Vec<EpochRow> = (0..25)
            .map(|epoch| EpochRow {
                epoch,
                loss: LossBreakdown {
                    recon: 0.0,
                    kl_per_branch: vec![0.0],
                    ph: 0.0,
                    mi: 0.0,
                    total: epoch as f64,
                },
            })
            .collect();
        // Last ten epochs are 15..=24, mean 19.5.
        assert_eq!(stabilized_loss(&rows), 19.5);
    }

    #[test]
    fn single_cell_grid_produces_one_labeled_row() {
        let mut run = RunConfig::example1(Source::Uniform);
        run.model.hidden_dim = 8;
        run.model.latent_dim = 3;
        run.optimizer.epochs = 4;
        run.eval.n_repeats = 2;
        let (rows, truth) = compare_models(&run, &[1], &[1.0], &[5]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].label, "VAE baseline");
        assert!(rows[0].l1_distance >= 0.0 && rows[0].l1_distance <= 2.0);
        assert!((truth.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn comparison_is_reproducible() {
        let mut run = RunConfig::example1(Source::Uniform);
        run.model.hidden_dim = 8;
        run.model.latent_dim = 3;
        run.optimizer.epochs = 3;
        run.eval.n_repeats = 2;
        let (a, _) = compare_models(&run, &[1, 2], &[1.0], &[5]).unwrap();
        let (b, _) = compare_models(&run, &[1, 2], &[1.0], &[5]).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.l1_distance.to_bits(), y.l1_distance.to_bits());
            assert_eq!(x.stabilized_loss.to_bits(), y.stabilized_loss.to_bits());
        }
    }

    proptest! {
        #[test]
        fn masses_normalize_and_distance_is_symmetric(
            xs in proptest::collection::vec(0.0f64..1.0, 1..200),
            ys in proptest::collection::vec(0.0f64..1.0, 1..200),
        ) {
            let p = histogram_density(&xs, 20, (0.0, 1.0)).unwrap();
            let q = histogram_density(&ys, 20, (0.0, 1.0)).unwrap();
            prop_assert!((p.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let pq = l1_density_distance(&p, &q).unwrap();
            let qp = l1_density_distance(&q, &p).unwrap();
            prop_assert_eq!(pq.to_bits(), qp.to_bits());
            prop_assert!((0.0..=2.0).contains(&pq));
        }
    }
}
